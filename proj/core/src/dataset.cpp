// Copyright (C) 2026 The great authors
// SPDX-License-Identifier: Apache-2.0

#include "great/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "great/error.hpp"
#include "great/image_io.hpp"

namespace great::data {

using nlohmann::json;
namespace fs = std::filesystem;

const PointEntry* Manifest::find_point(const std::string& id) const {
    for (const auto& p : points)
        if (p.id == id) return &p;
    return nullptr;
}

const ImageEntry* Manifest::find_image(const std::string& id) const {
    for (const auto& i : images)
        if (i.id == id) return &i;
    return nullptr;
}

std::string annotation_id(const std::string& point_id, const std::string& affordance) {
    return point_id + "#" + affordance;
}

std::pair<std::string, std::string> split_annotation_id(const std::string& id) {
    const auto pos = id.rfind('#');
    if (pos == std::string::npos) {
        throw Error(ErrorKind::argument, "not an annotation id: " + id);
    }
    return {id.substr(0, pos), id.substr(pos + 1)};
}

namespace {

bool is_annotation(const std::string& id) { return id.find('#') != std::string::npos; }

std::vector<std::string> filter_ids(const std::vector<std::string>& ids, bool annotations) {
    std::vector<std::string> out;
    for (const auto& id : ids)
        if (is_annotation(id) == annotations) out.push_back(id);
    return out;
}

}  // namespace

std::vector<std::string> PartitionSpec::train_images(const Manifest&) const { return filter_ids(train, false); }
std::vector<std::string> PartitionSpec::test_images(const Manifest&) const { return filter_ids(test, false); }
std::vector<std::string> PartitionSpec::train_annotations(const Manifest&) const { return filter_ids(train, true); }
std::vector<std::string> PartitionSpec::test_annotations(const Manifest&) const { return filter_ids(test, true); }

const PartitionSpec& Partitions::by_name(const std::string& name) const {
    if (name == "seen") return seen;
    if (name == "unseen_object") return unseen_object;
    if (name == "unseen_affordance") return unseen_affordance;
    throw Error(ErrorKind::config, "unknown partition name: " + name);
}

// ---- manifest ----

Manifest load_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::io, "cannot open manifest: " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw Error(ErrorKind::parse, "manifest parse error: " + std::string(e.what()));
    }

    Manifest m;
    m.root = path.parent_path();
    try {
        m.objects = doc.at("objects").get<std::vector<std::string>>();
        m.affordances = doc.at("affordances").get<std::vector<std::string>>();
        for (const auto& p : doc.at("points")) {
            PointEntry e;
            e.file = p.at("file").get<std::string>();
            e.id = e.file;
            e.object = p.at("object").get<std::string>();
            for (const auto& [aff, f] : p.at("labels").items()) {
                e.labels[aff] = f.get<std::string>();
            }
            m.points.push_back(std::move(e));
        }
        for (const auto& i : doc.at("images")) {
            ImageEntry e;
            e.file = i.at("file").get<std::string>();
            e.id = fs::path(e.file).stem().string();
            e.object = i.at("object").get<std::string>();
            e.affordance = i.at("affordance").get<std::string>();
            m.images.push_back(std::move(e));
        }
    } catch (const json::exception& e) {
        throw Error(ErrorKind::parse, "manifest schema error: " + std::string(e.what()));
    }

    // validation
    const std::set<std::string> objs(m.objects.begin(), m.objects.end());
    const std::set<std::string> affs(m.affordances.begin(), m.affordances.end());
    std::set<std::pair<std::string, std::string>> point_cells, image_cells;
    std::set<std::string> image_ids;

    for (const auto& p : m.points) {
        if (!objs.count(p.object)) {
            throw Error(ErrorKind::validation,
                        "point entry '" + p.id + "' references unknown object '" + p.object + "'");
        }
        if (!fs::exists(m.root / p.file)) {
            throw Error(ErrorKind::validation, "missing point file: " + (m.root / p.file).string());
        }
        for (const auto& [aff, f] : p.labels) {
            if (!affs.count(aff)) {
                throw Error(ErrorKind::validation,
                            "point entry '" + p.id + "' references unknown affordance '" + aff + "'");
            }
            if (!fs::exists(m.root / f)) {
                throw Error(ErrorKind::validation, "missing annotation file: " + (m.root / f).string());
            }
            point_cells.insert({p.object, aff});
        }
    }
    for (const auto& i : m.images) {
        if (!objs.count(i.object)) {
            throw Error(ErrorKind::validation,
                        "image entry '" + i.file + "' references unknown object '" + i.object + "'");
        }
        if (!affs.count(i.affordance)) {
            throw Error(ErrorKind::validation,
                        "image entry '" + i.file + "' references unknown affordance '" + i.affordance + "'");
        }
        if (!fs::exists(m.root / i.file)) {
            throw Error(ErrorKind::validation, "missing image file: " + (m.root / i.file).string());
        }
        if (!image_ids.insert(i.id).second) {
            throw Error(ErrorKind::validation, "duplicate image id: " + i.id);
        }
        image_cells.insert({i.object, i.affordance});
    }
    // a cell must have both sides or neither
    for (const auto& c : image_cells) {
        if (!point_cells.count(c)) {
            throw Error(ErrorKind::validation, "cell (" + c.first + ", " + c.second +
                                                   ") has images but no point annotations");
        }
    }
    for (const auto& c : point_cells) {
        if (!image_cells.count(c)) {
            throw Error(ErrorKind::validation, "cell (" + c.first + ", " + c.second +
                                                   ") has point annotations but no images");
        }
    }
    return m;
}

// ---- point files ----

std::pair<Eigen::MatrixXd, Eigen::VectorXd> load_point_annotation(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::io, "cannot open point file: " + path.string());
    Eigen::MatrixXd coords(PointCloudInstance::kPoints, 3);
    Eigen::VectorXd heat(PointCloudInstance::kPoints);
    std::string line;
    int row = 0;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        // skip blank lines
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        if (row >= PointCloudInstance::kPoints) {
            throw Error(ErrorKind::format, path.string() + ": more than 2048 rows");
        }
        double v[4];
        const char* p = line.data();
        const char* end = line.data() + line.size();
        for (int c = 0; c < 4; ++c) {
            while (p < end && (*p == ' ' || *p == '\t' || *p == '\r')) ++p;
            const auto [next, ec] = std::from_chars(p, end, v[c]);
            if (ec != std::errc()) {
                throw Error(ErrorKind::parse, path.string() + ":" + std::to_string(lineno) +
                                                  ": non-numeric token in column " + std::to_string(c + 1));
            }
            p = next;
        }
        while (p < end && (*p == ' ' || *p == '\t' || *p == '\r')) ++p;
        if (p != end) {
            throw Error(ErrorKind::format,
                        path.string() + ":" + std::to_string(lineno) + ": expected 4 columns");
        }
        for (int c = 0; c < 4; ++c) {
            if (!std::isfinite(v[c])) {
                throw Error(ErrorKind::range, path.string() + ":" + std::to_string(lineno) + ": non-finite value");
            }
        }
        if (v[3] < 0.0 || v[3] > 1.0) {
            throw Error(ErrorKind::range, path.string() + ":" + std::to_string(lineno) +
                                              ": heatmap value outside [0,1]");
        }
        coords(row, 0) = v[0];
        coords(row, 1) = v[1];
        coords(row, 2) = v[2];
        heat(row) = v[3];
        ++row;
    }
    if (row != PointCloudInstance::kPoints) {
        throw Error(ErrorKind::format,
                    path.string() + ": expected 2048 rows, found " + std::to_string(row));
    }
    return {coords, heat};
}

namespace {

void append_double(std::string& out, double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);  // shortest round-trip form
    out.append(buf, res.ptr);
}

}  // namespace

void write_point_annotation(const Eigen::MatrixXd& coords, const Eigen::VectorXd& heatmap,
                            const fs::path& path) {
    if (coords.rows() != heatmap.size() || coords.cols() != 3) {
        throw Error(ErrorKind::shape, "write_point_annotation: coords/heatmap shape mismatch");
    }
    std::string out;
    out.reserve(static_cast<size_t>(coords.rows()) * 48);
    for (Eigen::Index i = 0; i < coords.rows(); ++i) {
        append_double(out, coords(i, 0));
        out.push_back(' ');
        append_double(out, coords(i, 1));
        out.push_back(' ');
        append_double(out, coords(i, 2));
        out.push_back(' ');
        append_double(out, heatmap(i));
        out.push_back('\n');
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(ErrorKind::io, "cannot write point file: " + path.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw Error(ErrorKind::io, "short write: " + path.string());
}

Eigen::MatrixXd normalize_cloud(const Eigen::MatrixXd& coords) {
    Eigen::MatrixXd out = coords.rowwise() - coords.colwise().mean();
    const double radius = out.rowwise().norm().maxCoeff();
    if (radius <= 0.0) {
        throw Error(ErrorKind::validation, "degenerate point cloud: all points identical");
    }
    return out / radius;
}

// ---- partitions ----

namespace {

struct Units {
    // annotation ids grouped by object category, instance-major
    std::map<std::string, std::vector<std::pair<std::string, std::vector<std::string>>>> instances_by_object;
    // image ids grouped by (object, affordance)
    std::map<std::pair<std::string, std::string>, std::vector<std::string>> images_by_cell;
};

Units collect_units(const Manifest& m) {
    Units u;
    for (const auto& p : m.points) {
        std::vector<std::string> anns;
        for (const auto& [aff, f] : p.labels) anns.push_back(annotation_id(p.id, aff));
        u.instances_by_object[p.object].push_back({p.id, std::move(anns)});
    }
    for (auto& [obj, v] : u.instances_by_object) {
        std::sort(v.begin(), v.end());
    }
    for (const auto& i : m.images) {
        u.images_by_cell[{i.object, i.affordance}].push_back(i.id);
    }
    for (auto& [cell, v] : u.images_by_cell) std::sort(v.begin(), v.end());
    return u;
}

std::string affordance_of_annotation(const std::string& ann_id) {
    return split_annotation_id(ann_id).second;
}

}  // namespace

Partitions make_partitions(const Manifest& manifest, const std::set<std::string>& held_out_objects,
                           const std::set<std::string>& held_out_affordances, uint64_t seed,
                           double seen_split_ratio) {
    const std::set<std::string> objs(manifest.objects.begin(), manifest.objects.end());
    const std::set<std::string> affs(manifest.affordances.begin(), manifest.affordances.end());
    for (const auto& o : held_out_objects) {
        if (!objs.count(o)) throw Error(ErrorKind::validation, "held-out object not in manifest: " + o);
    }
    for (const auto& a : held_out_affordances) {
        if (!affs.count(a)) throw Error(ErrorKind::validation, "held-out affordance not in manifest: " + a);
    }
    if (seen_split_ratio <= 0.0 || seen_split_ratio >= 1.0) {
        throw Error(ErrorKind::config, "seen split ratio must be in (0,1)");
    }

    const Units units = collect_units(manifest);
    Partitions parts;

    // --- seen: per-category split of instances, images split per cell ---
    {
        PartitionSpec& s = parts.seen;
        s.name = "seen";
        Rng rng(Rng::splitmix(seed) ^ 0x5eedull);
        // singleton groups go to train; otherwise both sides stay nonempty
        auto train_count = [&](size_t n) {
            if (n < 2) return n;
            const auto r = static_cast<size_t>(std::llround(seen_split_ratio * static_cast<double>(n)));
            return std::clamp<size_t>(r, 1, n - 1);
        };
        for (const auto& [obj, insts] : units.instances_by_object) {
            std::vector<size_t> order(insts.size());
            for (size_t i = 0; i < order.size(); ++i) order[i] = i;
            rng.shuffle(order);
            const size_t n_train = train_count(insts.size());
            for (size_t i = 0; i < order.size(); ++i) {
                const auto& anns = insts[order[i]].second;
                auto& side = (i < n_train) ? s.train : s.test;
                side.insert(side.end(), anns.begin(), anns.end());
            }
        }
        for (const auto& [cell, ids] : units.images_by_cell) {
            std::vector<std::string> order = ids;
            rng.shuffle(order);
            const size_t n_train = train_count(order.size());
            for (size_t i = 0; i < order.size(); ++i) {
                ((i < n_train) ? s.train : s.test).push_back(order[i]);
            }
        }
        std::sort(s.train.begin(), s.train.end());
        std::sort(s.test.begin(), s.test.end());
        if (s.train.empty()) throw Error(ErrorKind::config, "seen split produced an empty train side");
    }

    // --- unseen_object ---
    {
        PartitionSpec& s = parts.unseen_object;
        s.name = "unseen_object";
        s.held_out_objects = held_out_objects;
        // affordances present on both sides; keeping both sides inside the
        // shared set is what makes the category invariants provable
        std::set<std::string> test_affs, train_affs;
        for (const auto& [obj, insts] : units.instances_by_object) {
            for (const auto& [id, anns] : insts) {
                for (const auto& a : anns) {
                    (held_out_objects.count(obj) ? test_affs : train_affs)
                        .insert(affordance_of_annotation(a));
                }
            }
        }
        std::set<std::string> shared;
        for (const auto& a : test_affs)
            if (train_affs.count(a)) shared.insert(a);

        for (const auto& [obj, insts] : units.instances_by_object) {
            const bool held = held_out_objects.count(obj) > 0;
            for (const auto& [id, anns] : insts) {
                for (const auto& a : anns) {
                    if (!shared.count(affordance_of_annotation(a))) continue;
                    (held ? s.test : s.train).push_back(a);
                }
            }
        }
        for (const auto& [cell, ids] : units.images_by_cell) {
            if (!shared.count(cell.second)) continue;
            const bool held = held_out_objects.count(cell.first) > 0;
            auto& side = held ? s.test : s.train;
            side.insert(side.end(), ids.begin(), ids.end());
        }
        std::sort(s.train.begin(), s.train.end());
        std::sort(s.test.begin(), s.test.end());
        if (!held_out_objects.empty() && s.train.empty()) {
            throw Error(ErrorKind::config, "held-out objects empty the unseen_object training side");
        }
    }

    // --- unseen_affordance ---
    {
        PartitionSpec& s = parts.unseen_affordance;
        s.name = "unseen_affordance";
        s.held_out_affordances = held_out_affordances;
        for (const auto& [obj, insts] : units.instances_by_object) {
            for (const auto& [id, anns] : insts) {
                for (const auto& a : anns) {
                    const bool held = held_out_affordances.count(affordance_of_annotation(a)) > 0;
                    (held ? s.test : s.train).push_back(a);
                }
            }
        }
        for (const auto& [cell, ids] : units.images_by_cell) {
            const bool held = held_out_affordances.count(cell.second) > 0;
            auto& side = held ? s.test : s.train;
            side.insert(side.end(), ids.begin(), ids.end());
        }
        std::sort(s.train.begin(), s.train.end());
        std::sort(s.test.begin(), s.test.end());
        if (!held_out_affordances.empty() && s.train.empty()) {
            throw Error(ErrorKind::config, "held-out affordances empty the unseen_affordance training side");
        }
    }

    return parts;
}

void validate_partition(const PartitionSpec& spec, const Manifest& manifest) {
    std::set<std::string> train_set(spec.train.begin(), spec.train.end());
    for (const auto& id : spec.test) {
        if (train_set.count(id)) {
            throw Error(ErrorKind::validation, spec.name + ": id in both train and test: " + id);
        }
    }
    auto categories_of = [&](const std::string& id) -> std::pair<std::string, std::string> {
        if (is_annotation(id)) {
            auto [pid, aff] = split_annotation_id(id);
            const PointEntry* p = manifest.find_point(pid);
            if (!p) throw Error(ErrorKind::validation, spec.name + ": unknown point entry " + pid);
            return {p->object, aff};
        }
        const ImageEntry* e = manifest.find_image(id);
        if (!e) throw Error(ErrorKind::validation, spec.name + ": unknown image entry " + id);
        return {e->object, e->affordance};
    };

    std::set<std::string> train_objs, train_affs, test_objs, test_affs;
    for (const auto& id : spec.train) {
        auto [o, a] = categories_of(id);
        train_objs.insert(o);
        train_affs.insert(a);
    }
    for (const auto& id : spec.test) {
        auto [o, a] = categories_of(id);
        test_objs.insert(o);
        test_affs.insert(a);
    }
    if (spec.name == "unseen_object") {
        for (const auto& o : test_objs) {
            if (train_objs.count(o)) {
                throw Error(ErrorKind::validation, "unseen_object: test object appears in train: " + o);
            }
        }
        for (const auto& a : test_affs) {
            if (!train_affs.count(a)) {
                throw Error(ErrorKind::validation, "unseen_object: test affordance missing from train: " + a);
            }
        }
    } else if (spec.name == "unseen_affordance") {
        for (const auto& a : test_affs) {
            if (train_affs.count(a)) {
                throw Error(ErrorKind::validation,
                            "unseen_affordance: test affordance appears in train: " + a);
            }
        }
    }
}

// ---- sampling ----

DataCache::DataCache(const Manifest& manifest, int image_size, bool normalize_points)
    : manifest_(manifest), image_size_(image_size), normalize_points_(normalize_points) {}

const InteractionImage& DataCache::image(const std::string& image_id) {
    auto it = images_.find(image_id);
    if (it != images_.end()) return it->second;
    const ImageEntry* e = manifest_.find_image(image_id);
    if (!e) throw Error(ErrorKind::validation, "unknown image id: " + image_id);
    InteractionImage img = io::load_interaction_image(manifest_.root / e->file, e->id, e->object,
                                                      e->affordance, image_size_);
    return images_.emplace(image_id, std::move(img)).first->second;
}

const std::pair<Eigen::MatrixXd, Eigen::VectorXd>& DataCache::annotation(const std::string& ann_id) {
    auto it = annotations_.find(ann_id);
    if (it != annotations_.end()) return it->second;
    auto [pid, aff] = split_annotation_id(ann_id);
    const PointEntry* p = manifest_.find_point(pid);
    if (!p) throw Error(ErrorKind::validation, "unknown point entry: " + pid);
    auto lit = p->labels.find(aff);
    if (lit == p->labels.end()) {
        throw Error(ErrorKind::validation, "no annotation for affordance '" + aff + "' on " + pid);
    }
    auto [coords, heat] = load_point_annotation(manifest_.root / lit->second);
    if (normalize_points_) coords = normalize_cloud(coords);
    return annotations_.emplace(ann_id, std::make_pair(std::move(coords), std::move(heat))).first->second;
}

PairedSample DataCache::load_pair(const std::string& image_id, const std::string& ann_id) {
    const ImageEntry* ie = manifest_.find_image(image_id);
    if (!ie) throw Error(ErrorKind::validation, "unknown image id: " + image_id);
    auto [pid, aff] = split_annotation_id(ann_id);
    const PointEntry* pe = manifest_.find_point(pid);
    if (!pe) throw Error(ErrorKind::validation, "unknown point entry: " + pid);

    PairedSample s;
    s.image = image(image_id);
    const auto& [coords, heat] = annotation(ann_id);
    s.points.id = pid;
    s.points.object_category = pe->object;
    s.points.coords = coords;
    s.label.instance_id = pid;
    s.label.affordance_category = aff;
    s.label.heatmap = heat;
    if (s.image.affordance_category != s.label.affordance_category ||
        s.image.object_category != s.points.object_category) {
        throw Error(ErrorKind::validation, "paired sample category mismatch for image " + image_id);
    }
    return s;
}

namespace {

// train-side annotation ids grouped by cell
std::map<std::pair<std::string, std::string>, std::vector<std::string>> annotations_by_cell(
    const std::vector<std::string>& ann_ids, const Manifest& m) {
    std::map<std::pair<std::string, std::string>, std::vector<std::string>> out;
    for (const auto& id : ann_ids) {
        auto [pid, aff] = split_annotation_id(id);
        const PointEntry* p = m.find_point(pid);
        if (!p) throw Error(ErrorKind::validation, "unknown point entry: " + pid);
        out[{p->object, aff}].push_back(id);
    }
    return out;
}

}  // namespace

std::vector<PairedSample> sample_batch(const PartitionSpec& partition, const Manifest& manifest,
                                       int batch_size, Rng& rng, DataCache* cache) {
    if (batch_size < 1) throw Error(ErrorKind::argument, "batch_size must be >= 1");
    const std::vector<std::string> imgs = partition.train_images(manifest);
    if (imgs.empty()) throw Error(ErrorKind::sampling, partition.name + ": train side has no images");
    const auto cells = annotations_by_cell(partition.train_annotations(manifest), manifest);

    std::optional<DataCache> local;
    if (!cache) {
        local.emplace(manifest, 224, true);
        cache = &*local;
    }

    std::vector<PairedSample> batch;
    batch.reserve(static_cast<size_t>(batch_size));
    for (int b = 0; b < batch_size; ++b) {
        const std::string& image_id = imgs[static_cast<size_t>(rng.uniform_int(static_cast<int>(imgs.size())))];
        const ImageEntry* ie = manifest.find_image(image_id);
        const auto it = cells.find({ie->object, ie->affordance});
        if (it == cells.end() || it->second.empty()) {
            throw Error(ErrorKind::sampling, "no point instance in train side for cell (" + ie->object +
                                                 ", " + ie->affordance + ")");
        }
        const auto& anns = it->second;
        const std::string& ann = anns[static_cast<size_t>(rng.uniform_int(static_cast<int>(anns.size())))];
        batch.push_back(cache->load_pair(image_id, ann));
    }
    return batch;
}

std::vector<std::pair<std::string, std::string>> pair_test_entries(const PartitionSpec& partition,
                                                                   const Manifest& manifest,
                                                                   uint64_t seed) {
    std::vector<std::string> imgs = partition.test_images(manifest);
    std::sort(imgs.begin(), imgs.end());
    const auto cells = annotations_by_cell(partition.test_annotations(manifest), manifest);
    Rng rng(Rng::splitmix(seed) ^ 0x7e57ull);
    std::vector<std::pair<std::string, std::string>> out;
    out.reserve(imgs.size());
    for (const auto& image_id : imgs) {
        const ImageEntry* ie = manifest.find_image(image_id);
        const auto it = cells.find({ie->object, ie->affordance});
        if (it == cells.end() || it->second.empty()) {
            throw Error(ErrorKind::sampling, "no test point instance for cell (" + ie->object + ", " +
                                                 ie->affordance + ")");
        }
        const auto& anns = it->second;
        out.push_back({image_id, anns[static_cast<size_t>(rng.uniform_int(static_cast<int>(anns.size())))]});
    }
    return out;
}

}  // namespace great::data
