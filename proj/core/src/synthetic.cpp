// Copyright (C) 2026 The great authors
// SPDX-License-Identifier: Apache-2.0

#include "great/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>

#include <json.hpp>

#include "great/error.hpp"
#include "great/image_io.hpp"

namespace great::data {

using nlohmann::json;
namespace fs = std::filesystem;
using Vec3 = Eigen::RowVector3d;

namespace {

struct Part {
    std::function<Vec3(Rng&)> sample;
    int count = 0;
    std::vector<std::string> affordances;  // regions this part belongs to
};

struct Template {
    std::string name;
    std::vector<Part> parts;                 // counts sum to 2048
    std::vector<std::string> affordances;    // exactly the regions used
    std::map<std::string, std::string> region_name;  // affordance -> part description
};

Vec3 on_circle(Rng& rng, double radius, double z) {
    const double a = rng.uniform(0.0, 2.0 * M_PI);
    return {radius * std::cos(a), radius * std::sin(a), z};
}

Template make_mug() {
    Template t;
    t.name = "mug";
    t.affordances = {"grasp", "pour"};
    t.region_name = {{"grasp", "handle"}, {"pour", "rim"}};
    const double r = 0.35, h = 0.8;
    t.parts.push_back({[=](Rng& g) { return on_circle(g, r, g.uniform(-h / 2, h / 2)); }, 1248, {}});
    t.parts.push_back({[=](Rng& g) {
                           const double rr = r * std::sqrt(g.uniform());
                           return on_circle(g, rr, -h / 2);
                       },
                       300,
                       {}});
    // rim: thin ring at the top edge
    t.parts.push_back({[=](Rng& g) { return on_circle(g, r + g.uniform(-0.01, 0.01), h / 2 + g.uniform(-0.01, 0.01)); },
                       200,
                       {"pour"}});
    // handle: outer half of a torus in the x-z plane, attached to the wall
    t.parts.push_back({[=](Rng& g) {
                           const double major = 0.2, minor = 0.035;
                           const double u = g.uniform(-M_PI / 2, M_PI / 2);  // around the loop
                           const double v = g.uniform(0.0, 2.0 * M_PI);      // around the tube
                           const double ring = major + minor * std::cos(v);
                           return Vec3{r + 0.02 + ring * std::cos(u), minor * std::sin(v),
                                       ring * std::sin(u)};
                       },
                       300,
                       {"grasp"}});
    return t;
}

Template make_knife() {
    Template t;
    t.name = "knife";
    t.affordances = {"grasp", "cut"};
    t.region_name = {{"grasp", "handle"}, {"cut", "blade edge"}};
    // blade slab
    t.parts.push_back({[](Rng& g) {
                           return Vec3{g.uniform(0.0, 1.0), g.uniform(-0.012, 0.012),
                                       g.uniform(0.02, 0.2)};
                       },
                       1100,
                       {}});
    // cutting edge along the blade bottom
    t.parts.push_back({[](Rng& g) {
                           return Vec3{g.uniform(0.0, 1.0), g.uniform(-0.004, 0.004),
                                       g.uniform(-0.005, 0.02)};
                       },
                       250,
                       {"cut"}});
    // handle box
    t.parts.push_back({[](Rng& g) {
                           return Vec3{g.uniform(-0.45, 0.0), g.uniform(-0.045, 0.045),
                                       g.uniform(0.03, 0.13)};
                       },
                       698,
                       {"grasp"}});
    return t;
}

Template make_pan() {
    Template t;
    t.name = "pan";
    t.affordances = {"grasp", "pour"};
    t.region_name = {{"grasp", "handle"}, {"pour", "rim"}};
    const double r = 0.5;
    t.parts.push_back({[=](Rng& g) {
                           const double rr = r * std::sqrt(g.uniform());
                           return on_circle(g, rr, 0.0);
                       },
                       700,
                       {}});
    t.parts.push_back({[=](Rng& g) { return on_circle(g, r, g.uniform(0.0, 0.18)); }, 600, {}});
    t.parts.push_back({[=](Rng& g) { return on_circle(g, r + g.uniform(-0.01, 0.01), 0.18 + g.uniform(-0.008, 0.008)); },
                       200,
                       {"pour"}});
    // stick handle
    t.parts.push_back({[=](Rng& g) {
                           return Vec3{g.uniform(r, r + 0.6), g.uniform(-0.035, 0.035),
                                       g.uniform(0.1, 0.17)};
                       },
                       548,
                       {"grasp"}});
    return t;
}

Template lookup_template(const std::string& name) {
    if (name == "mug") return make_mug();
    if (name == "knife") return make_knife();
    if (name == "pan") return make_pan();
    throw Error(ErrorKind::generation, "unknown synthetic template: " + name);
}

struct Instance {
    Eigen::MatrixXd coords;                              // [2048 x 3]
    std::map<std::string, std::vector<int>> regions;     // affordance -> point indices
};

Instance sample_instance(const Template& t, Rng& rng) {
    int total = 0;
    for (const auto& p : t.parts) total += p.count;
    if (total != PointCloudInstance::kPoints) {
        throw Error(ErrorKind::generation, "template '" + t.name + "' does not sum to 2048 points");
    }
    Instance inst;
    inst.coords.resize(total, 3);
    // instance-level deformation: anisotropic scale, rotation about z, jitter
    const double sx = rng.uniform(0.85, 1.15);
    const double sy = rng.uniform(0.85, 1.15);
    const double sz = rng.uniform(0.85, 1.15);
    const double rot = rng.uniform(0.0, 2.0 * M_PI);
    const double ca = std::cos(rot), sa = std::sin(rot);
    int row = 0;
    for (const auto& part : t.parts) {
        for (int i = 0; i < part.count; ++i) {
            Vec3 p = part.sample(rng);
            p = {p.x() * sx, p.y() * sy, p.z() * sz};
            const double x = p.x() * ca - p.y() * sa;
            const double y = p.x() * sa + p.y() * ca;
            inst.coords.row(row) = Vec3{x + rng.normal() * 0.004, y + rng.normal() * 0.004,
                                        p.z() + rng.normal() * 0.004};
            for (const auto& aff : part.affordances) {
                inst.regions[aff].push_back(row);
            }
            ++row;
        }
    }
    for (const auto& aff : t.affordances) {
        if (inst.regions[aff].empty()) {
            throw Error(ErrorKind::generation,
                        "template '" + t.name + "' has an empty region for '" + aff + "'");
        }
    }
    return inst;
}

// nonzero only on region points: 1.0 at the region core, 0.55 at its fringe
Eigen::VectorXd region_heatmap(const Instance& inst, const std::string& affordance) {
    const auto it = inst.regions.find(affordance);
    if (it == inst.regions.end() || it->second.empty()) {
        throw Error(ErrorKind::generation, "no region for affordance: " + affordance);
    }
    const auto& idx = it->second;
    Eigen::RowVector3d centroid = Eigen::RowVector3d::Zero();
    for (int i : idx) centroid += inst.coords.row(i);
    centroid /= static_cast<double>(idx.size());
    double dmax = 0.0;
    for (int i : idx) dmax = std::max(dmax, (inst.coords.row(i) - centroid).norm());
    Eigen::VectorXd h = Eigen::VectorXd::Zero(inst.coords.rows());
    for (int i : idx) {
        const double d = (inst.coords.row(i) - centroid).norm();
        h(i) = dmax > 0.0 ? 0.55 + 0.45 * (1.0 - d / dmax) : 1.0;
    }
    return h;
}

// ---- rendering ----

void hsv_to_rgb(double hue, double s, double v, uint8_t rgb[3]) {
    const double c = v * s;
    const double hp = hue / 60.0;
    const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    if (hp < 1) { r = c; g = x; }
    else if (hp < 2) { r = x; g = c; }
    else if (hp < 3) { g = c; b = x; }
    else if (hp < 4) { g = x; b = c; }
    else if (hp < 5) { r = x; b = c; }
    else { r = c; b = x; }
    const double m = v - c;
    rgb[0] = static_cast<uint8_t>(std::lround((r + m) * 255));
    rgb[1] = static_cast<uint8_t>(std::lround((g + m) * 255));
    rgb[2] = static_cast<uint8_t>(std::lround((b + m) * 255));
}

struct Projector {
    double cx, cz, scale;
    int size;

    Projector(const Eigen::MatrixXd& coords, int image_size) : size(image_size) {
        const double xmin = coords.col(0).minCoeff(), xmax = coords.col(0).maxCoeff();
        const double zmin = coords.col(2).minCoeff(), zmax = coords.col(2).maxCoeff();
        cx = 0.5 * (xmin + xmax);
        cz = 0.5 * (zmin + zmax);
        const double span = std::max({xmax - xmin, zmax - zmin, 1e-6});
        scale = 0.72 * size / span;
    }

    std::pair<int, int> map(double x, double z) const {
        const int u = static_cast<int>(std::lround(size / 2.0 + (x - cx) * scale));
        const int v = static_cast<int>(std::lround(size / 2.0 - (z - cz) * scale));
        return {u, v};
    }
};

void put_px(io::Raster& img, int x, int y, const uint8_t rgb[3]) {
    if (x < 0 || y < 0 || x >= img.width || y >= img.height) return;
    for (int c = 0; c < 3; ++c) img.at(y, x, c) = rgb[c];
}

void draw_line(io::Raster& img, int x0, int y0, int x1, int y1, const uint8_t rgb[3]) {
    const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
        put_px(img, x0, y0, rgb);
        if (x0 == x1 && y0 == y1) break;
        const int e2 = 2 * err;
        if (e2 >= dy) { err += dy; x0 += sx; }
        if (e2 <= dx) { err += dx; y0 += sy; }
    }
}

void draw_circle(io::Raster& img, int cx, int cy, int r, const uint8_t rgb[3]) {
    for (int y = -r; y <= r; ++y) {
        for (int x = -r; x <= r; ++x) {
            if (x * x + y * y <= r * r) put_px(img, cx + x, cy + y, rgb);
        }
    }
}

void draw_stick_figure(io::Raster& img, int hx, int hy, int reach_x, int reach_y) {
    static const uint8_t red[3] = {205, 40, 40};
    draw_circle(img, hx, hy, 3, red);             // head
    draw_line(img, hx, hy + 3, hx, hy + 14, red); // torso
    draw_line(img, hx, hy + 14, hx - 5, hy + 22, red);
    draw_line(img, hx, hy + 14, hx + 5, hy + 22, red);
    draw_line(img, hx, hy + 7, reach_x, reach_y, red);  // reaching arm
    draw_line(img, hx, hy + 7, hx - 6, hy + 12, red);   // other arm
}

io::Raster render_interaction(const Instance& inst, const std::string& object,
                              const std::string& affordance, int image_size, Rng& rng) {
    io::Raster img;
    img.width = img.height = image_size;
    img.rgb.assign(static_cast<size_t>(image_size) * image_size * 3, 245);

    uint8_t obj_rgb[3];
    hsv_to_rgb(static_cast<double>(fnv1a64(object) % 360), 0.55, 0.55, obj_rgb);
    const Projector proj(inst.coords, image_size);
    for (Eigen::Index i = 0; i < inst.coords.rows(); ++i) {
        auto [u, v] = proj.map(inst.coords(i, 0), inst.coords(i, 2));
        put_px(img, u, v, obj_rgb);
    }
    // figure stands beside the region it interacts with
    const auto& idx = inst.regions.at(affordance);
    Eigen::RowVector3d c = Eigen::RowVector3d::Zero();
    for (int i : idx) c += inst.coords.row(i);
    c /= static_cast<double>(idx.size());
    auto [ru, rv] = proj.map(c.x(), c.z());
    const int side = ru >= image_size / 2 ? 1 : -1;
    const int hx = std::clamp(ru + side * (14 + rng.uniform_int(6)), 4, image_size - 5);
    const int hy = std::clamp(rv - 10 + rng.uniform_int(7), 4, image_size - 24);
    draw_stick_figure(img, hx, hy, ru, rv);
    return img;
}

// ---- fixture text ----

std::string interaction_phrase(const std::string& object, const std::string& affordance,
                               const std::string& region) {
    if (affordance == "grasp") return "holds the " + object + " firmly by the " + region;
    if (affordance == "pour") return "tilts the " + object + " so liquid flows over the " + region;
    if (affordance == "cut") return "slices downward with the " + region + " of the " + object;
    return "uses the " + region + " of the " + object;
}

std::string geometry_phrase(const std::string& region) {
    if (region == "handle") return "is a curved loop that fingers can wrap around, giving a stable grip";
    if (region == "rim") return "is a thin raised circular edge around the opening that guides liquid when tilted";
    if (region == "blade edge") return "is a long thin sharpened strip that concentrates force along a line";
    return "has a shape suited to the interaction";
}

std::array<std::string, 4> fixture_answers(const Template& t, const std::string& affordance) {
    const std::string region = t.region_name.at(affordance);
    std::string other_aff;
    for (const auto& a : t.affordances)
        if (a != affordance) other_aff = a;
    const std::string other_region = t.region_name.at(other_aff);
    std::array<std::string, 4> a;
    a[0] = "The person interacts with the " + region + " of the " + t.name + ".";
    a[1] = "The " + region + " of the " + t.name + " " + geometry_phrase(region) + ".";
    a[2] = "A person " + interaction_phrase(t.name, affordance, region) + ".";
    a[3] = "1. A person " + interaction_phrase(t.name, other_aff, other_region) +
           ".\n2. A person lifts the " + t.name + " and carries it to another place.";
    return a;
}

std::string zero_pad(int v, int width) {
    std::string s = std::to_string(v);
    while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
    return s;
}

}  // namespace

Manifest generate_synthetic(const SynthConfig& config, const fs::path& out_dir, uint64_t seed) {
    if (config.instances_per_template < 1 || config.images_per_cell < 1) {
        throw Error(ErrorKind::generation, "synthetic config requires at least 1 instance and 1 image per cell");
    }
    if (config.image_size < 32) {
        throw Error(ErrorKind::generation, "synthetic image size must be >= 32");
    }
    fs::create_directories(out_dir / "points");
    fs::create_directories(out_dir / "images");

    json manifest;
    manifest["objects"] = json::array();
    manifest["affordances"] = json::array();
    manifest["points"] = json::array();
    manifest["images"] = json::array();
    json fixtures = json::object();

    std::vector<std::string> all_affs;
    for (const auto& name : config.templates) {
        const Template t = lookup_template(name);
        manifest["objects"].push_back(name);
        for (const auto& a : t.affordances) {
            if (std::find(all_affs.begin(), all_affs.end(), a) == all_affs.end()) all_affs.push_back(a);
        }

        for (int i = 0; i < config.instances_per_template; ++i) {
            const std::string stem = name + "_" + zero_pad(i, 3);
            Rng rng(Rng::splitmix(seed) ^ fnv1a64("inst:" + stem));
            const Instance inst = sample_instance(t, rng);
            const std::string inst_file = "points/" + stem + ".txt";
            write_point_annotation(inst.coords, Eigen::VectorXd::Zero(inst.coords.rows()),
                                   out_dir / inst_file);
            json entry;
            entry["file"] = inst_file;
            entry["object"] = name;
            json labels = json::object();
            for (const auto& aff : t.affordances) {
                const std::string ann_file = "points/" + stem + "_" + aff + ".txt";
                write_point_annotation(inst.coords, region_heatmap(inst, aff), out_dir / ann_file);
                labels[aff] = ann_file;
            }
            entry["labels"] = labels;
            manifest["points"].push_back(entry);
        }

        for (const auto& aff : t.affordances) {
            for (int j = 0; j < config.images_per_cell; ++j) {
                const std::string stem = name + "_" + aff + "_" + zero_pad(j, 3);
                Rng rng(Rng::splitmix(seed) ^ fnv1a64("img:" + stem));
                const Instance shown = sample_instance(t, rng);
                const io::Raster img = render_interaction(shown, name, aff, config.image_size, rng);
                const std::string img_file = "images/" + stem + ".ppm";
                io::write_ppm(img, out_dir / img_file);
                manifest["images"].push_back({{"file", img_file}, {"object", name}, {"affordance", aff}});
                const auto answers = fixture_answers(t, aff);
                fixtures[stem] = json::array({answers[0], answers[1], answers[2], answers[3]});
            }
        }
    }
    manifest["affordances"] = all_affs;

    {
        std::ofstream f(out_dir / "fixtures.json", std::ios::trunc);
        f << fixtures.dump(2) << "\n";
    }
    {
        std::ofstream f(out_dir / "manifest.json", std::ios::trunc);
        f << manifest.dump(2) << "\n";
    }
    return load_manifest(out_dir / "manifest.json");
}

void render_heatmap(const Eigen::MatrixXd& coords, const Eigen::VectorXd& values, int image_size,
                    const fs::path& path) {
    if (coords.rows() != values.size()) {
        throw Error(ErrorKind::shape, "render_heatmap: coords/values size mismatch");
    }
    io::Raster img;
    img.width = img.height = image_size;
    img.rgb.assign(static_cast<size_t>(image_size) * image_size * 3, 245);
    const Projector proj(coords, image_size);
    // sort so high-value points draw last
    std::vector<int> order(static_cast<size_t>(coords.rows()));
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return values(a) < values(b); });
    for (int i : order) {
        const double v = std::clamp(values(i), 0.0, 1.0);
        const uint8_t rgb[3] = {static_cast<uint8_t>(std::lround(170 + 70 * v)),
                                static_cast<uint8_t>(std::lround(170 * (1.0 - v))),
                                static_cast<uint8_t>(std::lround(170 * (1.0 - v)))};
        auto [u, w] = proj.map(coords(i, 0), coords(i, 2));
        put_px(img, u, w, rgb);
    }
    io::write_ppm(img, path);
}

}  // namespace great::data
