// Copyright (C) 2026 The great authors
// SPDX-License-Identifier: Apache-2.0

#include "great/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "great/error.hpp"
#include "great/image_io.hpp"

namespace great::pipeline {

using ad::Mat;
using ad::Var;
using nlohmann::json;
namespace fs = std::filesystem;

// ---- config ----

PipelineConfig PipelineConfig::from_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::io, "cannot open config: " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    PipelineConfig cfg = from_json_string(text);
    // relative paths resolve against the config file location
    const fs::path base = path.parent_path();
    auto rebase = [&](fs::path& p) {
        if (!p.empty() && p.is_relative()) p = base / p;
    };
    rebase(cfg.manifest);
    rebase(cfg.cache_dir);
    rebase(cfg.checkpoint_dir);
    if (!cfg.backend.fixture_path.empty() && fs::path(cfg.backend.fixture_path).is_relative()) {
        cfg.backend.fixture_path = (base / cfg.backend.fixture_path).string();
    }
    return cfg;
}

PipelineConfig PipelineConfig::from_json_string(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorKind::parse, "config parse error: " + std::string(e.what()));
    }
    PipelineConfig c;
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.optimizer = j.value("optimizer", c.optimizer);
    c.seed = j.value("seed", c.seed);
    c.steps_per_epoch = j.value("steps_per_epoch", c.steps_per_epoch);
    if (j.contains("model")) c.model = nn::model_config_from_json(j.at("model").dump());
    c.partition = j.value("partition", c.partition);
    if (j.contains("paths")) {
        const auto& p = j.at("paths");
        c.manifest = p.value("manifest", std::string());
        c.cache_dir = p.value("cache_dir", std::string());
        c.checkpoint_dir = p.value("checkpoint_dir", std::string());
    }
    c.seen_split_ratio = j.value("seen_split_ratio", c.seen_split_ratio);
    c.held_out_objects = j.value("held_out_objects", c.held_out_objects);
    c.held_out_affordances = j.value("held_out_affordances", c.held_out_affordances);
    c.partition_seed = j.value("partition_seed", c.partition_seed);
    c.normalize_points = j.value("normalize_points", c.normalize_points);
    if (j.contains("focal")) {
        c.focal.gamma = j.at("focal").value("gamma", c.focal.gamma);
        c.focal.alpha = j.at("focal").value("alpha", c.focal.alpha);
    }
    c.dice_eps = j.value("dice_eps", c.dice_eps);
    if (j.contains("metrics")) {
        const auto& m = j.at("metrics");
        c.metric.gt_threshold = m.value("gt_threshold", c.metric.gt_threshold);
        c.metric.aiou_start = m.value("aiou_start", c.metric.aiou_start);
        c.metric.aiou_stop = m.value("aiou_stop", c.metric.aiou_stop);
        c.metric.aiou_step = m.value("aiou_step", c.metric.aiou_step);
    }
    if (j.contains("prompts")) {
        const auto prompts = j.at("prompts").get<std::vector<std::string>>();
        if (prompts.size() != 4) throw Error(ErrorKind::config, "prompts must list exactly 4 templates");
        for (size_t i = 0; i < 4; ++i) c.prompts.steps[i] = prompts[i];
    }
    if (j.contains("backend")) {
        const auto& b = j.at("backend");
        const std::string kind = b.value("kind", std::string("fixture"));
        if (kind == "http") {
            c.backend.kind = mllm::BackendConfig::Kind::http;
        } else if (kind == "fixture") {
            c.backend.kind = mllm::BackendConfig::Kind::fixture;
        } else {
            throw Error(ErrorKind::config, "backend.kind must be http or fixture");
        }
        c.backend.base_url = b.value("base_url", c.backend.base_url);
        c.backend.auth_token_env = b.value("auth_token_env", c.backend.auth_token_env);
        c.backend.model_name = b.value("model_name", c.backend.model_name);
        c.backend.fixture_path = b.value("fixture_path", c.backend.fixture_path);
        c.backend.max_retries = b.value("max_retries", c.backend.max_retries);
        c.backend.timeout_s = b.value("timeout_s", c.backend.timeout_s);
        c.backend.retry_backoff_s = b.value("retry_backoff_s", c.backend.retry_backoff_s);
        c.backend.concurrency = b.value("concurrency", c.backend.concurrency);
    }
    c.validate();
    return c;
}

std::string PipelineConfig::to_json_string() const {
    json j;
    j["epochs"] = epochs;
    j["batch_size"] = batch_size;
    j["learning_rate"] = learning_rate;
    j["optimizer"] = optimizer;
    j["seed"] = seed;
    j["steps_per_epoch"] = steps_per_epoch;
    j["model"] = json::parse(nn::to_json_string(model));
    j["partition"] = partition;
    j["paths"] = {{"manifest", manifest.string()},
                  {"cache_dir", cache_dir.string()},
                  {"checkpoint_dir", checkpoint_dir.string()}};
    j["seen_split_ratio"] = seen_split_ratio;
    j["held_out_objects"] = held_out_objects;
    j["held_out_affordances"] = held_out_affordances;
    j["partition_seed"] = partition_seed;
    j["normalize_points"] = normalize_points;
    j["focal"] = {{"gamma", focal.gamma}, {"alpha", focal.alpha}};
    j["dice_eps"] = dice_eps;
    j["metrics"] = {{"gt_threshold", metric.gt_threshold},
                    {"aiou_start", metric.aiou_start},
                    {"aiou_stop", metric.aiou_stop},
                    {"aiou_step", metric.aiou_step}};
    j["prompts"] = prompts.steps;
    j["backend"] = {{"kind", backend.kind == mllm::BackendConfig::Kind::http ? "http" : "fixture"},
                    {"base_url", backend.base_url},
                    {"auth_token_env", backend.auth_token_env},
                    {"model_name", backend.model_name},
                    {"fixture_path", backend.fixture_path},
                    {"max_retries", backend.max_retries},
                    {"timeout_s", backend.timeout_s},
                    {"retry_backoff_s", backend.retry_backoff_s},
                    {"concurrency", backend.concurrency}};
    return j.dump(2);
}

void PipelineConfig::validate() const {
    if (epochs < 1 || batch_size < 1 || learning_rate <= 0.0) {
        throw Error(ErrorKind::config, "epochs, batch_size and learning_rate must be positive");
    }
    if (optimizer != "adam") throw Error(ErrorKind::config, "unsupported optimizer: " + optimizer);
    if (partition != "seen" && partition != "unseen_object" && partition != "unseen_affordance") {
        throw Error(ErrorKind::config, "unknown partition name: " + partition);
    }
    if (seen_split_ratio <= 0.0 || seen_split_ratio >= 1.0) {
        throw Error(ErrorKind::config, "seen_split_ratio must be in (0,1)");
    }
    model.validate();
}

// ---- forward ----

AffordancePrediction ForwardResult::prediction() const {
    AffordancePrediction p;
    p.phi = phi.val().row(0).transpose();
    return p;
}

namespace {

template <typename Fn>
auto stage(const char* name, Fn&& fn) {
    try {
        return fn();
    } catch (const Error& e) {
        throw Error(e.kind(), std::string(name) + ": " + e.what());
    }
}

}  // namespace

ForwardResult forward(const data::PairedSample& sample, const KnowledgeRecord& record,
                      const nn::ParamStore& store, const nn::ModelConfig& config,
                      std::shared_ptr<const nn::PointGeometry> geometry) {
    if (record.image_id != sample.image.id) {
        throw Error(ErrorKind::argument, "knowledge record belongs to image '" + record.image_id +
                                             "', sample image is '" + sample.image.id + "'");
    }
    ForwardResult r;
    r.tape = std::make_unique<ad::Tape>();
    r.params = std::make_unique<nn::Binder>(*r.tape, store);
    ad::Tape& tape = *r.tape;
    nn::Binder& params = *r.params;

    r.image_features = stage("image_encode", [&] { return nn::image_encode(tape, sample.image, params, config); });
    r.pyramid = stage("point_encode", [&] {
        if (!geometry) {
            geometry = std::make_shared<nn::PointGeometry>(
                nn::compute_point_geometry(sample.points.coords, config));
        }
        return nn::point_encode(tape, geometry, params, config);
    });
    std::tie(r.knowledge_obj, r.knowledge_aff) =
        stage("encode_knowledge", [&] { return knowledge::encode_knowledge(tape, record, params, config); });
    std::tie(r.integrated_obj, r.integrated_aff) = stage("integrate_knowledge", [&] {
        return knowledge::integrate_knowledge(tape, r.knowledge_obj, r.knowledge_aff, params, config);
    });
    std::tie(r.co_points, r.co_knowledge) = stage("co_represent", [&] {
        return cmafm::co_represent(tape, r.pyramid.deepest, r.integrated_obj, params, config);
    });
    r.injected = stage("inject_geometry", [&] {
        return cmafm::inject_geometry(tape, r.co_points, r.co_knowledge, params, config);
    });
    r.point_fused = stage("upsample_points", [&] {
        return cmafm::upsample_points(tape, r.pyramid, r.injected, params, config);
    });
    r.image_fused = stage("fuse_intention", [&] {
        return cmafm::fuse_intention(tape, r.integrated_aff, r.image_features, params, config);
    });
    r.phi = stage("decode", [&] { return decoder::decode(tape, r.image_fused, r.point_fused, params, config); });
    return r;
}

// ---- shared helpers ----

namespace {

void append_double(std::string& out, double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, res.ptr);
}

data::Partitions build_partitions(const data::Manifest& manifest, const PipelineConfig& cfg) {
    return data::make_partitions(manifest,
                                 {cfg.held_out_objects.begin(), cfg.held_out_objects.end()},
                                 {cfg.held_out_affordances.begin(), cfg.held_out_affordances.end()},
                                 cfg.partition_seed, cfg.seen_split_ratio);
}

// Knowledge records for the given image ids, strictly from the cache.
// Missing transcripts fail fast with the full id list.
std::map<std::string, KnowledgeRecord> load_records(const std::vector<std::string>& image_ids,
                                                    const fs::path& cache_dir) {
    std::map<std::string, KnowledgeRecord> records;
    std::vector<std::string> missing;
    for (const auto& id : image_ids) {
        if (auto t = mllm::cache_get(id, cache_dir)) {
            records.emplace(id, mhacot::parse_transcript(*t));
        } else {
            missing.push_back(id);
        }
    }
    if (!missing.empty()) {
        std::string list;
        for (size_t i = 0; i < missing.size(); ++i) {
            if (i) list += ", ";
            if (i == 20) {
                list += "... (" + std::to_string(missing.size() - i) + " more)";
                break;
            }
            list += missing[i];
        }
        throw Error(ErrorKind::validation,
                    "transcript cache incomplete; run `great reason` first. missing: " + list);
    }
    return records;
}

class GeometryCache {
public:
    explicit GeometryCache(const nn::ModelConfig& config) : config_(config) {}

    std::shared_ptr<const nn::PointGeometry> get(const std::string& instance_id,
                                                 const Eigen::MatrixXd& coords) {
        auto it = cache_.find(instance_id);
        if (it != cache_.end()) return it->second;
        auto g = std::make_shared<nn::PointGeometry>(nn::compute_point_geometry(coords, config_));
        cache_.emplace(instance_id, g);
        return g;
    }

private:
    const nn::ModelConfig& config_;
    std::map<std::string, std::shared_ptr<const nn::PointGeometry>> cache_;
};

}  // namespace

// ---- train ----

TrainResult train(const PipelineConfig& config) {
    config.validate();
    const data::Manifest manifest = data::load_manifest(config.manifest);
    const data::Partitions parts = build_partitions(manifest, config);
    const data::PartitionSpec& part = parts.by_name(config.partition);

    const std::vector<std::string> train_images = part.train_images(manifest);
    if (train_images.empty()) {
        throw Error(ErrorKind::validation, config.partition + ": no training images");
    }
    const auto records = load_records(train_images, config.cache_dir);

    nn::ParamStore params = nn::build_params(config.model, config.seed);
    nn::Adam adam(config.learning_rate);
    data::DataCache cache(manifest, config.model.image_size, config.normalize_points);
    GeometryCache geometry(config.model);
    Rng rng(Rng::splitmix(config.seed) ^ fnv1a64("sample"));

    const int steps = config.steps_per_epoch > 0
                          ? config.steps_per_epoch
                          : std::max<int>(1, (static_cast<int>(train_images.size()) + config.batch_size - 1) /
                                                 config.batch_size);

    fs::create_directories(config.checkpoint_dir);
    const fs::path curve_path = config.checkpoint_dir / "loss_curve.csv";
    std::string curve = "epoch,loss\n";

    TrainResult result;
    result.loss_curve_csv = curve_path;
    fs::path last_good;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        double epoch_loss = 0.0;
        int sample_count = 0;
        for (int step_i = 0; step_i < steps; ++step_i) {
            const auto batch = data::sample_batch(part, manifest, config.batch_size, rng, &cache);
            std::map<std::string, Mat> grads;
            double batch_loss = 0.0;
            for (const auto& sample : batch) {
                const KnowledgeRecord& rec = records.at(sample.image.id);
                ForwardResult fw = forward(sample, rec, params, config.model,
                                           geometry.get(sample.points.id, sample.points.coords));
                Var loss;
                try {
                    loss = decoder::total_loss(*fw.tape, fw.phi, sample.label.heatmap, config.focal,
                                               config.dice_eps);
                } catch (const Error& e) {
                    // a saturated or non-finite prediction mid-training is divergence
                    if (e.kind() != ErrorKind::domain) throw;
                    throw Error(ErrorKind::numeric,
                                "training diverged (saturated prediction) at epoch " +
                                    std::to_string(epoch) +
                                    (last_good.empty() ? ""
                                                       : "; last good checkpoint: " + last_good.string()));
                }
                fw.tape->backward(loss);
                fw.params->read_grads(grads);
                batch_loss += loss.val()(0, 0);
            }
            const double scale = 1.0 / static_cast<double>(batch.size());
            for (auto& [name, g] : grads) g *= scale;
            batch_loss *= scale;
            if (!std::isfinite(batch_loss)) {
                throw Error(ErrorKind::numeric,
                            "training diverged (non-finite loss) at epoch " + std::to_string(epoch) +
                                (last_good.empty() ? "" : "; last good checkpoint: " + last_good.string()));
            }
            adam.step(params, grads);
            epoch_loss += batch_loss * static_cast<double>(batch.size());
            sample_count += static_cast<int>(batch.size());
        }
        epoch_loss /= static_cast<double>(sample_count);
        result.epoch_losses.push_back(epoch_loss);
        curve += std::to_string(epoch);
        curve += ",";
        append_double(curve, epoch_loss);
        curve += "\n";

        char name[32];
        std::snprintf(name, sizeof(name), "epoch_%04d.ckpt", epoch);
        const fs::path ckpt = config.checkpoint_dir / name;
        nn::save_checkpoint(params, config.model, ckpt);
        last_good = ckpt;
    }

    const fs::path latest = config.checkpoint_dir / "latest.ckpt";
    nn::save_checkpoint(params, config.model, latest);
    {
        std::ofstream f(curve_path, std::ios::binary | std::ios::trunc);
        f.write(curve.data(), static_cast<std::streamsize>(curve.size()));
    }
    result.checkpoint = latest;
    return result;
}

// ---- evaluate ----

metrics::MetricReport evaluate(const fs::path& checkpoint, const std::string& partition,
                               const PipelineConfig& config, const fs::path& report_json_out) {
    auto [params, model] = nn::load_checkpoint(checkpoint);
    const data::Manifest manifest = data::load_manifest(config.manifest);
    const data::Partitions parts = build_partitions(manifest, config);
    const data::PartitionSpec& part = parts.by_name(partition);

    const auto pairs = data::pair_test_entries(part, manifest, config.seed);
    std::vector<std::string> image_ids;
    for (const auto& [img, ann] : pairs) image_ids.push_back(img);
    const auto records = load_records(image_ids, config.cache_dir);

    data::DataCache cache(manifest, model.image_size, config.normalize_points);
    GeometryCache geometry(model);

    std::vector<Eigen::VectorXd> predictions, labels;
    predictions.reserve(pairs.size());
    for (const auto& [image_id, ann_id] : pairs) {
        const data::PairedSample sample = cache.load_pair(image_id, ann_id);
        ForwardResult fw = forward(sample, records.at(image_id), params, model,
                                   geometry.get(sample.points.id, sample.points.coords));
        predictions.push_back(fw.prediction().phi);
        labels.push_back(sample.label.heatmap);
    }
    const metrics::MetricReport report = metrics::evaluate_all(predictions, labels, config.metric);
    if (!report_json_out.empty()) {
        if (report_json_out.has_parent_path()) fs::create_directories(report_json_out.parent_path());
        std::ofstream f(report_json_out, std::ios::binary | std::ios::trunc);
        const std::string text = metrics::report_to_json(report) + "\n";
        f.write(text.data(), static_cast<std::streamsize>(text.size()));
    }
    return report;
}

// ---- infer ----

InferResult infer(const fs::path& checkpoint, const fs::path& image_file, const fs::path& points_file,
                  const std::string& object_category, const PipelineConfig& config,
                  const fs::path& out_file, const fs::path& render_file) {
    if (object_category.empty()) throw Error(ErrorKind::argument, "object category must be nonempty");
    auto [params, model] = nn::load_checkpoint(checkpoint);

    const std::string image_id = image_file.stem().string();
    const InteractionImage image = io::load_interaction_image(image_file, image_id, object_category,
                                                              /*affordance=*/"", model.image_size);

    ReasoningTranscript transcript;
    if (auto cached = mllm::cache_get(image_id, config.cache_dir)) {
        transcript = *cached;
    } else if (config.backend.configured()) {
        transcript = mhacot::run_chain(image, config.backend, config.cache_dir, config.prompts);
    } else {
        throw Error(ErrorKind::validation,
                    "no cached transcript for '" + image_id +
                        "' and no backend configured; run `great reason` or set backend options");
    }
    const KnowledgeRecord record = mhacot::parse_transcript(transcript);

    const Eigen::MatrixXd raw_coords = data::load_point_annotation(points_file).first;

    data::PairedSample sample;
    sample.image = image;
    sample.points.id = points_file.stem().string();
    sample.points.object_category = object_category;
    sample.points.coords = config.normalize_points ? data::normalize_cloud(raw_coords) : raw_coords;
    sample.label.instance_id = sample.points.id;
    sample.label.heatmap = Eigen::VectorXd::Zero(raw_coords.rows());
    // forward() checks image/points category agreement through the sample
    sample.label.affordance_category = image.affordance_category;

    ForwardResult fw = forward(sample, record, params, model, nullptr);
    InferResult result;
    result.prediction = fw.prediction();
    result.output = out_file;
    data::write_point_annotation(raw_coords, result.prediction.phi, out_file);
    if (!render_file.empty()) {
        data::render_heatmap(raw_coords, result.prediction.phi, 512, render_file);
    }
    return result;
}

// ---- reason ----

ReasonSummary reason(const data::Manifest& manifest, const PipelineConfig& config) {
    ReasonSummary summary;
    std::vector<const data::ImageEntry*> missing;
    for (const auto& e : manifest.images) {
        if (mllm::cache_get(e.id, config.cache_dir)) {
            ++summary.cache_hits;
        } else {
            missing.push_back(&e);
        }
    }
    if (missing.empty()) return summary;
    fs::create_directories(config.cache_dir);

    std::mutex mu;
    std::atomic<size_t> next{0};
    const int workers = std::max(1, std::min<int>(config.backend.concurrency,
                                                  static_cast<int>(missing.size())));
    auto run = [&]() {
        while (true) {
            const size_t i = next.fetch_add(1);
            if (i >= missing.size()) break;
            const data::ImageEntry& e = *missing[i];
            try {
                const InteractionImage img = io::load_interaction_image(
                    manifest.root / e.file, e.id, e.object, e.affordance, config.model.image_size);
                mhacot::run_chain(img, config.backend, config.cache_dir, config.prompts);
                std::lock_guard<std::mutex> lock(mu);
                ++summary.reasoned;
            } catch (const std::exception& ex) {
                std::lock_guard<std::mutex> lock(mu);
                summary.failures.push_back({e.id, ex.what()});
            }
        }
    };
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(run);
    for (auto& t : pool) t.join();
    std::sort(summary.failures.begin(), summary.failures.end());
    return summary;
}

}  // namespace great::pipeline
