// Copyright (C) 2026 The great authors
// SPDX-License-Identifier: Apache-2.0
//
// great — open-vocabulary 3D affordance grounding toolkit.
// Subcommands: synth, reason, train, eval, infer.

#include <iostream>

#include "great/error.hpp"
#include "great/pipeline.hpp"

#include <CLI11.hpp>

using namespace great;

namespace {

pipeline::PipelineConfig load_config(const std::string& path) {
    if (path.empty()) return {};
    return pipeline::PipelineConfig::from_file(path);
}

int run(int argc, char** argv) {
    CLI::App app{"great: open-vocabulary 3D object affordance grounding"};
    app.require_subcommand(1);

    // --- synth ---
    auto* synth = app.add_subcommand("synth", "Generate a deterministic synthetic dataset");
    std::string synth_out;
    uint64_t synth_seed = 0;
    data::SynthConfig synth_cfg;
    synth->add_option("--out", synth_out, "Output directory")->required();
    synth->add_option("--seed", synth_seed, "Generator seed");
    synth->add_option("--instances", synth_cfg.instances_per_template, "Instances per template");
    synth->add_option("--images-per-cell", synth_cfg.images_per_cell,
                      "Images per (object, affordance) cell");
    synth->add_option("--image-size", synth_cfg.image_size, "Rendered image side length");
    synth->add_option("--templates", synth_cfg.templates, "Object templates to generate");

    // --- reason ---
    auto* reason = app.add_subcommand("reason", "Populate the reasoning transcript cache");
    std::string reason_manifest, reason_cache, reason_config;
    std::string reason_backend, reason_fixture, reason_base_url, reason_model, reason_auth_env;
    int reason_concurrency = 0;
    reason->add_option("--manifest", reason_manifest, "Manifest JSON path")->required();
    reason->add_option("--cache", reason_cache, "Transcript cache directory");
    reason->add_option("--config", reason_config, "Pipeline config JSON");
    reason->add_option("--backend", reason_backend, "Backend kind: http or fixture");
    reason->add_option("--fixture", reason_fixture, "Fixture answers JSON (fixture backend)");
    reason->add_option("--base-url", reason_base_url, "Chat endpoint base URL (http backend)");
    reason->add_option("--model", reason_model, "Model name sent to the backend");
    reason->add_option("--auth-env", reason_auth_env, "Env var holding the bearer token");
    reason->add_option("--concurrency", reason_concurrency, "Concurrent conversations");

    // --- train ---
    auto* train = app.add_subcommand("train", "Train from a config file");
    std::string train_config;
    train->add_option("--config", train_config, "Pipeline config JSON")->required();

    // --- eval ---
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a partition");
    std::string eval_checkpoint, eval_partition = "seen", eval_config, eval_out;
    eval->add_option("--checkpoint", eval_checkpoint, "Checkpoint path")->required();
    eval->add_option("--partition", eval_partition, "seen | unseen_object | unseen_affordance");
    eval->add_option("--config", eval_config, "Pipeline config JSON")->required();
    eval->add_option("--out", eval_out, "Metric report JSON output path");

    // --- infer ---
    auto* infer = app.add_subcommand("infer", "Ground an affordance for one image/point pair");
    std::string infer_checkpoint, infer_image, infer_points, infer_object, infer_config;
    std::string infer_out = "prediction.txt", infer_render;
    infer->add_option("--checkpoint", infer_checkpoint, "Checkpoint path")->required();
    infer->add_option("--image", infer_image, "Interaction image (PPM)")->required();
    infer->add_option("--points", infer_points, "Point file (2048 x 4 text)")->required();
    infer->add_option("--object", infer_object, "Object category")->required();
    infer->add_option("--config", infer_config, "Pipeline config JSON");
    infer->add_option("--out", infer_out, "Output annotation path");
    infer->add_option("--render", infer_render, "Optional heatmap PPM path");

    CLI11_PARSE(app, argc, argv);

    if (synth->parsed()) {
        const data::Manifest m = data::generate_synthetic(synth_cfg, synth_out, synth_seed);
        std::cout << "wrote " << m.points.size() << " instances, " << m.images.size()
                  << " images under " << synth_out << "\n";
        return 0;
    }

    if (reason->parsed()) {
        pipeline::PipelineConfig cfg = load_config(reason_config);
        if (!reason_cache.empty()) cfg.cache_dir = reason_cache;
        if (cfg.cache_dir.empty()) throw Error(ErrorKind::config, "--cache (or config cache_dir) required");
        if (!reason_backend.empty()) {
            if (reason_backend == "http") cfg.backend.kind = mllm::BackendConfig::Kind::http;
            else if (reason_backend == "fixture") cfg.backend.kind = mllm::BackendConfig::Kind::fixture;
            else throw Error(ErrorKind::config, "--backend must be http or fixture");
        }
        if (!reason_fixture.empty()) cfg.backend.fixture_path = reason_fixture;
        if (!reason_base_url.empty()) cfg.backend.base_url = reason_base_url;
        if (!reason_model.empty()) cfg.backend.model_name = reason_model;
        if (!reason_auth_env.empty()) cfg.backend.auth_token_env = reason_auth_env;
        if (reason_concurrency > 0) cfg.backend.concurrency = reason_concurrency;
        if (!cfg.backend.configured()) {
            throw Error(ErrorKind::config, "backend not configured: set --fixture or --base-url");
        }
        const data::Manifest manifest = data::load_manifest(reason_manifest);
        const auto summary = pipeline::reason(manifest, cfg);
        std::cout << "cache hits: " << summary.cache_hits << "\nreasoned:   " << summary.reasoned
                  << "\nfailed:     " << summary.failures.size() << "\n";
        for (const auto& [id, err] : summary.failures) {
            std::cerr << "failed " << id << ": " << err << "\n";
        }
        return summary.failures.empty() ? 0 : 2;
    }

    if (train->parsed()) {
        const auto cfg = pipeline::PipelineConfig::from_file(train_config);
        const auto result = pipeline::train(cfg);
        std::cout << "checkpoint: " << result.checkpoint.string()
                  << "\nloss curve: " << result.loss_curve_csv.string() << "\nfinal loss: "
                  << (result.epoch_losses.empty() ? 0.0 : result.epoch_losses.back()) << "\n";
        return 0;
    }

    if (eval->parsed()) {
        const auto cfg = pipeline::PipelineConfig::from_file(eval_config);
        const auto report = pipeline::evaluate(eval_checkpoint, eval_partition, cfg, eval_out);
        std::cout << metrics::report_to_table(report, eval_partition);
        if (!eval_out.empty()) std::cout << "report: " << eval_out << "\n";
        return 0;
    }

    if (infer->parsed()) {
        const auto cfg = load_config(infer_config);
        const auto result = pipeline::infer(infer_checkpoint, infer_image, infer_points,
                                            infer_object, cfg, infer_out, infer_render);
        std::cout << "prediction: " << result.output.string() << "\npeak phi:   "
                  << result.prediction.phi.maxCoeff() << "\n";
        return 0;
    }

    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
