// Copyright (C) 2026 The great authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "great/cmafm.hpp"
#include "great/dataset.hpp"
#include "great/decoder_loss.hpp"
#include "great/knowledge.hpp"
#include "great/metrics.hpp"
#include "great/mhacot.hpp"
#include "great/synthetic.hpp"

namespace great::pipeline {

struct PipelineConfig {
    // training schedule
    int epochs = 65;
    int batch_size = 16;
    double learning_rate = 1e-4;
    std::string optimizer = "adam";
    uint64_t seed = 0;
    int steps_per_epoch = 0;  // 0: derived from train image count / batch size

    nn::ModelConfig model;

    std::string partition = "seen";
    std::filesystem::path manifest;
    std::filesystem::path cache_dir;
    std::filesystem::path checkpoint_dir;

    // partitioning
    double seen_split_ratio = 0.8;
    std::vector<std::string> held_out_objects;
    std::vector<std::string> held_out_affordances;
    uint64_t partition_seed = 0;

    bool normalize_points = true;

    decoder::FocalParams focal;
    double dice_eps = 1.0;
    metrics::MetricConfig metric;

    mhacot::PromptTemplates prompts = mhacot::PromptTemplates::defaults();
    mllm::BackendConfig backend;

    static PipelineConfig from_file(const std::filesystem::path& path);
    static PipelineConfig from_json_string(const std::string& text);
    std::string to_json_string() const;
    void validate() const;
};

// One forward pass with every named intermediate of the fusion pipeline.
struct ForwardResult {
    std::unique_ptr<ad::Tape> tape;
    std::unique_ptr<nn::Binder> params;

    ad::Var image_features;            // [C x N_i]
    nn::PointFeaturePyramid pyramid;   // deepest = [C x N_p]
    ad::Var knowledge_obj;             // [N_o x C]
    ad::Var knowledge_aff;             // [3 x C]
    ad::Var integrated_obj;            // [N_o x C]
    ad::Var integrated_aff;            // [3 x C]
    ad::Var co_points;                 // [C x N_p]
    ad::Var co_knowledge;              // [C x N_o]
    ad::Var injected;                  // [C x N_p]
    ad::Var point_fused;               // [C x N]
    ad::Var image_fused;               // [C x N_i]
    ad::Var phi;                       // [1 x N]

    AffordancePrediction prediction() const;
};

// Composes the full model. The knowledge record must belong to the sample's
// image. Stage failures are rethrown with the stage name attached.
ForwardResult forward(const data::PairedSample& sample, const KnowledgeRecord& record,
                      const nn::ParamStore& store, const nn::ModelConfig& config,
                      std::shared_ptr<const nn::PointGeometry> geometry = nullptr);

struct TrainResult {
    std::filesystem::path checkpoint;       // latest (final-epoch) checkpoint
    std::filesystem::path loss_curve_csv;
    std::vector<double> epoch_losses;
};

// Two-phase contract: the transcript cache must already cover every train
// image (run `reason` first); train itself never talks to a backend.
TrainResult train(const PipelineConfig& config);

metrics::MetricReport evaluate(const std::filesystem::path& checkpoint, const std::string& partition,
                               const PipelineConfig& config,
                               const std::filesystem::path& report_json_out = {});

struct InferResult {
    AffordancePrediction prediction;
    std::filesystem::path output;  // 2048 x 4 "x y z phi" text
};

InferResult infer(const std::filesystem::path& checkpoint, const std::filesystem::path& image_file,
                  const std::filesystem::path& points_file, const std::string& object_category,
                  const PipelineConfig& config, const std::filesystem::path& out_file,
                  const std::filesystem::path& render_file = {});

struct ReasonSummary {
    int cache_hits = 0;
    int reasoned = 0;
    std::vector<std::pair<std::string, std::string>> failures;  // (image id, error)
};

// Runs the chain for every image lacking a cached transcript, up to
// config.backend.concurrency conversations in flight.
ReasonSummary reason(const data::Manifest& manifest, const PipelineConfig& config);

}  // namespace great::pipeline
