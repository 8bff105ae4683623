// Copyright (C) 2026 The great authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "great/dataset.hpp"

namespace great::data {

// Desk-scale procedural dataset: three object templates (mug, knife, pan),
// each with two affordance regions, rendered to orthographic splat images
// with a stick-figure marker near the interaction region. Also writes the
// fixture answers consumed by the MLLM fixture backend.
struct SynthConfig {
    int instances_per_template = 20;
    int images_per_cell = 12;
    int image_size = 96;
    std::vector<std::string> templates = {"mug", "knife", "pan"};
};

// Writes points/, images/, fixtures.json and manifest.json under out_dir,
// fully deterministic given seed. Returns the loaded, validated manifest.
Manifest generate_synthetic(const SynthConfig& config, const std::filesystem::path& out_dir,
                            uint64_t seed);

// Orthographic render of a point cloud with red intensity by per-point value;
// used by `infer --render`.
void render_heatmap(const Eigen::MatrixXd& coords, const Eigen::VectorXd& values, int image_size,
                    const std::filesystem::path& path);

}  // namespace great::data
