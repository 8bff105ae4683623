// Copyright (C) 2026 The great authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace great {
struct InteractionImage;
}

namespace great::nn {

struct SaLevelConfig {
    int points = 0;        // centroids kept at this level
    double radius = 0.0;   // grouping radius (clouds are unit-max-radius)
    int neighbors = 32;    // cap per group; nearest-first within the radius
};

// Frozen pretrained encoders plug in here; outputs enter the tape as
// constants (no gradients flow into an adapter). Runtime-only: never
// serialized with the config.
struct EncoderAdapters {
    // must return [C x image_tokens]
    std::function<Eigen::MatrixXd(const InteractionImage&)> image;
    // must return token-level [L x C], L >= 1
    std::function<Eigen::MatrixXd(const std::string&)> text;
};

// Dimensions of every trainable stage. Defaults match the full-scale setup
// (C=512, 224x224 images -> 7x7 grid, 2048->512->128->64 point hierarchy);
// tests shrink channels and levels through the same knobs.
struct ModelConfig {
    int channels = 512;  // C
    int attn_dim = 0;    // d; 0 means d = channels
    int image_size = 224;
    std::vector<SaLevelConfig> sa_levels = default_levels();
    int token_cap = 64;
    int vocab_size = 1024;
    int fp_neighbors = 3;
    double fp_eps = 1e-8;
    std::shared_ptr<const EncoderAdapters> adapters;  // optional, runtime-only

    int d() const { return attn_dim > 0 ? attn_dim : channels; }
    int image_grid() const { return image_size / 32; }
    int image_tokens() const { return image_grid() * image_grid(); }

    static std::vector<SaLevelConfig> default_levels() {
        return {{512, 0.25, 32}, {128, 0.5, 32}, {64, 1.0, 32}};
    }

    // five stride-2 stages; channel plan grows toward C
    std::vector<int> image_stage_channels() const {
        auto clampc = [this](int v) { return std::min(channels, v); };
        return {clampc(std::max(4, channels / 8)), clampc(std::max(8, channels / 4)),
                clampc(std::max(16, channels / 2)), channels, channels};
    }

    std::vector<int> sa_stage_channels() const {
        auto clampc = [this](int v) { return std::min(channels, v); };
        std::vector<int> out;
        const int n = static_cast<int>(sa_levels.size());
        for (int l = 0; l < n; ++l) {
            if (l == n - 1) {
                out.push_back(channels);
            } else if (l == n - 2) {
                out.push_back(clampc(std::max(16, channels / 2)));
            } else {
                out.push_back(clampc(std::max(8, channels / 4)));
            }
        }
        return out;
    }

    void validate() const;
};

std::string to_json_string(const ModelConfig& config);
ModelConfig model_config_from_json(const std::string& text);

}  // namespace great::nn
