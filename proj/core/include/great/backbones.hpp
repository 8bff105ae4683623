// Copyright (C) 2026 The great authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <string>
#include <vector>

#include "great/params.hpp"
#include "great/tensor.hpp"
#include "great/types.hpp"

namespace great::nn {

// ---- image ----

// [C x N_i] feature map from a 3 x S x S image, S = config.image_size.
ad::Var image_encode(ad::Tape& tape, const InteractionImage& image, Binder& params,
                     const ModelConfig& config);

// ---- points ----

// Sampling/grouping/interpolation structure of one cloud. Pure function of
// the coordinates and config; cacheable per instance across epochs.
struct PointGeometry {
    std::vector<Eigen::MatrixXd> level_coords;  // level 0 = input cloud [n_l x 3]
    // per SA level: flattened neighbor indices (centroid-major, K per group)
    std::vector<std::vector<int>> group_indices;
    std::vector<Eigen::MatrixXd> group_rel_coords;  // [3 x n_l*K]
    std::vector<int> group_width;                   // K per level
    // per FP step (deepest level back to the raw cloud)
    std::vector<std::shared_ptr<const std::vector<std::vector<int>>>> fp_indices;
    std::vector<std::shared_ptr<const std::vector<std::vector<double>>>> fp_weights;
};

PointGeometry compute_point_geometry(const Eigen::MatrixXd& coords, const ModelConfig& config);

struct PointFeaturePyramid {
    std::shared_ptr<const PointGeometry> geometry;
    std::vector<ad::Var> level_features;  // level 0 has no features (undefined Var)
    ad::Var deepest;                      // [C x n_deepest]
};

PointFeaturePyramid point_encode(ad::Tape& tape, std::shared_ptr<const PointGeometry> geometry,
                                 Binder& params, const ModelConfig& config);
// convenience: computes the geometry, then encodes
PointFeaturePyramid point_encode(ad::Tape& tape, const Eigen::MatrixXd& coords, Binder& params,
                                 const ModelConfig& config);

// Inverse-distance (k=3) interpolation per level with skip concatenation and
// a per-point transform; maps deep features back to full resolution [C x N].
ad::Var fp_upsample(ad::Tape& tape, const PointFeaturePyramid& pyramid, ad::Var deep_features,
                    Binder& params, const ModelConfig& config);

// Deterministic farthest point sampling; starts at the point nearest the
// cloud centroid. Exposed for tests.
std::vector<int> farthest_point_sample(const Eigen::MatrixXd& coords, int count);

// ---- text ----

struct TextEmbedding {
    ad::Var tokens;  // [L x C]
    ad::Var pooled;  // [1 x C], mean over token rows
};

std::vector<int> tokenize(const std::string& text, int vocab_size, int cap);

TextEmbedding text_encode(ad::Tape& tape, const std::string& text, Binder& params,
                          const ModelConfig& config);

// x + softmax((x wq)(y wk)^T / sqrt(d)) (y wv) wo ; row-token convention.
ad::Var residual_attention(ad::Var x, ad::Var y, ad::Var wq, ad::Var wk, ad::Var wv, ad::Var wo);

}  // namespace great::nn
