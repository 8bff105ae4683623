// Copyright (C) 2026 The great authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "great/backbones.hpp"

namespace great::cmafm {

// Cross-modal co-representation: point features queried against integrated
// object knowledge and vice versa (independent projections each way).
// point_features: [C x N_p]; knowledge_obj: [N_o x C].
// Returns re-represented ([C x N_p], [C x N_o]).
std::pair<ad::Var, ad::Var> co_represent(ad::Tape& tape, ad::Var point_features,
                                         ad::Var knowledge_obj, nn::Binder& params,
                                         const nn::ModelConfig& config);

// Injects pooled knowledge into every point: two shared FC layers on each
// stream, mean-pool + broadcast of the knowledge stream, channel concat and
// a two-layer 1x1 convolution stack back to C.
ad::Var inject_geometry(ad::Tape& tape, ad::Var co_points, ad::Var co_knowledge,
                        nn::Binder& params, const nn::ModelConfig& config);

// Pools integrated intention embeddings over their rows, broadcasts across
// the image grid, concatenates with image features and fuses back to C.
ad::Var fuse_intention(ad::Tape& tape, ad::Var knowledge_aff, ad::Var image_features,
                       nn::Binder& params, const nn::ModelConfig& config);

// FP(P_o): full-resolution fused point features [C x N].
ad::Var upsample_points(ad::Tape& tape, const nn::PointFeaturePyramid& pyramid, ad::Var injected,
                        nn::Binder& params, const nn::ModelConfig& config);

}  // namespace great::cmafm
