// Copyright (C) 2026 The great authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "great/backbones.hpp"

namespace great::decoder {

struct FocalParams {
    double gamma = 2.0;
    double alpha = 0.25;
};

// Pools fused image features, broadcasts them across all points, fuses with
// the point stream and applies the per-point sigmoid head. Returns [1 x N]
// with every value strictly inside (0,1).
ad::Var decode(ad::Tape& tape, ad::Var image_fused, ad::Var point_fused, nn::Binder& params,
               const nn::ModelConfig& config);

// Soft-label focal term: the per-side -alpha*(1-p_t)^gamma*log(p_t) terms
// combined as a convex combination weighted by the label. Mean over points.
ad::Var focal_loss(ad::Tape& tape, ad::Var phi, const Eigen::VectorXd& label,
                   const FocalParams& params = {});

// 1 - (2*sum(p*l) + eps) / (sum(p^2) + sum(l^2) + eps)
ad::Var dice_loss(ad::Tape& tape, ad::Var phi, const Eigen::VectorXd& label, double eps = 1.0);

ad::Var total_loss(ad::Tape& tape, ad::Var phi, const Eigen::VectorXd& label,
                   const FocalParams& focal = {}, double dice_eps = 1.0);

}  // namespace great::decoder
