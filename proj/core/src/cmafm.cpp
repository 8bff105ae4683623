// Copyright (C) 2026 The great authors
// SPDX-License-Identifier: Apache-2.0

#include "great/cmafm.hpp"

#include <cmath>

#include "great/error.hpp"

namespace great::cmafm {

using ad::Var;

namespace {

// two FC layers applied feature-wise (columns are positions)
Var feature_mlp(Var x, nn::Binder& params, const std::string& prefix) {
    Var h = ad::relu(ad::add_col_bias(ad::matmul(params(prefix + ".w1"), x), params(prefix + ".b1")));
    return ad::add_col_bias(ad::matmul(params(prefix + ".w2"), h), params(prefix + ".b2"));
}

// two stacked 1x1 convolutions 2C -> C -> C with ReLU between
Var fuse_stack(Var x, nn::Binder& params, const std::string& prefix) {
    Var h = ad::relu(ad::add_col_bias(ad::matmul(params(prefix + ".w1"), x), params(prefix + ".b1")));
    return ad::add_col_bias(ad::matmul(params(prefix + ".w2"), h), params(prefix + ".b2"));
}

// softmax(Q^T K / sqrt(d)) V^T, transposed back to channel-major:
// q: [d x n], k: [d x m], v: [C x m] -> [C x n]
Var channel_attention(Var q, Var k, Var v, double d) {
    if (d <= 0.0) throw Error(ErrorKind::config, "attention projection dimension must be positive");
    Var weights = ad::rows_softmax(ad::scale(ad::matmul(ad::transpose(q), k), 1.0 / std::sqrt(d)));
    return ad::transpose(ad::matmul(weights, ad::transpose(v)));
}

}  // namespace

std::pair<Var, Var> co_represent(ad::Tape& tape, Var point_features, Var knowledge_obj,
                                 nn::Binder& params, const nn::ModelConfig& config) {
    (void)tape;
    if (point_features.rows() != config.channels) {
        throw Error(ErrorKind::shape, "co_represent: point features must be [C x N_p]");
    }
    if (knowledge_obj.cols() != config.channels) {
        throw Error(ErrorKind::shape, "co_represent: knowledge must be [N_o x C]");
    }
    const double d = static_cast<double>(config.d());
    Var knowledge_cols = ad::transpose(knowledge_obj);  // [C x N_o]

    // point stream re-represented against knowledge
    Var q_p = ad::matmul(ad::transpose(params("cm.co.p.wq")), point_features);   // [d x N_p]
    Var k_p = ad::matmul(ad::transpose(params("cm.co.p.wk")), knowledge_cols);   // [d x N_o]
    Var v_p = ad::matmul(ad::transpose(params("cm.co.p.wv")), knowledge_cols);   // [C x N_o]
    Var co_points = channel_attention(q_p, k_p, v_p, d);                         // [C x N_p]

    // knowledge stream re-represented against points (independent weights)
    Var q_t = ad::matmul(ad::transpose(params("cm.co.t.wq")), knowledge_cols);   // [d x N_o]
    Var k_t = ad::matmul(ad::transpose(params("cm.co.t.wk")), point_features);   // [d x N_p]
    Var v_t = ad::matmul(ad::transpose(params("cm.co.t.wv")), point_features);   // [C x N_p]
    Var co_knowledge = channel_attention(q_t, k_t, v_t, d);                      // [C x N_o]

    return {co_points, co_knowledge};
}

Var inject_geometry(ad::Tape& tape, Var co_points, Var co_knowledge, nn::Binder& params,
                    const nn::ModelConfig& config) {
    (void)tape;
    if (co_points.rows() != config.channels || co_knowledge.rows() != config.channels) {
        throw Error(ErrorKind::shape, "inject_geometry: inputs must be channel-major [C x n]");
    }
    Var point_stream = ad::add(co_points, feature_mlp(co_points, params, "cm.inj.fphi"));
    Var knowledge_stream = ad::add(co_knowledge, feature_mlp(co_knowledge, params, "cm.inj.fphi"));
    Var pooled = ad::broadcast_cols(ad::mean_cols(knowledge_stream), static_cast<int>(co_points.cols()));
    return fuse_stack(ad::concat_rows(point_stream, pooled), params, "cm.inj.f");  // [C x N_p]
}

Var fuse_intention(ad::Tape& tape, Var knowledge_aff, Var image_features, nn::Binder& params,
                   const nn::ModelConfig& config) {
    (void)tape;
    if (knowledge_aff.cols() != config.channels) {
        throw Error(ErrorKind::shape, "fuse_intention: intention knowledge must be [N_a x C]");
    }
    if (image_features.rows() != config.channels) {
        throw Error(ErrorKind::shape, "fuse_intention: image features must be [C x N_i]");
    }
    Var pooled = ad::transpose(ad::mean_rows(knowledge_aff));  // [C x 1]
    Var broadcast = ad::broadcast_cols(pooled, static_cast<int>(image_features.cols()));
    return fuse_stack(ad::concat_rows(broadcast, image_features), params, "cm.fus.f");  // [C x N_i]
}

Var upsample_points(ad::Tape& tape, const nn::PointFeaturePyramid& pyramid, Var injected,
                    nn::Binder& params, const nn::ModelConfig& config) {
    return nn::fp_upsample(tape, pyramid, injected, params, config);
}

}  // namespace great::cmafm
