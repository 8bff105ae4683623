// Copyright (C) 2026 The great authors
// SPDX-License-Identifier: Apache-2.0

#include "great/decoder_loss.hpp"

#include "great/error.hpp"

namespace great::decoder {

using ad::Var;

Var decode(ad::Tape& tape, Var image_fused, Var point_fused, nn::Binder& params,
           const nn::ModelConfig& config) {
    (void)tape;
    if (image_fused.rows() != config.channels || point_fused.rows() != config.channels) {
        throw Error(ErrorKind::shape, "decode: fused features must be channel-major [C x n]");
    }
    Var pooled = ad::mean_cols(image_fused);  // [C x 1]
    Var broadcast = ad::broadcast_cols(pooled, static_cast<int>(point_fused.cols()));
    Var cat = ad::concat_rows(broadcast, point_fused);  // [2C x N]
    Var h = ad::relu(ad::add_col_bias(ad::matmul(params("dec.f.w1"), cat), params("dec.f.b1")));
    Var alpha = ad::add_col_bias(ad::matmul(params("dec.f.w2"), h), params("dec.f.b2"));  // [C x N]
    Var logits = ad::add_col_bias(ad::matmul(params("dec.head.w"), alpha), params("dec.head.b"));
    return ad::sigmoid(logits);  // [1 x N]
}

namespace {

void check_loss_inputs(Var phi, const Eigen::VectorXd& label, bool open_interval) {
    if (phi.rows() != 1) throw Error(ErrorKind::shape, "loss: phi must be a [1 x N] row");
    if (phi.cols() != label.size()) {
        throw Error(ErrorKind::shape, "loss: phi and label lengths differ (" +
                                          std::to_string(phi.cols()) + " vs " +
                                          std::to_string(label.size()) + ")");
    }
    for (Eigen::Index i = 0; i < phi.cols(); ++i) {
        const double p = phi.val()(0, i);
        if (!std::isfinite(p)) throw Error(ErrorKind::domain, "loss: non-finite prediction");
        if (open_interval ? (p <= 0.0 || p >= 1.0) : (p < 0.0 || p > 1.0)) {
            throw Error(ErrorKind::domain, "loss: prediction outside the valid interval at index " +
                                               std::to_string(i));
        }
    }
    for (Eigen::Index i = 0; i < label.size(); ++i) {
        const double l = label(i);
        if (!std::isfinite(l) || l < 0.0 || l > 1.0) {
            throw Error(ErrorKind::domain, "loss: label outside [0,1] at index " + std::to_string(i));
        }
    }
}

}  // namespace

Var focal_loss(ad::Tape& tape, Var phi, const Eigen::VectorXd& label, const FocalParams& fp) {
    check_loss_inputs(phi, label, /*open_interval=*/true);
    Var l = tape.input(label.transpose());  // [1 x N]
    Var one_minus_l = ad::rsub_scalar(1.0, l);
    Var one_minus_p = ad::rsub_scalar(1.0, phi);
    // positive side: -alpha (1-p)^g log p ; negative side: -alpha p^g log(1-p)
    Var pos = ad::scale(ad::hadamard(ad::pow_elem(one_minus_p, fp.gamma), ad::log_elem(phi)), -fp.alpha);
    Var neg = ad::scale(ad::hadamard(ad::pow_elem(phi, fp.gamma), ad::log_elem(one_minus_p)), -fp.alpha);
    Var combined = ad::add(ad::hadamard(l, pos), ad::hadamard(one_minus_l, neg));
    return ad::mean_all(combined);
}

Var dice_loss(ad::Tape& tape, Var phi, const Eigen::VectorXd& label, double eps) {
    check_loss_inputs(phi, label, /*open_interval=*/false);
    Var l = tape.input(label.transpose());
    Var overlap = ad::sum_all(ad::hadamard(phi, l));
    Var self = ad::sum_all(ad::hadamard(phi, phi));
    const double label_sq = label.squaredNorm();
    Var numer = ad::add_scalar(ad::scale(overlap, 2.0), eps);
    Var denom = ad::add_scalar(self, label_sq + eps);
    return ad::rsub_scalar(1.0, ad::div_elem(numer, denom));
}

Var total_loss(ad::Tape& tape, Var phi, const Eigen::VectorXd& label, const FocalParams& focal,
               double dice_eps) {
    return ad::add(focal_loss(tape, phi, label, focal), dice_loss(tape, phi, label, dice_eps));
}

}  // namespace great::decoder
