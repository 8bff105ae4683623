// Copyright (C) 2026 The great authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "great/decoder_loss.hpp"
#include "great/error.hpp"
#include "testing_util.hpp"

using namespace great;
using ad::Mat;
using ad::Var;
using decoder::FocalParams;
using testing::random_mat;

namespace {

nn::ModelConfig tiny_config(int channels = 8) {
    nn::ModelConfig c;
    c.channels = channels;
    c.image_size = 32;
    c.sa_levels = {{4, 1.0, 4}};
    c.vocab_size = 64;
    return c;
}

// independent scalar recomputation of the focal term
double focal_oracle(const Eigen::VectorXd& phi, const Eigen::VectorXd& label, double gamma,
                    double alpha) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < phi.size(); ++i) {
        const double p = phi(i), l = label(i);
        const double pos = -alpha * std::pow(1.0 - p, gamma) * std::log(p);
        const double neg = -alpha * std::pow(p, gamma) * std::log(1.0 - p);
        acc += l * pos + (1.0 - l) * neg;
    }
    return acc / static_cast<double>(phi.size());
}

double dice_oracle(const Eigen::VectorXd& phi, const Eigen::VectorXd& label, double eps) {
    double pl = 0.0, pp = 0.0, ll = 0.0;
    for (Eigen::Index i = 0; i < phi.size(); ++i) {
        pl += phi(i) * label(i);
        pp += phi(i) * phi(i);
        ll += label(i) * label(i);
    }
    return 1.0 - (2.0 * pl + eps) / (pp + ll + eps);
}

Eigen::VectorXd random_phi(Rng& rng, int n) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v(i) = 0.02 + 0.96 * rng.uniform();
    return v;
}

Eigen::VectorXd random_label(Rng& rng, int n) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v(i) = rng.uniform() < 0.5 ? 0.0 : rng.uniform();
    return v;
}

double eval_focal(const Eigen::VectorXd& phi, const Eigen::VectorXd& label, FocalParams fp = {}) {
    ad::Tape t;
    return decoder::focal_loss(t, t.input(phi.transpose()), label, fp).val()(0, 0);
}

double eval_dice(const Eigen::VectorXd& phi, const Eigen::VectorXd& label, double eps = 1.0) {
    ad::Tape t;
    return decoder::dice_loss(t, t.input(phi.transpose()), label, eps).val()(0, 0);
}

double eval_total(const Eigen::VectorXd& phi, const Eigen::VectorXd& label) {
    ad::Tape t;
    return decoder::total_loss(t, t.input(phi.transpose()), label).val()(0, 0);
}

}  // namespace

TEST_CASE("decode saturation behavior through the head") {
    const nn::ModelConfig cfg = tiny_config();
    nn::ParamStore store = nn::build_params(cfg, 1);
    Rng rng(2);
    const Mat image_fused = random_mat(rng, cfg.channels, 4);
    const Mat point_fused = random_mat(rng, cfg.channels, 16);

    store.at("dec.head.w").setZero();
    store.at("dec.head.b").setZero();
    {
        ad::Tape t;
        nn::Binder binder(t, store);
        Var phi = decoder::decode(t, t.input(image_fused), t.input(point_fused), binder, cfg);
        CHECK(phi.rows() == 1);
        CHECK(phi.cols() == 16);
        CHECK((phi.val().array() - 0.5).abs().maxCoeff() == 0.0);
    }
    store.at("dec.head.b")(0, 0) = 20.0;
    {
        ad::Tape t;
        nn::Binder binder(t, store);
        Var phi = decoder::decode(t, t.input(image_fused), t.input(point_fused), binder, cfg);
        CHECK(phi.val().minCoeff() > 0.999);
        CHECK(phi.val().maxCoeff() < 1.0);
    }
}

TEST_CASE("decode gradcheck w.r.t. the fused point features") {
    const nn::ModelConfig cfg = tiny_config();
    const nn::ParamStore store = nn::build_params(cfg, 3);
    Rng rng(5);
    const Mat image_fused = random_mat(rng, cfg.channels, 4);
    const Mat point0 = random_mat(rng, cfg.channels, 16);
    const double err = testing::gradcheck(
        [&](ad::Tape& t, Var pts) {
            nn::Binder binder(t, store);
            return ad::mean_all(decoder::decode(t, t.input(image_fused), pts, binder, cfg));
        },
        point0, rng, 24);
    CHECK(err < 1e-4);
}

TEST_CASE("focal loss analytic reductions") {
    Rng rng(7);
    const Eigen::VectorXd phi = random_phi(rng, 32);
    const Eigen::VectorXd label = random_label(rng, 32);

    // gamma=0, alpha=0.5 reduces to half the soft binary cross-entropy
    double bce = 0.0;
    for (int i = 0; i < 32; ++i) {
        bce += -(label(i) * std::log(phi(i)) + (1.0 - label(i)) * std::log(1.0 - phi(i)));
    }
    bce /= 32.0;
    CHECK(eval_focal(phi, label, {0.0, 0.5}) == doctest::Approx(0.5 * bce).epsilon(1e-12));

    // perfect prediction
    Eigen::VectorXd binary(8), clamped(8);
    for (int i = 0; i < 8; ++i) {
        binary(i) = i % 2 == 0 ? 1.0 : 0.0;
        clamped(i) = binary(i) == 1.0 ? 1.0 - 1e-7 : 1e-7;
    }
    CHECK(eval_focal(clamped, binary) < 1e-5);
    CHECK(eval_total(clamped, binary) < 1e-5);
}

TEST_CASE("focal loss matches the scalar oracle on random cases") {
    Rng rng(9);
    for (int round = 0; round < 50; ++round) {
        const Eigen::VectorXd phi = random_phi(rng, 8);
        const Eigen::VectorXd label = random_label(rng, 8);
        CHECK(eval_focal(phi, label) ==
              doctest::Approx(focal_oracle(phi, label, 2.0, 0.25)).epsilon(1e-9));
    }
}

TEST_CASE("focal loss domain checks") {
    Eigen::VectorXd label = Eigen::VectorXd::Constant(4, 0.5);
    Eigen::VectorXd bad = Eigen::VectorXd::Constant(4, 1.0);  // not strictly inside (0,1)
    ad::Tape t;
    CHECK_THROWS_AS(static_cast<void>(decoder::focal_loss(t, t.input(bad.transpose()), label)), Error);
    Eigen::VectorXd ok = Eigen::VectorXd::Constant(4, 0.5);
    Eigen::VectorXd short_label = Eigen::VectorXd::Constant(3, 0.5);
    CHECK_THROWS_AS(static_cast<void>(decoder::focal_loss(t, t.input(ok.transpose()), short_label)), Error);
}

TEST_CASE("dice loss closed forms") {
    Eigen::VectorXd binary(6);
    binary << 1, 0, 1, 1, 0, 0;
    CHECK(eval_dice(binary, binary) == doctest::Approx(0.0));  // (2S+1)/(2S+1)

    Eigen::VectorXd a = Eigen::VectorXd::Zero(512), b = Eigen::VectorXd::Zero(512);
    a.head(256).setOnes();
    b.tail(256).setOnes();
    CHECK(eval_dice(a, b) > 0.95);  // disjoint supports, large n

    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(16);
    CHECK(eval_dice(zero, zero) == doctest::Approx(0.0));  // smoothing limit

    Rng rng(11);
    for (int round = 0; round < 50; ++round) {
        const Eigen::VectorXd phi = random_phi(rng, 12);
        const Eigen::VectorXd label = random_label(rng, 12);
        CHECK(eval_dice(phi, label) == doctest::Approx(dice_oracle(phi, label, 1.0)).epsilon(1e-9));
        CHECK(eval_dice(phi, label) >= 0.0);
        CHECK(eval_dice(phi, label) <= 1.0);
    }
}

TEST_CASE("total loss adds its parts and stays nonnegative") {
    Rng rng(13);
    const Eigen::VectorXd phi = random_phi(rng, 24);
    const Eigen::VectorXd label = random_label(rng, 24);
    CHECK(eval_total(phi, label) ==
          doctest::Approx(eval_focal(phi, label) + eval_dice(phi, label)).epsilon(1e-12));
    CHECK(eval_total(phi, label) >= 0.0);
}

TEST_CASE("total loss decreases monotonically from 0.5 toward the label") {
    Rng rng(17);
    Eigen::VectorXd label(16);
    for (int i = 0; i < 16; ++i) label(i) = i % 3 == 0 ? 1.0 : 0.0;
    const Eigen::VectorXd mid = Eigen::VectorXd::Constant(16, 0.5);
    const Eigen::VectorXd target =
        label.unaryExpr([](double l) { return l == 1.0 ? 1.0 - 1e-6 : 1e-6; });
    double prev = std::numeric_limits<double>::infinity();
    for (int step = 0; step <= 10; ++step) {
        const double a = step / 10.0;
        const Eigen::VectorXd phi = (1.0 - a) * mid + a * target;
        const double loss = eval_total(phi, label);
        CHECK(loss < prev);
        prev = loss;
    }
}

TEST_CASE("loss gradients match finite differences") {
    Rng rng(19);
    for (int round = 0; round < 10; ++round) {
        const Eigen::VectorXd label = random_label(rng, 8);
        const Mat phi0 = random_phi(rng, 8).transpose();
        CHECK(testing::gradcheck(
                  [&](ad::Tape& t, Var phi) { return decoder::focal_loss(t, phi, label); }, phi0,
                  rng, 8) < 1e-4);
        CHECK(testing::gradcheck(
                  [&](ad::Tape& t, Var phi) { return decoder::dice_loss(t, phi, label); }, phi0,
                  rng, 8) < 1e-4);
        CHECK(testing::gradcheck(
                  [&](ad::Tape& t, Var phi) { return decoder::total_loss(t, phi, label); }, phi0,
                  rng, 8) < 1e-4);
    }
}
