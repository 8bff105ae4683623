// Copyright (C) 2026 The great authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "great/error.hpp"
#include "great/tensor.hpp"
#include "testing_util.hpp"

using namespace great;
using ad::Mat;
using ad::Var;
using testing::gradcheck;
using testing::random_mat;

namespace {

constexpr double kTol = 1e-4;

// weighted sum turns any op output into a scalar loss
Var weighted(ad::Tape& t, Var y, const Mat& w) { return ad::sum_all(ad::hadamard(y, t.input(w))); }

}  // namespace

TEST_CASE("matmul forward and gradient") {
    Rng rng(1);
    const Mat a = random_mat(rng, 4, 3);
    const Mat b = random_mat(rng, 3, 5);
    {
        ad::Tape t;
        Var y = ad::matmul(t.input(a), t.input(b));
        CHECK((y.val() - a * b).norm() == doctest::Approx(0.0));
    }
    const Mat w = random_mat(rng, 4, 5);
    CHECK(gradcheck([&](ad::Tape& t, Var x) { return weighted(t, ad::matmul(x, t.input(b)), w); },
                    a, rng) < kTol);
    CHECK(gradcheck([&](ad::Tape& t, Var x) { return weighted(t, ad::matmul(t.input(a), x), w); },
                    b, rng) < kTol);
}

TEST_CASE("elementwise op gradients") {
    Rng rng(2);
    const Mat x = random_mat(rng, 3, 4);
    const Mat other = random_mat(rng, 3, 4);
    const Mat w = random_mat(rng, 3, 4);
    CHECK(gradcheck([&](ad::Tape& t, Var v) { return weighted(t, ad::add(v, t.input(other)), w); }, x, rng) < kTol);
    CHECK(gradcheck([&](ad::Tape& t, Var v) { return weighted(t, ad::sub(t.input(other), v), w); }, x, rng) < kTol);
    CHECK(gradcheck([&](ad::Tape& t, Var v) { return weighted(t, ad::hadamard(v, t.input(other)), w); }, x, rng) < kTol);
    CHECK(gradcheck([&](ad::Tape& t, Var v) { return weighted(t, ad::scale(v, -2.5), w); }, x, rng) < kTol);
    CHECK(gradcheck([&](ad::Tape& t, Var v) { return weighted(t, ad::rsub_scalar(1.0, v), w); }, x, rng) < kTol);
    CHECK(gradcheck([&](ad::Tape& t, Var v) { return weighted(t, ad::sigmoid(v), w); }, x, rng) < kTol);

    // positive domain for log/pow/div
    const Mat xp = (x.array().abs() + 0.5).matrix();
    const Mat op = (other.array().abs() + 0.5).matrix();
    CHECK(gradcheck([&](ad::Tape& t, Var v) { return weighted(t, ad::log_elem(v), w); }, xp, rng) < kTol);
    CHECK(gradcheck([&](ad::Tape& t, Var v) { return weighted(t, ad::pow_elem(v, 2.0), w); }, xp, rng) < kTol);
    CHECK(gradcheck([&](ad::Tape& t, Var v) { return weighted(t, ad::pow_elem(v, 0.37), w); }, xp, rng) < kTol);
    CHECK(gradcheck([&](ad::Tape& t, Var v) { return weighted(t, ad::div_elem(v, t.input(op)), w); }, xp, rng) < kTol);
    CHECK(gradcheck([&](ad::Tape& t, Var v) { return weighted(t, ad::div_elem(t.input(op), v), w); }, xp, rng) < kTol);
}

TEST_CASE("pow_elem with zero exponent has zero gradient") {
    ad::Tape t;
    Var v = t.param(Mat::Constant(2, 2, 0.3));
    Var l = ad::sum_all(ad::pow_elem(v, 0.0));
    CHECK(l.val()(0, 0) == doctest::Approx(4.0));
    t.backward(l);
    CHECK(v.grad().norm() == 0.0);
}

TEST_CASE("relu gradient masks negatives") {
    ad::Tape t;
    Mat x(1, 3);
    x << -1.0, 0.5, 2.0;
    Var v = t.param(x);
    Var l = ad::sum_all(ad::relu(v));
    t.backward(l);
    CHECK(v.grad()(0, 0) == 0.0);
    CHECK(v.grad()(0, 1) == 1.0);
    CHECK(v.grad()(0, 2) == 1.0);
}

TEST_CASE("softmax rows sum to one and gradient checks") {
    Rng rng(3);
    const Mat x = random_mat(rng, 5, 7, 2.0);
    {
        ad::Tape t;
        Var y = ad::rows_softmax(t.input(x));
        for (Eigen::Index r = 0; r < y.rows(); ++r) {
            CHECK(y.val().row(r).sum() == doctest::Approx(1.0).epsilon(1e-9));
            CHECK(y.val().row(r).minCoeff() > 0.0);
        }
    }
    const Mat w = random_mat(rng, 5, 7);
    CHECK(gradcheck([&](ad::Tape& t, Var v) { return weighted(t, ad::rows_softmax(v), w); }, x, rng) < kTol);
}

TEST_CASE("reductions and broadcasts") {
    Rng rng(4);
    const Mat x = random_mat(rng, 4, 6);
    const Mat w_col = random_mat(rng, 4, 1);
    const Mat w_row = random_mat(rng, 1, 6);
    const Mat w_full = random_mat(rng, 4, 6);
    const Mat w_wide = random_mat(rng, 4, 9);
    CHECK(gradcheck([&](ad::Tape& t, Var v) { return weighted(t, ad::mean_cols(v), w_col); }, x, rng) < kTol);
    CHECK(gradcheck([&](ad::Tape& t, Var v) { return weighted(t, ad::mean_rows(v), w_row); }, x, rng) < kTol);
    CHECK(gradcheck([&](ad::Tape& t, Var v) { return ad::mean_all(v); }, x, rng) < kTol);

    const Mat col = random_mat(rng, 4, 1);
    CHECK(gradcheck([&](ad::Tape& t, Var v) { return weighted(t, ad::broadcast_cols(v, 9), w_wide); }, col, rng) < kTol);

    const Mat bias = random_mat(rng, 4, 1);
    CHECK(gradcheck([&](ad::Tape& t, Var v) {
              return weighted(t, ad::add_col_bias(v, t.input(bias)), w_full);
          },
          x, rng) < kTol);
    CHECK(gradcheck([&](ad::Tape& t, Var v) {
              return weighted(t, ad::add_col_bias(t.input(x), v), w_full);
          },
          bias, rng) < kTol);
}

TEST_CASE("concat and gather") {
    Rng rng(5);
    const Mat a = random_mat(rng, 3, 4);
    const Mat b = random_mat(rng, 2, 4);
    {
        ad::Tape t;
        Var y = ad::concat_rows(t.input(a), t.input(b));
        CHECK(y.rows() == 5);
        CHECK((y.val().topRows(3) - a).norm() == 0.0);
        CHECK((y.val().bottomRows(2) - b).norm() == 0.0);
    }
    const Mat w5 = random_mat(rng, 5, 4);
    const Mat w3 = random_mat(rng, 3, 4);
    CHECK(gradcheck([&](ad::Tape& t, Var v) { return weighted(t, ad::concat_rows(v, t.input(b)), w5); }, a, rng) < kTol);

    const std::vector<int> cols = {3, 0, 0, 2};
    CHECK(gradcheck([&](ad::Tape& t, Var v) { return weighted(t, ad::gather_cols(v, cols), w3); }, a, rng) < kTol);
    const std::vector<int> rows = {1, 1, 0, 2, 2};
    CHECK(gradcheck([&](ad::Tape& t, Var v) { return weighted(t, ad::gather_rows(v, rows), w5); }, a, rng) < kTol);
}

TEST_CASE("block max over column groups") {
    ad::Tape t;
    Mat x(2, 6);
    x << 1, 5, 2, 0, -1, -3,
         4, 1, 1, 9, 2, 8;
    Var y = ad::block_max_cols(t.input(x), 3);
    CHECK(y.cols() == 2);
    CHECK(y.val()(0, 0) == 5);
    CHECK(y.val()(0, 1) == 0);
    CHECK(y.val()(1, 0) == 4);
    CHECK(y.val()(1, 1) == 9);

    Rng rng(6);
    const Mat xr = random_mat(rng, 3, 12);
    const Mat w = random_mat(rng, 3, 3);
    CHECK(gradcheck([&](ad::Tape& tt, Var v) { return weighted(tt, ad::block_max_cols(v, 4), w); },
                    xr, rng) < kTol);
}

TEST_CASE("interp_cols is the expected linear map") {
    Rng rng(7);
    const Mat x = random_mat(rng, 3, 5);
    auto idx = std::make_shared<std::vector<std::vector<int>>>(
        std::vector<std::vector<int>>{{0, 1, 2}, {4, 4, 3}});
    auto w = std::make_shared<std::vector<std::vector<double>>>(
        std::vector<std::vector<double>>{{0.5, 0.25, 0.25}, {0.9, 0.05, 0.05}});
    {
        ad::Tape t;
        Var y = ad::interp_cols(t.input(x), idx, w);
        const Mat expected0 = 0.5 * x.col(0) + 0.25 * x.col(1) + 0.25 * x.col(2);
        CHECK((y.val().col(0) - expected0).norm() == doctest::Approx(0.0));
    }
    const Mat wsum = random_mat(rng, 3, 2);
    CHECK(gradcheck([&](ad::Tape& t, Var v) { return weighted(t, ad::interp_cols(v, idx, w), wsum); },
                    x, rng) < kTol);
}

TEST_CASE("conv2d matches direct computation and gradchecks") {
    Rng rng(8);
    ad::Conv2dSpec spec;
    spec.in_ch = 2;
    spec.out_ch = 3;
    spec.height = spec.width = 5;
    spec.kernel = 3;
    spec.stride = 2;
    spec.pad = 1;
    const Mat x = random_mat(rng, 2, 25);
    const Mat w = random_mat(rng, 3, 2 * 9);
    const Mat b = random_mat(rng, 3, 1);

    ad::Tape t;
    Var y = ad::conv2d(t.input(x), t.input(w), t.input(b), spec);
    CHECK(y.rows() == 3);
    CHECK(y.cols() == 9);  // 3x3 output grid
    // direct nested-loop convolution at one output position
    const int oy = 1, ox = 2;
    for (int co = 0; co < 3; ++co) {
        double acc = b(co, 0);
        for (int ci = 0; ci < 2; ++ci) {
            for (int ky = 0; ky < 3; ++ky) {
                for (int kx = 0; kx < 3; ++kx) {
                    const int sy = oy * 2 - 1 + ky;
                    const int sx = ox * 2 - 1 + kx;
                    if (sy < 0 || sy >= 5 || sx < 0 || sx >= 5) continue;
                    acc += w(co, ci * 9 + ky * 3 + kx) * x(ci, sy * 5 + sx);
                }
            }
        }
        CHECK(y.val()(co, oy * 3 + ox) == doctest::Approx(acc).epsilon(1e-12));
    }

    const Mat wsum = random_mat(rng, 3, 9);
    CHECK(gradcheck([&](ad::Tape& tt, Var v) {
              return weighted(tt, ad::conv2d(v, tt.input(w), tt.input(b), spec), wsum);
          },
          x, rng) < kTol);
    CHECK(gradcheck([&](ad::Tape& tt, Var v) {
              return weighted(tt, ad::conv2d(tt.input(x), v, tt.input(b), spec), wsum);
          },
          w, rng) < kTol);
    CHECK(gradcheck([&](ad::Tape& tt, Var v) {
              return weighted(tt, ad::conv2d(tt.input(x), tt.input(w), v, spec), wsum);
          },
          b, rng) < kTol);
}

TEST_CASE("shape violations throw shape errors") {
    ad::Tape t;
    Var a = t.input(Mat::Zero(2, 3));
    Var b = t.input(Mat::Zero(2, 2));
    CHECK_THROWS_AS(ad::add(a, b), Error);
    CHECK_THROWS_AS(ad::matmul(a, a), Error);
    CHECK_THROWS_AS(ad::block_max_cols(a, 2), Error);
    CHECK_THROWS_AS(t.backward(a), Error);  // non-scalar root
}

TEST_CASE("attention_rows: single key gives the value row exactly") {
    Rng rng(9);
    const Mat q = random_mat(rng, 4, 2);
    const Mat k = random_mat(rng, 1, 2);
    const Mat v = random_mat(rng, 1, 5);
    ad::Tape t;
    Var y = ad::attention_rows(t.input(q), t.input(k), t.input(v), 0.5);
    for (Eigen::Index r = 0; r < 4; ++r) {
        CHECK((y.val().row(r) - v.row(0)).norm() == doctest::Approx(0.0));
    }
}

TEST_CASE("gradients accumulate across reuse of the same node") {
    // loss = sum(x) + sum(x .* x) -> dL/dx = 1 + 2x
    ad::Tape t;
    Mat x(2, 2);
    x << 1, 2, 3, 4;
    Var v = t.param(x);
    Var l = ad::add(ad::sum_all(v), ad::sum_all(ad::hadamard(v, v)));
    t.backward(l);
    CHECK((v.grad() - (Mat::Ones(2, 2) + 2 * x)).norm() == doctest::Approx(0.0));
}
