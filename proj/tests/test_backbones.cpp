// Copyright (C) 2026 The great authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <set>

#include "great/backbones.hpp"
#include "great/dataset.hpp"
#include "great/error.hpp"
#include "testing_util.hpp"

using namespace great;
using ad::Mat;
using ad::Var;
using testing::random_mat;

namespace {

nn::ModelConfig tiny_config() {
    nn::ModelConfig c;
    c.channels = 8;
    c.image_size = 32;
    c.sa_levels = {{16, 0.4, 8}, {8, 0.8, 8}, {4, 1.6, 8}};
    c.vocab_size = 64;
    return c;
}

InteractionImage make_image(int size, double fill) {
    InteractionImage img;
    img.id = "img";
    img.object_category = "mug";
    img.affordance_category = "grasp";
    img.height = img.width = size;
    for (auto& ch : img.pixels) ch.assign(static_cast<size_t>(size) * size, fill);
    return img;
}

Eigen::MatrixXd sphere_cloud(Rng& rng, int n) {
    Eigen::MatrixXd c(n, 3);
    for (int i = 0; i < n; ++i) {
        Eigen::RowVector3d v(rng.normal(), rng.normal(), rng.normal());
        c.row(i) = v / std::max(v.norm(), 1e-9);
    }
    return c;
}

}  // namespace

TEST_CASE("image encoder shapes, finiteness, determinism") {
    const nn::ModelConfig cfg = tiny_config();
    const nn::ParamStore store = nn::build_params(cfg, 3);

    ad::Tape t;
    nn::Binder binder(t, store);
    Var f = nn::image_encode(t, make_image(32, 0.0), binder, cfg);
    CHECK(f.rows() == cfg.channels);
    CHECK(f.cols() == cfg.image_tokens());
    CHECK(f.val().allFinite());

    ad::Tape t2;
    nn::Binder binder2(t2, store);
    Var f2 = nn::image_encode(t2, make_image(32, 0.0), binder2, cfg);
    CHECK(f.val() == f2.val());

    CHECK_THROWS_AS(static_cast<void>(nn::image_encode(t, make_image(64, 0.0), binder, cfg)), Error);
}

TEST_CASE("a batch of images encodes one feature map per element") {
    const nn::ModelConfig cfg = tiny_config();
    const nn::ParamStore store = nn::build_params(cfg, 3);
    Rng rng(5);
    std::vector<Mat> features;
    ad::Tape t;
    nn::Binder binder(t, store);
    for (int b = 0; b < 16; ++b) {
        features.push_back(nn::image_encode(t, make_image(32, rng.uniform()), binder, cfg).val());
    }
    CHECK(features.size() == 16);
    for (const auto& f : features) {
        CHECK(f.rows() == cfg.channels);
        CHECK(f.cols() == cfg.image_tokens());
    }
}

TEST_CASE("image encoder gradcheck on a parameter slice") {
    const nn::ModelConfig cfg = tiny_config();
    const nn::ParamStore store = nn::build_params(cfg, 7);
    Rng rng(11);
    const InteractionImage img = make_image(32, 0.3);
    for (const std::string name : {"img.conv0.w", "img.conv4.b"}) {
        const double err = testing::gradcheck_param(
            [&](ad::Tape& t, nn::Binder& b) {
                return ad::mean_all(nn::image_encode(t, img, b, cfg));
            },
            store, name, rng, 6);
        CHECK(err < 1e-4);
    }
}

TEST_CASE("farthest point sampling is deterministic and permutation-stable") {
    Rng rng(21);
    const Eigen::MatrixXd cloud = sphere_cloud(rng, 128);
    const auto picked = nn::farthest_point_sample(cloud, 16);
    CHECK(picked.size() == 16);
    std::set<int> unique(picked.begin(), picked.end());
    CHECK(unique.size() == 16);

    // permute rows; the sampled coordinate multiset must not change
    std::vector<int> perm(128);
    for (int i = 0; i < 128; ++i) perm[i] = i;
    Rng prng(22);
    prng.shuffle(perm);
    Eigen::MatrixXd shuffled(128, 3);
    for (int i = 0; i < 128; ++i) shuffled.row(i) = cloud.row(perm[i]);
    const auto picked2 = nn::farthest_point_sample(shuffled, 16);

    auto coord_key = [](const Eigen::RowVector3d& r) {
        return std::array<double, 3>{r.x(), r.y(), r.z()};
    };
    std::multiset<std::array<double, 3>> a, b;
    for (int i : picked) a.insert(coord_key(cloud.row(i)));
    for (int i : picked2) b.insert(coord_key(shuffled.row(i)));
    CHECK(a == b);
}

TEST_CASE("point encoder pyramid shapes and invariances") {
    const nn::ModelConfig cfg = tiny_config();
    const nn::ParamStore store = nn::build_params(cfg, 13);
    Rng rng(31);
    const Eigen::MatrixXd cloud = data::normalize_cloud(sphere_cloud(rng, 64));

    ad::Tape t;
    nn::Binder binder(t, store);
    const auto pyr = nn::point_encode(t, cloud, binder, cfg);
    CHECK(pyr.deepest.rows() == cfg.channels);
    CHECK(pyr.deepest.cols() == 4);
    CHECK(pyr.level_features[1].cols() == 16);
    CHECK(pyr.level_features[2].cols() == 8);
    CHECK(pyr.deepest.val().allFinite());

    // translation before normalization changes nothing end to end
    Eigen::MatrixXd moved = sphere_cloud(rng, 64);
    const Eigen::MatrixXd base = data::normalize_cloud(moved);
    moved.rowwise() += Eigen::RowVector3d(3.0, -7.0, 0.5);
    const Eigen::MatrixXd renorm = data::normalize_cloud(moved);
    CHECK((base - renorm).norm() < 1e-12);

    CHECK_THROWS_AS(nn::compute_point_geometry(Eigen::MatrixXd::Ones(64, 3), cfg), Error);
}

TEST_CASE("feature propagation: constants interpolate to constants") {
    nn::ModelConfig cfg = tiny_config();
    cfg.sa_levels = {{8, 1.0, 4}};  // single level: the lone FP step has no skip
    nn::ParamStore store = nn::build_params(cfg, 1);
    store.at("fp.0.w") = Mat::Identity(cfg.channels, cfg.channels);
    store.at("fp.0.b") = Mat::Zero(cfg.channels, 1);

    Rng rng(41);
    const Eigen::MatrixXd cloud = data::normalize_cloud(sphere_cloud(rng, 32));
    ad::Tape t;
    nn::Binder binder(t, store);
    const auto pyr = nn::point_encode(t, cloud, binder, cfg);
    Var constant = t.input(Mat::Constant(cfg.channels, 8, 1.5));
    Var up = nn::fp_upsample(t, pyr, constant, binder, cfg);
    CHECK(up.rows() == cfg.channels);
    CHECK(up.cols() == 32);
    CHECK((up.val().array() - 1.5).abs().maxCoeff() < 1e-9);
}

TEST_CASE("coincident interpolation targets take all the weight") {
    const nn::ModelConfig cfg = tiny_config();
    Rng rng(43);
    const Eigen::MatrixXd cloud = data::normalize_cloud(sphere_cloud(rng, 64));
    const auto g = nn::compute_point_geometry(cloud, cfg);
    // the deepest FP step interpolates level-3 features onto level-2 coords;
    // every level-3 point is also a level-2 point (FPS picks real points)
    const auto& idx = *g.fp_indices[0];
    const auto& w = *g.fp_weights[0];
    const Eigen::MatrixXd& from = g.level_coords[3];
    const Eigen::MatrixXd& to = g.level_coords[2];
    int coincident = 0;
    for (Eigen::Index i = 0; i < to.rows(); ++i) {
        for (size_t k = 0; k < idx[static_cast<size_t>(i)].size(); ++k) {
            if ((from.row(idx[static_cast<size_t>(i)][k]) - to.row(i)).norm() == 0.0) {
                ++coincident;
                CHECK(w[static_cast<size_t>(i)][k] > 1.0 - 1e-6);
            }
        }
    }
    CHECK(coincident >= 4);  // all deepest points coincide with a shallower one
}

TEST_CASE("fp_upsample gradcheck against finite differences") {
    const nn::ModelConfig cfg = tiny_config();
    const nn::ParamStore store = nn::build_params(cfg, 17);
    Rng rng(47);
    const Eigen::MatrixXd cloud = data::normalize_cloud(sphere_cloud(rng, 48));
    const auto geometry = std::make_shared<nn::PointGeometry>(nn::compute_point_geometry(cloud, cfg));
    const Mat deep0 = random_mat(rng, cfg.channels, 4);

    const double err = testing::gradcheck(
        [&](ad::Tape& t, Var deep) {
            nn::Binder binder(t, store);
            auto pyr = nn::point_encode(t, geometry, binder, cfg);
            return ad::mean_all(nn::fp_upsample(t, pyr, deep, binder, cfg));
        },
        deep0, rng, 20);
    CHECK(err < 1e-4);
}

TEST_CASE("text encoder basics") {
    const nn::ModelConfig cfg = tiny_config();
    const nn::ParamStore store = nn::build_params(cfg, 19);

    ad::Tape t;
    nn::Binder binder(t, store);
    const auto a = nn::text_encode(t, "A curved handle fits the hand.", binder, cfg);
    const auto b = nn::text_encode(t, "A curved handle fits the hand.", binder, cfg);
    CHECK(a.tokens.val() == b.tokens.val());
    CHECK(a.pooled.val() == b.pooled.val());

    const auto single = nn::text_encode(t, "handle", binder, cfg);
    CHECK(single.tokens.rows() == 1);
    CHECK((single.pooled.val() - single.tokens.val().row(0)).norm() == doctest::Approx(0.0));

    std::string sixty;
    for (int i = 0; i < 60; ++i) sixty += "tok" + std::to_string(i) + " ";
    const auto long_text = nn::text_encode(t, sixty, binder, cfg);
    CHECK(long_text.tokens.rows() == 60);
    CHECK(long_text.tokens.cols() == cfg.channels);

    std::string over;
    for (int i = 0; i < 100; ++i) over += "w" + std::to_string(i) + " ";
    CHECK(nn::text_encode(t, over, binder, cfg).tokens.rows() == cfg.token_cap);

    CHECK_THROWS_AS(static_cast<void>(nn::text_encode(t, "  ... ", binder, cfg)), Error);
}

TEST_CASE("frozen adapters replace the trainable encoders") {
    nn::ModelConfig cfg = tiny_config();
    auto adapters = std::make_shared<nn::EncoderAdapters>();
    adapters->image = [&](const InteractionImage&) {
        return Mat::Constant(cfg.channels, cfg.image_tokens(), 0.25);
    };
    adapters->text = [&](const std::string& text) {
        return Mat::Constant(static_cast<Eigen::Index>(text.size() % 7 + 1), cfg.channels, 0.5);
    };
    cfg.adapters = adapters;
    const nn::ParamStore store = nn::build_params(cfg, 23);

    ad::Tape t;
    nn::Binder binder(t, store);
    Var f = nn::image_encode(t, make_image(32, 0.9), binder, cfg);
    CHECK((f.val().array() == 0.25).all());
    const auto emb = nn::text_encode(t, "anything", binder, cfg);
    CHECK((emb.tokens.val().array() == 0.5).all());

    // adapter outputs are frozen: no parameter gradients flow through them
    t.backward(ad::add(ad::mean_all(f), ad::mean_all(emb.pooled)));
    std::map<std::string, Mat> grads;
    binder.read_grads(grads);
    CHECK(grads.empty());

    // shape violations are rejected
    auto bad = std::make_shared<nn::EncoderAdapters>();
    bad->image = [&](const InteractionImage&) { return Mat::Ones(1, 1); };
    nn::ModelConfig bad_cfg = tiny_config();
    bad_cfg.adapters = bad;
    CHECK_THROWS_AS(static_cast<void>(nn::image_encode(t, make_image(32, 0.1), binder, bad_cfg)),
                    Error);
}
