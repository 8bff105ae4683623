// Copyright (C) 2026 The great authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "great/decoder_loss.hpp"
#include "great/knowledge.hpp"
#include "great/metrics.hpp"
#include "great/pipeline.hpp"

using namespace great;
using ad::Mat;

namespace {

Mat random_mat(Rng& rng, Eigen::Index r, Eigen::Index c) {
    Mat m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.normal();
    return m;
}

Eigen::MatrixXd random_cloud(Rng& rng, int n) {
    Eigen::MatrixXd c(n, 3);
    for (int i = 0; i < n; ++i) {
        Eigen::RowVector3d v(rng.normal(), rng.normal(), rng.normal());
        c.row(i) = v / std::max(v.norm(), 1e-9);
    }
    return data::normalize_cloud(c);
}

nn::ModelConfig bench_model(int channels) {
    nn::ModelConfig m;
    m.channels = channels;
    m.image_size = 224;
    return m;
}

data::PairedSample bench_sample(Rng& rng, const nn::ModelConfig& model) {
    data::PairedSample s;
    s.image.id = "bench";
    s.image.object_category = "mug";
    s.image.affordance_category = "grasp";
    s.image.height = s.image.width = model.image_size;
    for (auto& ch : s.image.pixels) {
        ch.resize(static_cast<size_t>(model.image_size) * model.image_size);
        for (auto& v : ch) v = rng.uniform();
    }
    s.points.id = "cloud";
    s.points.object_category = "mug";
    s.points.coords = random_cloud(rng, 2048);
    s.label.instance_id = "cloud";
    s.label.affordance_category = "grasp";
    s.label.heatmap = Eigen::VectorXd::Zero(2048);
    return s;
}

KnowledgeRecord bench_record() {
    KnowledgeRecord r;
    r.image_id = "bench";
    r.object_text = "the handle is a curved loop with a gap that fits fingers";
    r.affordance_texts = {"a person holds the mug", "a person pours from it", "a person lifts it"};
    return r;
}

void BM_FarthestPointSample(benchmark::State& state) {
    Rng rng(1);
    const Eigen::MatrixXd cloud = random_cloud(rng, 2048);
    for (auto _ : state) {
        auto picked = nn::farthest_point_sample(cloud, static_cast<int>(state.range(0)));
        benchmark::DoNotOptimize(picked);
    }
}
BENCHMARK(BM_FarthestPointSample)->Arg(64)->Arg(512);

void BM_PointGeometry(benchmark::State& state) {
    Rng rng(2);
    const Eigen::MatrixXd cloud = random_cloud(rng, 2048);
    const nn::ModelConfig model = bench_model(32);
    for (auto _ : state) {
        auto g = nn::compute_point_geometry(cloud, model);
        benchmark::DoNotOptimize(g);
    }
}
BENCHMARK(BM_PointGeometry);

void BM_IntegrateKnowledge(benchmark::State& state) {
    const nn::ModelConfig model = bench_model(static_cast<int>(state.range(0)));
    const nn::ParamStore store = nn::build_params(model, 1);
    Rng rng(3);
    const Mat t_obj = random_mat(rng, 32, model.channels);
    const Mat t_aff = random_mat(rng, 3, model.channels);
    for (auto _ : state) {
        ad::Tape tape;
        nn::Binder binder(tape, store);
        auto [io, ia] = knowledge::integrate_knowledge(tape, tape.input(t_obj), tape.input(t_aff),
                                                       binder, model);
        benchmark::DoNotOptimize(io.val());
        benchmark::DoNotOptimize(ia.val());
    }
}
BENCHMARK(BM_IntegrateKnowledge)->Arg(32)->Arg(512);

void BM_ForwardPass(benchmark::State& state) {
    const nn::ModelConfig model = bench_model(static_cast<int>(state.range(0)));
    const nn::ParamStore store = nn::build_params(model, 1);
    Rng rng(4);
    const auto sample = bench_sample(rng, model);
    const auto record = bench_record();
    const auto geometry = std::make_shared<nn::PointGeometry>(
        nn::compute_point_geometry(sample.points.coords, model));
    for (auto _ : state) {
        auto fw = pipeline::forward(sample, record, store, model, geometry);
        benchmark::DoNotOptimize(fw.phi.val());
    }
}
BENCHMARK(BM_ForwardPass)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
    const nn::ModelConfig model = bench_model(32);
    nn::ParamStore store = nn::build_params(model, 1);
    nn::Adam adam(1e-3);
    Rng rng(5);
    const auto sample = bench_sample(rng, model);
    const auto record = bench_record();
    const auto geometry = std::make_shared<nn::PointGeometry>(
        nn::compute_point_geometry(sample.points.coords, model));
    Eigen::VectorXd label = Eigen::VectorXd::Zero(2048);
    for (int i = 0; i < 2048; ++i) label(i) = rng.uniform() < 0.15 ? 0.8 : 0.0;
    for (auto _ : state) {
        auto fw = pipeline::forward(sample, record, store, model, geometry);
        ad::Var loss = decoder::total_loss(*fw.tape, fw.phi, label);
        fw.tape->backward(loss);
        std::map<std::string, Mat> grads;
        fw.params->read_grads(grads);
        adam.step(store, grads);
        benchmark::DoNotOptimize(loss.val());
    }
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

void BM_MetricAuc(benchmark::State& state) {
    Rng rng(6);
    Eigen::VectorXd phi(2048), label(2048);
    for (int i = 0; i < 2048; ++i) {
        phi(i) = rng.uniform();
        label(i) = rng.uniform() < 0.2 ? 0.9 : 0.1;
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(metrics::auc(phi, label));
        benchmark::DoNotOptimize(metrics::aiou(phi, label));
    }
}
BENCHMARK(BM_MetricAuc);

void BM_TotalLoss(benchmark::State& state) {
    Rng rng(7);
    Mat phi(1, 2048);
    Eigen::VectorXd label(2048);
    for (int i = 0; i < 2048; ++i) {
        phi(0, i) = 0.02 + 0.96 * rng.uniform();
        label(i) = rng.uniform() < 0.2 ? 0.9 : 0.0;
    }
    for (auto _ : state) {
        ad::Tape tape;
        ad::Var v = tape.param(phi);
        ad::Var loss = decoder::total_loss(tape, v, label);
        tape.backward(loss);
        benchmark::DoNotOptimize(v.grad());
    }
}
BENCHMARK(BM_TotalLoss);

}  // namespace

BENCHMARK_MAIN();
