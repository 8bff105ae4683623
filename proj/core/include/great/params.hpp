// Copyright (C) 2026 The great authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "great/model_config.hpp"
#include "great/tensor.hpp"

namespace great::nn {

// Named parameter matrices. std::map keeps iteration order deterministic,
// which the optimizer and the checkpoint format rely on.
using ParamStore = std::map<std::string, ad::Mat>;

// Builds every parameter the model needs; initialization is a pure function
// of (name, seed) so construction order never matters.
ParamStore build_params(const ModelConfig& config, uint64_t seed);

// Per-forward bridge between the store and a tape. Parameters bind lazily;
// after backward, read_grads() folds their gradients into an accumulator.
class Binder {
public:
    Binder(ad::Tape& tape, const ParamStore& store) : tape_(tape), store_(store) {}

    ad::Var operator()(const std::string& name);

    void read_grads(std::map<std::string, ad::Mat>& sink) const;

private:
    ad::Tape& tape_;
    const ParamStore& store_;
    std::map<std::string, ad::Var> bound_;
};

class Adam {
public:
    explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(ParamStore& params, const std::map<std::string, ad::Mat>& grads);

private:
    double lr_, beta1_, beta2_, eps_;
    int t_ = 0;
    std::map<std::string, ad::Mat> m_, v_;
};

// Binary archive of named double matrices plus a JSON sidecar (<path>.json)
// recording the model dims; format-tagged.
void save_checkpoint(const ParamStore& params, const ModelConfig& config,
                     const std::filesystem::path& path);
std::pair<ParamStore, ModelConfig> load_checkpoint(const std::filesystem::path& path);

}  // namespace great::nn
