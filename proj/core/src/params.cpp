// Copyright (C) 2026 The great authors
// SPDX-License-Identifier: Apache-2.0

#include "great/params.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "great/error.hpp"
#include "great/rng.hpp"

namespace great::nn {

using nlohmann::json;
namespace fs = std::filesystem;

void ModelConfig::validate() const {
    if (channels < 1) throw Error(ErrorKind::config, "channels must be >= 1");
    if (attn_dim < 0) throw Error(ErrorKind::config, "attn_dim must be >= 0 (0 means = channels)");
    if (image_size < 32 || image_size % 32 != 0) {
        throw Error(ErrorKind::config, "image_size must be a positive multiple of 32");
    }
    if (sa_levels.empty()) throw Error(ErrorKind::config, "at least one set-abstraction level required");
    for (const auto& l : sa_levels) {
        if (l.points < 1 || l.radius <= 0.0 || l.neighbors < 1) {
            throw Error(ErrorKind::config, "invalid set-abstraction level");
        }
    }
    for (size_t i = 1; i < sa_levels.size(); ++i) {
        if (sa_levels[i].points >= sa_levels[i - 1].points) {
            throw Error(ErrorKind::config, "set-abstraction levels must strictly shrink");
        }
    }
    if (token_cap < 1 || vocab_size < 2) throw Error(ErrorKind::config, "bad text encoder dims");
    if (fp_neighbors < 1) throw Error(ErrorKind::config, "fp_neighbors must be >= 1");
}

std::string to_json_string(const ModelConfig& c) {
    json j;
    j["channels"] = c.channels;
    j["attn_dim"] = c.attn_dim;
    j["image_size"] = c.image_size;
    j["token_cap"] = c.token_cap;
    j["vocab_size"] = c.vocab_size;
    j["fp_neighbors"] = c.fp_neighbors;
    j["fp_eps"] = c.fp_eps;
    json levels = json::array();
    for (const auto& l : c.sa_levels) {
        levels.push_back({{"points", l.points}, {"radius", l.radius}, {"neighbors", l.neighbors}});
    }
    j["sa_levels"] = levels;
    return j.dump(2);
}

ModelConfig model_config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorKind::parse, "model config parse error: " + std::string(e.what()));
    }
    ModelConfig c;
    c.channels = j.value("channels", c.channels);
    c.attn_dim = j.value("attn_dim", c.attn_dim);
    c.image_size = j.value("image_size", c.image_size);
    c.token_cap = j.value("token_cap", c.token_cap);
    c.vocab_size = j.value("vocab_size", c.vocab_size);
    c.fp_neighbors = j.value("fp_neighbors", c.fp_neighbors);
    c.fp_eps = j.value("fp_eps", c.fp_eps);
    if (j.contains("sa_levels")) {
        c.sa_levels.clear();
        for (const auto& l : j.at("sa_levels")) {
            c.sa_levels.push_back({l.at("points").get<int>(), l.at("radius").get<double>(),
                                   l.at("neighbors").get<int>()});
        }
    }
    c.validate();
    return c;
}

// ---- parameter construction ----

namespace {

ad::Mat init_weight(const std::string& name, uint64_t seed, Eigen::Index rows, Eigen::Index cols) {
    Rng rng(Rng::splitmix(seed) ^ fnv1a64(name));
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    ad::Mat w(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) w(i, j) = rng.uniform(-limit, limit);
    return w;
}

ad::Mat init_embedding(const std::string& name, uint64_t seed, Eigen::Index rows, Eigen::Index cols) {
    Rng rng(Rng::splitmix(seed) ^ fnv1a64(name));
    ad::Mat w(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) w(i, j) = rng.normal() * 0.02;
    return w;
}

void add_linear(ParamStore& p, const std::string& prefix, uint64_t seed, int out, int in) {
    p[prefix + ".w"] = init_weight(prefix + ".w", seed, out, in);
    p[prefix + ".b"] = ad::Mat::Zero(out, 1);
}

void add_attention(ParamStore& p, const std::string& prefix, uint64_t seed, int channels, int d,
                   bool with_output) {
    p[prefix + ".wq"] = init_weight(prefix + ".wq", seed, channels, d);
    p[prefix + ".wk"] = init_weight(prefix + ".wk", seed, channels, d);
    p[prefix + ".wv"] = init_weight(prefix + ".wv", seed, channels, channels);
    if (with_output) p[prefix + ".wo"] = init_weight(prefix + ".wo", seed, channels, channels);
}

void add_fuse_stack(ParamStore& p, const std::string& prefix, uint64_t seed, int channels) {
    // two 1x1 convolutions: 2C -> C -> C
    p[prefix + ".w1"] = init_weight(prefix + ".w1", seed, channels, 2 * channels);
    p[prefix + ".b1"] = ad::Mat::Zero(channels, 1);
    p[prefix + ".w2"] = init_weight(prefix + ".w2", seed, channels, channels);
    p[prefix + ".b2"] = ad::Mat::Zero(channels, 1);
}

}  // namespace

ParamStore build_params(const ModelConfig& config, uint64_t seed) {
    config.validate();
    ParamStore p;
    const int c = config.channels;
    const int d = config.d();

    // image encoder: five stride-2 3x3 conv stages
    const auto img_ch = config.image_stage_channels();
    int in_ch = 3;
    for (size_t i = 0; i < img_ch.size(); ++i) {
        const std::string prefix = "img.conv" + std::to_string(i);
        p[prefix + ".w"] = init_weight(prefix + ".w", seed, img_ch[i], in_ch * 9);
        p[prefix + ".b"] = ad::Mat::Zero(img_ch[i], 1);
        in_ch = img_ch[i];
    }

    // point encoder: per-level shared two-layer transform
    const auto sa_ch = config.sa_stage_channels();
    int prev = 0;  // raw level carries no features
    for (size_t l = 0; l < sa_ch.size(); ++l) {
        const std::string prefix = "pt.sa" + std::to_string(l);
        p[prefix + ".w1"] = init_weight(prefix + ".w1", seed, sa_ch[l], 3 + prev);
        p[prefix + ".b1"] = ad::Mat::Zero(sa_ch[l], 1);
        p[prefix + ".w2"] = init_weight(prefix + ".w2", seed, sa_ch[l], sa_ch[l]);
        p[prefix + ".b2"] = ad::Mat::Zero(sa_ch[l], 1);
        prev = sa_ch[l];
    }

    // feature propagation: deepest level back to the raw cloud
    {
        std::vector<int> skips;  // skip channels at each upsample target
        for (int l = static_cast<int>(sa_ch.size()) - 2; l >= 0; --l) skips.push_back(sa_ch[static_cast<size_t>(l)]);
        skips.push_back(0);  // raw input level
        for (size_t j = 0; j < skips.size(); ++j) {
            add_linear(p, "fp." + std::to_string(j), seed, c, c + skips[j]);
        }
    }

    // text encoder: hashed-token embedding + two self-attention layers
    p["txt.embed"] = init_embedding("txt.embed", seed, config.vocab_size, c);
    add_attention(p, "txt.sa0", seed, c, d, true);
    add_attention(p, "txt.sa1", seed, c, d, true);

    // knowledge integration (cross-attention f_m, self-attention f_d)
    add_attention(p, "kn.fm", seed, c, d, true);
    add_attention(p, "kn.fd", seed, c, d, true);

    // cross-modal co-representation (no residual/output projection)
    add_attention(p, "cm.co.p", seed, c, d, false);
    add_attention(p, "cm.co.t", seed, c, d, false);

    // geometry injection: shared two-layer FC plus fuse stack
    p["cm.inj.fphi.w1"] = init_weight("cm.inj.fphi.w1", seed, c, c);
    p["cm.inj.fphi.b1"] = ad::Mat::Zero(c, 1);
    p["cm.inj.fphi.w2"] = init_weight("cm.inj.fphi.w2", seed, c, c);
    p["cm.inj.fphi.b2"] = ad::Mat::Zero(c, 1);
    add_fuse_stack(p, "cm.inj.f", seed, c);

    // intention fusion and decoder
    add_fuse_stack(p, "cm.fus.f", seed, c);
    add_fuse_stack(p, "dec.f", seed, c);
    p["dec.head.w"] = init_weight("dec.head.w", seed, 1, c);
    p["dec.head.b"] = ad::Mat::Zero(1, 1);

    return p;
}

ad::Var Binder::operator()(const std::string& name) {
    auto it = bound_.find(name);
    if (it != bound_.end()) return it->second;
    auto pit = store_.find(name);
    if (pit == store_.end()) {
        throw Error(ErrorKind::config, "unknown parameter: " + name);
    }
    ad::Var v = tape_.param(pit->second);
    bound_.emplace(name, v);
    return v;
}

void Binder::read_grads(std::map<std::string, ad::Mat>& sink) const {
    for (const auto& [name, var] : bound_) {
        const ad::Mat& g = var.grad();
        if (g.size() == 0) continue;
        auto it = sink.find(name);
        if (it == sink.end()) {
            sink[name] = g;
        } else {
            it->second += g;
        }
    }
}

void Adam::step(ParamStore& params, const std::map<std::string, ad::Mat>& grads) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (auto& [name, g] : grads) {
        auto pit = params.find(name);
        if (pit == params.end()) throw Error(ErrorKind::config, "gradient for unknown parameter: " + name);
        ad::Mat& p = pit->second;
        ad::Mat& m = m_.try_emplace(name, ad::Mat::Zero(p.rows(), p.cols())).first->second;
        ad::Mat& v = v_.try_emplace(name, ad::Mat::Zero(p.rows(), p.cols())).first->second;
        m = beta1_ * m + (1.0 - beta1_) * g;
        v = beta2_ * v + (1.0 - beta2_) * g.cwiseProduct(g);
        const ad::Mat mhat = m / bc1;
        const ad::Mat vhat = v / bc2;
        p -= lr_ * mhat.cwiseQuotient((vhat.cwiseSqrt().array() + eps_).matrix());
    }
}

// ---- checkpoint ----

namespace {
constexpr char kMagic[8] = {'G', 'R', 'T', 'C', 'K', 'P', 'T', '1'};
}

void save_checkpoint(const ParamStore& params, const ModelConfig& config, const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::io, "cannot write checkpoint: " + path.string());
    out.write(kMagic, sizeof(kMagic));
    const uint32_t count = static_cast<uint32_t>(params.size());
    out.write(reinterpret_cast<const char*>(&count), sizeof(count));
    for (const auto& [name, mat] : params) {
        const uint32_t len = static_cast<uint32_t>(name.size());
        out.write(reinterpret_cast<const char*>(&len), sizeof(len));
        out.write(name.data(), len);
        const uint64_t rows = static_cast<uint64_t>(mat.rows());
        const uint64_t cols = static_cast<uint64_t>(mat.cols());
        out.write(reinterpret_cast<const char*>(&rows), sizeof(rows));
        out.write(reinterpret_cast<const char*>(&cols), sizeof(cols));
        out.write(reinterpret_cast<const char*>(mat.data()),
                  static_cast<std::streamsize>(sizeof(double) * mat.size()));
    }
    if (!out) throw Error(ErrorKind::io, "short write: " + path.string());
    std::ofstream side(path.string() + ".json", std::ios::trunc);
    if (!side) throw Error(ErrorKind::io, "cannot write checkpoint sidecar: " + path.string() + ".json");
    side << to_json_string(config) << "\n";
}

std::pair<ParamStore, ModelConfig> load_checkpoint(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::io, "cannot open checkpoint: " + path.string());
    char magic[8];
    in.read(magic, sizeof(magic));
    if (in.gcount() != sizeof(magic) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw Error(ErrorKind::format, "not a checkpoint file (bad format tag): " + path.string());
    }
    uint32_t count = 0;
    in.read(reinterpret_cast<char*>(&count), sizeof(count));
    ParamStore params;
    for (uint32_t i = 0; i < count; ++i) {
        uint32_t len = 0;
        in.read(reinterpret_cast<char*>(&len), sizeof(len));
        std::string name(len, '\0');
        in.read(name.data(), len);
        uint64_t rows = 0, cols = 0;
        in.read(reinterpret_cast<char*>(&rows), sizeof(rows));
        in.read(reinterpret_cast<char*>(&cols), sizeof(cols));
        if (!in || rows == 0 || cols == 0 || rows * cols > (1ull << 32)) {
            throw Error(ErrorKind::format, "corrupt checkpoint entry in " + path.string());
        }
        ad::Mat mat(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
        in.read(reinterpret_cast<char*>(mat.data()),
                static_cast<std::streamsize>(sizeof(double) * rows * cols));
        if (!in) throw Error(ErrorKind::format, "truncated checkpoint: " + path.string());
        params.emplace(std::move(name), std::move(mat));
    }
    std::ifstream side(path.string() + ".json");
    if (!side) throw Error(ErrorKind::io, "missing checkpoint sidecar: " + path.string() + ".json");
    std::string text((std::istreambuf_iterator<char>(side)), std::istreambuf_iterator<char>());
    return {std::move(params), model_config_from_json(text)};
}

}  // namespace great::nn
