// Copyright (C) 2026 The great authors
// SPDX-License-Identifier: Apache-2.0

#include "great/backbones.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "great/error.hpp"
#include "great/rng.hpp"

namespace great::nn {

using ad::Mat;
using ad::Var;

// ---- image encoder ----

Var image_encode(ad::Tape& tape, const InteractionImage& image, Binder& params,
                 const ModelConfig& config) {
    if (config.adapters && config.adapters->image) {
        Mat f = config.adapters->image(image);
        if (f.rows() != config.channels || f.cols() != config.image_tokens()) {
            throw Error(ErrorKind::shape, "image adapter must return [C x N_i]");
        }
        if (!f.allFinite()) throw Error(ErrorKind::domain, "image adapter returned non-finite values");
        return tape.input(std::move(f));
    }
    const int s = config.image_size;
    if (image.height != s || image.width != s) {
        throw Error(ErrorKind::shape, "image_encode expects " + std::to_string(s) + "x" +
                                          std::to_string(s) + ", got " + std::to_string(image.height) +
                                          "x" + std::to_string(image.width));
    }
    for (const auto& ch : image.pixels) {
        if (static_cast<int>(ch.size()) != s * s) {
            throw Error(ErrorKind::shape, "image_encode: channel buffer size mismatch");
        }
    }
    Mat x(3, s * s);
    for (int c = 0; c < 3; ++c) {
        for (int i = 0; i < s * s; ++i) x(c, i) = image.pixels[static_cast<size_t>(c)][static_cast<size_t>(i)];
    }
    Var h = tape.input(std::move(x));
    const auto stages = config.image_stage_channels();
    int in_ch = 3;
    int side = s;
    for (size_t i = 0; i < stages.size(); ++i) {
        ad::Conv2dSpec spec;
        spec.in_ch = in_ch;
        spec.out_ch = stages[i];
        spec.height = spec.width = side;
        spec.kernel = 3;
        spec.stride = 2;
        spec.pad = 1;
        const std::string prefix = "img.conv" + std::to_string(i);
        h = ad::relu(ad::conv2d(h, params(prefix + ".w"), params(prefix + ".b"), spec));
        in_ch = stages[i];
        side = spec.out_height();
    }
    if (side != config.image_grid()) {
        throw Error(ErrorKind::shape, "image encoder produced an unexpected grid size");
    }
    return h;  // [C x N_i]
}

// ---- point geometry ----

std::vector<int> farthest_point_sample(const Eigen::MatrixXd& coords, int count) {
    const int n = static_cast<int>(coords.rows());
    if (count < 1 || count > n) {
        throw Error(ErrorKind::argument, "farthest_point_sample: bad count");
    }
    const Eigen::RowVector3d centroid = coords.colwise().mean();
    int start = 0;
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) {
        const double d = (coords.row(i) - centroid).squaredNorm();
        if (d < best) {
            best = d;
            start = i;
        }
    }
    std::vector<int> picked;
    picked.reserve(static_cast<size_t>(count));
    picked.push_back(start);
    std::vector<double> dist(static_cast<size_t>(n), std::numeric_limits<double>::infinity());
    int last = start;
    for (int k = 1; k < count; ++k) {
        int far = 0;
        double fd = -1.0;
        for (int i = 0; i < n; ++i) {
            const double d = (coords.row(i) - coords.row(last)).squaredNorm();
            if (d < dist[static_cast<size_t>(i)]) dist[static_cast<size_t>(i)] = d;
            if (dist[static_cast<size_t>(i)] > fd) {
                fd = dist[static_cast<size_t>(i)];
                far = i;
            }
        }
        picked.push_back(far);
        last = far;
    }
    return picked;
}

namespace {

// k nearest neighbors within radius (nearest-first); pads by cycling when the
// ball holds fewer than k. The centroid is one of the points, so the ball is
// never empty.
std::vector<int> ball_group(const Eigen::MatrixXd& coords, const Eigen::RowVector3d& center,
                            double radius, int k) {
    std::vector<std::pair<double, int>> in_ball;
    const double r2 = radius * radius;
    for (int i = 0; i < static_cast<int>(coords.rows()); ++i) {
        const double d = (coords.row(i) - center).squaredNorm();
        if (d <= r2) in_ball.push_back({d, i});
    }
    std::sort(in_ball.begin(), in_ball.end());
    std::vector<int> out;
    out.reserve(static_cast<size_t>(k));
    if (in_ball.empty()) {
        // centroid drifted off the cloud (should not happen); fall back to nn
        int best = 0;
        double bd = std::numeric_limits<double>::infinity();
        for (int i = 0; i < static_cast<int>(coords.rows()); ++i) {
            const double d = (coords.row(i) - center).squaredNorm();
            if (d < bd) {
                bd = d;
                best = i;
            }
        }
        in_ball.push_back({bd, best});
    }
    for (int j = 0; j < k; ++j) {
        out.push_back(in_ball[static_cast<size_t>(j) % in_ball.size()].second);
    }
    return out;
}

// k nearest with inverse-distance weights, floored at eps
void knn_weights(const Eigen::MatrixXd& from, const Eigen::MatrixXd& to, int k, double eps,
                 std::vector<std::vector<int>>& indices, std::vector<std::vector<double>>& weights) {
    const int n = static_cast<int>(to.rows());
    const int m = static_cast<int>(from.rows());
    const int kk = std::min(k, m);
    indices.assign(static_cast<size_t>(n), {});
    weights.assign(static_cast<size_t>(n), {});
    std::vector<std::pair<double, int>> dists(static_cast<size_t>(m));
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < m; ++j) {
            dists[static_cast<size_t>(j)] = {(from.row(j) - to.row(i)).norm(), j};
        }
        std::partial_sort(dists.begin(), dists.begin() + kk, dists.end());
        double wsum = 0.0;
        for (int j = 0; j < kk; ++j) {
            const double w = 1.0 / std::max(dists[static_cast<size_t>(j)].first, eps);
            indices[static_cast<size_t>(i)].push_back(dists[static_cast<size_t>(j)].second);
            weights[static_cast<size_t>(i)].push_back(w);
            wsum += w;
        }
        for (auto& w : weights[static_cast<size_t>(i)]) w /= wsum;
    }
}

}  // namespace

PointGeometry compute_point_geometry(const Eigen::MatrixXd& coords, const ModelConfig& config) {
    if (coords.cols() != 3) throw Error(ErrorKind::shape, "point cloud must be [n x 3]");
    if (coords.rows() < 2) throw Error(ErrorKind::validation, "point cloud needs at least 2 points");
    if (!coords.allFinite()) throw Error(ErrorKind::validation, "point cloud holds non-finite coordinates");
    // degenerate cloud: every point identical
    if ((coords.rowwise() - coords.row(0)).rowwise().norm().maxCoeff() <= 0.0) {
        throw Error(ErrorKind::validation, "degenerate point cloud: all points identical");
    }
    if (static_cast<int>(coords.rows()) <= config.sa_levels.front().points) {
        throw Error(ErrorKind::config, "first abstraction level must be smaller than the cloud");
    }

    PointGeometry g;
    g.level_coords.push_back(coords);
    for (const auto& level : config.sa_levels) {
        const Eigen::MatrixXd& prev = g.level_coords.back();
        const std::vector<int> picked = farthest_point_sample(prev, level.points);
        Eigen::MatrixXd centers(level.points, 3);
        for (int i = 0; i < level.points; ++i) centers.row(i) = prev.row(picked[static_cast<size_t>(i)]);

        std::vector<int> flat;
        flat.reserve(static_cast<size_t>(level.points) * level.neighbors);
        Eigen::MatrixXd rel(3, static_cast<Eigen::Index>(level.points) * level.neighbors);
        for (int i = 0; i < level.points; ++i) {
            const auto group = ball_group(prev, centers.row(i), level.radius, level.neighbors);
            for (int j = 0; j < level.neighbors; ++j) {
                const int src = group[static_cast<size_t>(j)];
                flat.push_back(src);
                rel.col(static_cast<Eigen::Index>(i) * level.neighbors + j) =
                    (prev.row(src) - centers.row(i)).transpose();
            }
        }
        g.group_indices.push_back(std::move(flat));
        g.group_rel_coords.push_back(std::move(rel));
        g.group_width.push_back(level.neighbors);
        g.level_coords.push_back(std::move(centers));
    }

    // FP steps: deepest -> ... -> raw
    for (int l = static_cast<int>(g.level_coords.size()) - 1; l >= 1; --l) {
        auto idx = std::make_shared<std::vector<std::vector<int>>>();
        auto w = std::make_shared<std::vector<std::vector<double>>>();
        knn_weights(g.level_coords[static_cast<size_t>(l)], g.level_coords[static_cast<size_t>(l) - 1],
                    config.fp_neighbors, config.fp_eps, *idx, *w);
        g.fp_indices.push_back(idx);
        g.fp_weights.push_back(w);
    }
    return g;
}

// ---- point encoder ----

PointFeaturePyramid point_encode(ad::Tape& tape, std::shared_ptr<const PointGeometry> geometry,
                                 Binder& params, const ModelConfig& config) {
    const PointGeometry& g = *geometry;
    const auto sa_ch = config.sa_stage_channels();
    PointFeaturePyramid pyr;
    pyr.geometry = geometry;
    pyr.level_features.resize(g.level_coords.size());

    Var features;  // undefined at the raw level
    for (size_t l = 0; l < config.sa_levels.size(); ++l) {
        const int k = g.group_width[l];
        const int n_centers = static_cast<int>(g.level_coords[l + 1].rows());
        Var grouped = tape.input(g.group_rel_coords[l]);  // [3 x n*k]
        if (features.defined()) {
            grouped = ad::concat_rows(grouped, ad::gather_cols(features, g.group_indices[l]));
        }
        const std::string prefix = "pt.sa" + std::to_string(l);
        Var h = ad::relu(ad::add_col_bias(ad::matmul(params(prefix + ".w1"), grouped), params(prefix + ".b1")));
        h = ad::relu(ad::add_col_bias(ad::matmul(params(prefix + ".w2"), h), params(prefix + ".b2")));
        features = ad::block_max_cols(h, k);  // [c_l x n_centers]
        if (features.cols() != n_centers) {
            throw Error(ErrorKind::shape, "set abstraction produced wrong center count");
        }
        pyr.level_features[l + 1] = features;
    }
    pyr.deepest = features;
    return pyr;
}

PointFeaturePyramid point_encode(ad::Tape& tape, const Eigen::MatrixXd& coords, Binder& params,
                                 const ModelConfig& config) {
    auto geometry = std::make_shared<PointGeometry>(compute_point_geometry(coords, config));
    return point_encode(tape, std::move(geometry), params, config);
}

Var fp_upsample(ad::Tape& tape, const PointFeaturePyramid& pyramid, Var deep_features, Binder& params,
                const ModelConfig& config) {
    (void)tape;
    (void)config;
    const PointGeometry& g = *pyramid.geometry;
    const int deepest = static_cast<int>(g.level_coords.size()) - 1;
    if (deep_features.cols() != g.level_coords[static_cast<size_t>(deepest)].rows()) {
        throw Error(ErrorKind::shape, "fp_upsample: deep feature count does not match deepest level");
    }
    Var h = deep_features;
    for (int step = 0; step < deepest; ++step) {
        const int target_level = deepest - 1 - step;
        Var interp = ad::interp_cols(h, g.fp_indices[static_cast<size_t>(step)],
                                     g.fp_weights[static_cast<size_t>(step)]);
        Var merged = interp;
        if (target_level >= 1 && pyramid.level_features[static_cast<size_t>(target_level)].defined()) {
            merged = ad::concat_rows(interp, pyramid.level_features[static_cast<size_t>(target_level)]);
        }
        const std::string prefix = "fp." + std::to_string(step);
        h = ad::relu(ad::add_col_bias(ad::matmul(params(prefix + ".w"), merged), params(prefix + ".b")));
    }
    return h;  // [C x n_raw]
}

// ---- text encoder ----

std::vector<int> tokenize(const std::string& text, int vocab_size, int cap) {
    std::vector<int> ids;
    std::string token;
    auto flush = [&]() {
        if (!token.empty() && static_cast<int>(ids.size()) < cap) {
            ids.push_back(static_cast<int>(fnv1a64(token) % static_cast<uint64_t>(vocab_size)));
        }
        token.clear();
    };
    for (char ch : text) {
        if (std::isalnum(static_cast<unsigned char>(ch))) {
            token.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        } else {
            flush();
        }
    }
    flush();
    return ids;
}

Var residual_attention(Var x, Var y, Var wq, Var wk, Var wv, Var wo) {
    const double scl = 1.0 / std::sqrt(static_cast<double>(wq.cols()));
    Var attended = ad::attention_rows(ad::matmul(x, wq), ad::matmul(y, wk), ad::matmul(y, wv), scl);
    return ad::add(x, ad::matmul(attended, wo));
}

TextEmbedding text_encode(ad::Tape& tape, const std::string& text, Binder& params,
                          const ModelConfig& config) {
    if (text.empty()) throw Error(ErrorKind::argument, "text_encode: empty input text");
    if (config.adapters && config.adapters->text) {
        Mat tokens = config.adapters->text(text);
        if (tokens.rows() < 1 || tokens.cols() != config.channels) {
            throw Error(ErrorKind::shape, "text adapter must return [L x C]");
        }
        if (tokens.rows() > config.token_cap) {
            tokens = tokens.topRows(config.token_cap).eval();
        }
        TextEmbedding emb;
        emb.tokens = tape.input(std::move(tokens));
        emb.pooled = ad::mean_rows(emb.tokens);
        return emb;
    }
    const std::vector<int> ids = tokenize(text, config.vocab_size, config.token_cap);
    if (ids.empty()) throw Error(ErrorKind::argument, "text_encode: no tokens in input text");
    Var tokens = ad::gather_rows(params("txt.embed"), ids);  // [L x C]
    for (int layer = 0; layer < 2; ++layer) {
        const std::string prefix = "txt.sa" + std::to_string(layer);
        tokens = residual_attention(tokens, tokens, params(prefix + ".wq"), params(prefix + ".wk"),
                                    params(prefix + ".wv"), params(prefix + ".wo"));
    }
    TextEmbedding emb;
    emb.tokens = tokens;
    emb.pooled = ad::mean_rows(tokens);  // [1 x C]
    (void)tape;
    return emb;
}

}  // namespace great::nn
