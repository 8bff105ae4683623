// Copyright (C) 2026 The great authors
// SPDX-License-Identifier: Apache-2.0

#include "great/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "great/error.hpp"

namespace great::metrics {

namespace {

void check_lengths(const Eigen::VectorXd& phi, const Eigen::VectorXd& label) {
    if (phi.size() != label.size() || phi.size() == 0) {
        throw Error(ErrorKind::shape, "metric inputs must be nonempty and equally long");
    }
}

}  // namespace

double auc(const Eigen::VectorXd& phi, const Eigen::VectorXd& label, const MetricConfig& cfg) {
    check_lengths(phi, label);
    const Eigen::Index n = phi.size();
    Eigen::Index n_pos = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (label(i) > cfg.gt_threshold) ++n_pos;
    }
    const Eigen::Index n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) {
        throw Error(ErrorKind::undefined_metric, "auc undefined: single-class label after binarization");
    }
    std::vector<int> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return phi(a) < phi(b); });
    // average ranks over tie groups, ranks are 1-based
    double rank_sum_pos = 0.0;
    size_t i = 0;
    while (i < order.size()) {
        size_t j = i;
        while (j + 1 < order.size() && phi(order[j + 1]) == phi(order[i])) ++j;
        const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
        for (size_t k = i; k <= j; ++k) {
            if (label(order[k]) > cfg.gt_threshold) rank_sum_pos += avg_rank;
        }
        i = j + 1;
    }
    const double u = rank_sum_pos - static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0;
    return 100.0 * u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double aiou(const Eigen::VectorXd& phi, const Eigen::VectorXd& label, const MetricConfig& cfg) {
    check_lengths(phi, label);
    const Eigen::Index n = phi.size();
    const int count =
        static_cast<int>(std::floor((cfg.aiou_stop - cfg.aiou_start) / cfg.aiou_step + 1e-9)) + 1;
    double total = 0.0;
    for (int k = 0; k < count; ++k) {
        const double t = cfg.aiou_start + k * cfg.aiou_step;
        Eigen::Index inter = 0, uni = 0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const bool p = phi(i) > t;
            const bool l = label(i) > cfg.gt_threshold;
            if (p && l) ++inter;
            if (p || l) ++uni;
        }
        total += uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
    }
    return 100.0 * total / count;
}

double sim(const Eigen::VectorXd& phi, const Eigen::VectorXd& label) {
    check_lengths(phi, label);
    if (phi.minCoeff() < 0.0 || label.minCoeff() < 0.0) {
        throw Error(ErrorKind::domain, "sim requires nonnegative inputs");
    }
    const double sp = phi.sum(), sl = label.sum();
    if (sp <= 0.0 || sl <= 0.0) {
        throw Error(ErrorKind::undefined_metric, "sim undefined: zero-sum input");
    }
    double acc = 0.0;
    for (Eigen::Index i = 0; i < phi.size(); ++i) {
        acc += std::min(phi(i) / sp, label(i) / sl);
    }
    return acc;
}

double mae(const Eigen::VectorXd& phi, const Eigen::VectorXd& label) {
    check_lengths(phi, label);
    return (phi - label).cwiseAbs().mean();
}

MetricReport evaluate_all(const std::vector<Eigen::VectorXd>& predictions,
                          const std::vector<Eigen::VectorXd>& labels, const MetricConfig& cfg) {
    if (predictions.size() != labels.size()) {
        throw Error(ErrorKind::shape, "evaluate_all: prediction/label count mismatch");
    }
    MetricReport rep;
    rep.samples = static_cast<int>(predictions.size());
    auto fold = [](MetricAggregate& agg, auto&& fn) {
        try {
            const double v = fn();
            agg.mean += v;
            ++agg.used;
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::undefined_metric) throw;
            ++agg.skipped;
        }
    };
    for (size_t i = 0; i < predictions.size(); ++i) {
        const auto& p = predictions[i];
        const auto& l = labels[i];
        fold(rep.auc, [&] { return auc(p, l, cfg); });
        fold(rep.aiou, [&] { return aiou(p, l, cfg); });
        fold(rep.sim, [&] { return sim(p, l); });
        fold(rep.mae, [&] { return mae(p, l); });
    }
    for (MetricAggregate* agg : {&rep.auc, &rep.aiou, &rep.sim, &rep.mae}) {
        if (agg->used > 0) agg->mean /= agg->used;
    }
    return rep;
}

std::string report_to_json(const MetricReport& r) {
    nlohmann::json j;
    auto put = [&](const char* name, const MetricAggregate& a) {
        j[name] = {{"mean", a.mean}, {"used", a.used}, {"skipped", a.skipped}};
    };
    put("auc", r.auc);
    put("aiou", r.aiou);
    put("sim", r.sim);
    put("mae", r.mae);
    j["samples"] = r.samples;
    return j.dump(2);
}

std::string report_to_table(const MetricReport& r, const std::string& partition) {
    std::ostringstream out;
    char line[160];
    std::snprintf(line, sizeof(line), "%-20s %10s %10s %10s %10s\n", "Partition", "AUC^", "aIOU^",
                  "SIM^", "MAE_");
    out << line;
    std::snprintf(line, sizeof(line), "%-20s %10.2f %10.2f %10.3f %10.3f\n", partition.c_str(),
                  r.auc.mean, r.aiou.mean, r.sim.mean, r.mae.mean);
    out << line;
    if (r.auc.skipped + r.aiou.skipped + r.sim.skipped + r.mae.skipped > 0) {
        std::snprintf(line, sizeof(line), "skipped: auc=%d aiou=%d sim=%d mae=%d of %d samples\n",
                      r.auc.skipped, r.aiou.skipped, r.sim.skipped, r.mae.skipped, r.samples);
        out << line;
    }
    return out.str();
}

}  // namespace great::metrics
