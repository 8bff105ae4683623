// Copyright (C) 2026 The great authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

namespace great::metrics {

struct MetricConfig {
    double gt_threshold = 0.5;     // label binarization for AUC / aIOU
    double aiou_start = 0.05;      // prediction threshold grid
    double aiou_stop = 0.95;
    double aiou_step = 0.05;
};

// ROC area via the Mann-Whitney statistic with average ranks for ties, in
// percent. Throws undefined_metric when the binarized label is single-class.
double auc(const Eigen::VectorXd& phi, const Eigen::VectorXd& label, const MetricConfig& = {});

// IoU against the binarized label averaged over the threshold grid, percent.
// IoU of two empty sets counts as 0.
double aiou(const Eigen::VectorXd& phi, const Eigen::VectorXd& label, const MetricConfig& = {});

// Histogram intersection of the two sum-normalized vectors, in [0,1].
double sim(const Eigen::VectorXd& phi, const Eigen::VectorXd& label);

double mae(const Eigen::VectorXd& phi, const Eigen::VectorXd& label);

struct MetricAggregate {
    double mean = 0.0;
    int used = 0;
    int skipped = 0;  // samples where the metric was undefined
};

struct MetricReport {
    MetricAggregate auc;   // percent
    MetricAggregate aiou;  // percent
    MetricAggregate sim;
    MetricAggregate mae;
    int samples = 0;
};

// Per-sample metrics averaged over the set; undefined-metric samples are
// excluded from that metric's mean and counted, never zeroed.
MetricReport evaluate_all(const std::vector<Eigen::VectorXd>& predictions,
                          const std::vector<Eigen::VectorXd>& labels, const MetricConfig& = {});

std::string report_to_json(const MetricReport& report);
// aligned text table in benchmark order: AUC, aIOU, SIM, MAE
std::string report_to_table(const MetricReport& report, const std::string& partition);

}  // namespace great::metrics
