// Copyright (C) 2026 The great authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <array>
#include <string>
#include <utility>
#include <vector>

namespace great {

// One 3D object instance: exactly 2048 points in object-local coordinates.
struct PointCloudInstance {
    std::string id;
    std::string object_category;
    Eigen::MatrixXd coords;  // [n_points x 3]

    static constexpr int kPoints = 2048;
};

// Per-point affordance heatmap for one (instance, affordance) pair.
struct AffordanceAnnotation {
    std::string instance_id;
    std::string affordance_category;
    Eigen::VectorXd heatmap;  // values in [0,1]
};

// RGB interaction image, channel-major, values in [0,1].
// Pixel (c, y, x) lives at pixels[c][y*width + x].
struct InteractionImage {
    std::string id;
    std::string object_category;
    std::string affordance_category;
    int height = 0;
    int width = 0;
    std::array<std::vector<double>, 3> pixels;
};

struct ChatTurn {
    enum class Role { user, assistant };
    Role role = Role::user;
    std::string text;
    bool image_attached = false;  // user turns only; at most the first
};

// The four prompt/answer turns of one reasoning chain over one image.
struct ReasoningTranscript {
    std::string image_id;
    std::string object_category;
    std::vector<std::pair<std::string, std::string>> turns;  // (prompt, answer), exactly 4
};

// Parsed knowledge: object geometry text plus exactly three intention texts
// (the observed interaction and two analogical ones).
struct KnowledgeRecord {
    std::string image_id;
    std::string object_text;
    std::array<std::string, 3> affordance_texts;
};

// Final per-point affordance probability, each value strictly inside (0,1).
struct AffordancePrediction {
    Eigen::VectorXd phi;
};

}  // namespace great
