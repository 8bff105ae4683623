// Copyright (C) 2026 The great authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <deque>
#include <functional>
#include <memory>
#include <vector>

namespace great::ad {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

class Tape;

// Handle to a node on a tape. Cheap to copy; values live on the tape.
class Var {
public:
    Var() = default;
    Var(Tape* tape, int idx) : tape_(tape), idx_(idx) {}

    const Mat& val() const;
    // Gradient accumulated by Tape::backward. Zero-sized if untouched.
    const Mat& grad() const;
    Eigen::Index rows() const { return val().rows(); }
    Eigen::Index cols() const { return val().cols(); }
    bool defined() const { return tape_ != nullptr; }
    Tape* tape() const { return tape_; }
    int index() const { return idx_; }

private:
    Tape* tape_ = nullptr;
    int idx_ = -1;
};

// Reverse-mode tape. Built per forward pass (define-by-run); backward()
// sweeps nodes in reverse creation order. Single-threaded by contract.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Leaf that does not require gradients (data, labels, fixed geometry).
    Var input(Mat value);
    // Leaf that accumulates gradients (trainable parameter).
    Var param(Mat value);

    // Seeds d(root)/d(root) = 1 and propagates. root must be 1x1.
    void backward(Var root);

    size_t size() const { return nodes_.size(); }

    // --- internal plumbing for op implementations ---
    struct Node {
        Mat val;
        Mat grad;  // lazily allocated
        bool requires_grad = false;
        std::function<void(Tape&, const Mat&)> bwd;  // (tape, output grad)
    };

    Var emit(Mat value, bool requires_grad, std::function<void(Tape&, const Mat&)> bwd);
    void accumulate(int idx, const Mat& g);
    const Node& node(int idx) const { return nodes_[static_cast<size_t>(idx)]; }

private:
    std::deque<Node> nodes_;
};

// ---- elementwise and structural ops ----

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var hadamard(Var a, Var b);
Var div_elem(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var rsub_scalar(double s, Var a);  // s - A
Var relu(Var a);
Var sigmoid(Var a);
Var log_elem(Var a);
Var pow_elem(Var a, double p);  // A must be > 0 where p < 1

// ---- linear algebra ----

Var matmul(Var a, Var b);
Var transpose(Var a);

// Row-wise softmax: each row of the result sums to 1.
Var rows_softmax(Var a);

// ---- reductions / broadcasts ----

Var sum_all(Var a);    // -> [1x1]
Var mean_all(Var a);   // -> [1x1]
Var mean_cols(Var a);  // [r x c] -> [r x 1]
Var mean_rows(Var a);  // [r x c] -> [1 x c]
Var broadcast_cols(Var a, int n);  // [r x 1] -> [r x n]
Var add_col_bias(Var a, Var bias);  // A + bias replicated over columns

// ---- indexing ----

Var concat_rows(Var a, Var b);  // vertical stack [A; B]
Var gather_cols(Var a, std::vector<int> idx);
Var gather_rows(Var a, std::vector<int> idx);

// [r x m*block] -> [r x m], max over each contiguous block of columns.
Var block_max_cols(Var a, int block);

// out.col(i) = sum_k weights[i][k] * A.col(indices[i][k]); used by feature
// propagation (inverse-distance interpolation is linear in the features).
Var interp_cols(Var a, std::shared_ptr<const std::vector<std::vector<int>>> indices,
                std::shared_ptr<const std::vector<std::vector<double>>> weights);

// ---- convolution ----

struct Conv2dSpec {
    int in_ch = 0;
    int out_ch = 0;
    int height = 0;
    int width = 0;
    int kernel = 3;
    int stride = 1;
    int pad = 0;

    int out_height() const { return (height + 2 * pad - kernel) / stride + 1; }
    int out_width() const { return (width + 2 * pad - kernel) / stride + 1; }
};

// x: [in_ch x H*W] (column index = y*W + x), w: [out_ch x in_ch*k*k],
// b: [out_ch x 1]. Returns [out_ch x outH*outW]. im2col under the hood.
Var conv2d(Var x, Var w, Var b, const Conv2dSpec& spec);

// softmax(q * k^T * scl) * v for row-major token matrices
// q: [n x d], k: [m x d], v: [m x c] -> [n x c]
Var attention_rows(Var q, Var k, Var v, double scl);

}  // namespace great::ad
