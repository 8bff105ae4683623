// Copyright (C) 2026 The great authors
// SPDX-License-Identifier: Apache-2.0

#include "great/tensor.hpp"

#include <cmath>
#include <utility>

#include "great/error.hpp"

namespace great::ad {

namespace {

void check_same_shape(const Var& a, const Var& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw Error(ErrorKind::shape,
                    std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                        std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                        std::to_string(b.cols()));
    }
}

void check_same_tape(const Var& a, const Var& b, const char* op) {
    if (a.tape() != b.tape()) {
        throw Error(ErrorKind::argument, std::string(op) + ": operands on different tapes");
    }
}

}  // namespace

const Mat& Var::val() const { return tape_->node(idx_).val; }
const Mat& Var::grad() const { return tape_->node(idx_).grad; }

Var Tape::input(Mat value) { return emit(std::move(value), false, nullptr); }

Var Tape::param(Mat value) { return emit(std::move(value), true, nullptr); }

Var Tape::emit(Mat value, bool requires_grad, std::function<void(Tape&, const Mat&)> bwd) {
    Node n;
    n.val = std::move(value);
    n.requires_grad = requires_grad;
    n.bwd = std::move(bwd);
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::accumulate(int idx, const Mat& g) {
    Node& n = nodes_[static_cast<size_t>(idx)];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
        n.grad = Mat::Zero(n.val.rows(), n.val.cols());
    }
    n.grad += g;
}

void Tape::backward(Var root) {
    if (root.tape() != this) throw Error(ErrorKind::argument, "backward: var not on this tape");
    if (root.rows() != 1 || root.cols() != 1) {
        throw Error(ErrorKind::shape, "backward: root must be a 1x1 scalar");
    }
    accumulate(root.index(), Mat::Ones(1, 1));
    for (int i = root.index(); i >= 0; --i) {
        Node& n = nodes_[static_cast<size_t>(i)];
        if (n.requires_grad && n.bwd && n.grad.size() != 0) {
            n.bwd(*this, n.grad);
        }
    }
}

// ---- elementwise ----

Var add(Var a, Var b) {
    check_same_tape(a, b, "add");
    check_same_shape(a, b, "add");
    Tape& t = *a.tape();
    const int ia = a.index(), ib = b.index();
    const bool rg = t.node(ia).requires_grad || t.node(ib).requires_grad;
    return t.emit(a.val() + b.val(), rg, [ia, ib](Tape& t, const Mat& g) {
        t.accumulate(ia, g);
        t.accumulate(ib, g);
    });
}

Var sub(Var a, Var b) {
    check_same_tape(a, b, "sub");
    check_same_shape(a, b, "sub");
    Tape& t = *a.tape();
    const int ia = a.index(), ib = b.index();
    const bool rg = t.node(ia).requires_grad || t.node(ib).requires_grad;
    return t.emit(a.val() - b.val(), rg, [ia, ib](Tape& t, const Mat& g) {
        t.accumulate(ia, g);
        t.accumulate(ib, -g);
    });
}

Var hadamard(Var a, Var b) {
    check_same_tape(a, b, "hadamard");
    check_same_shape(a, b, "hadamard");
    Tape& t = *a.tape();
    const int ia = a.index(), ib = b.index();
    const bool rg = t.node(ia).requires_grad || t.node(ib).requires_grad;
    return t.emit(a.val().cwiseProduct(b.val()), rg, [ia, ib](Tape& t, const Mat& g) {
        t.accumulate(ia, g.cwiseProduct(t.node(ib).val));
        t.accumulate(ib, g.cwiseProduct(t.node(ia).val));
    });
}

Var div_elem(Var a, Var b) {
    check_same_tape(a, b, "div_elem");
    check_same_shape(a, b, "div_elem");
    Tape& t = *a.tape();
    const int ia = a.index(), ib = b.index();
    const bool rg = t.node(ia).requires_grad || t.node(ib).requires_grad;
    return t.emit(a.val().cwiseQuotient(b.val()), rg, [ia, ib](Tape& t, const Mat& g) {
        const Mat& bv = t.node(ib).val;
        t.accumulate(ia, g.cwiseQuotient(bv));
        t.accumulate(ib, -g.cwiseProduct(t.node(ia).val).cwiseQuotient(bv.cwiseProduct(bv)));
    });
}

Var scale(Var a, double s) {
    Tape& t = *a.tape();
    const int ia = a.index();
    return t.emit(a.val() * s, t.node(ia).requires_grad,
                  [ia, s](Tape& t, const Mat& g) { t.accumulate(ia, g * s); });
}

Var add_scalar(Var a, double s) {
    Tape& t = *a.tape();
    const int ia = a.index();
    return t.emit(a.val().array() + s, t.node(ia).requires_grad,
                  [ia](Tape& t, const Mat& g) { t.accumulate(ia, g); });
}

Var rsub_scalar(double s, Var a) {
    Tape& t = *a.tape();
    const int ia = a.index();
    return t.emit((s - a.val().array()).matrix(), t.node(ia).requires_grad,
                  [ia](Tape& t, const Mat& g) { t.accumulate(ia, -g); });
}

Var relu(Var a) {
    Tape& t = *a.tape();
    const int ia = a.index();
    return t.emit(a.val().cwiseMax(0.0), t.node(ia).requires_grad, [ia](Tape& t, const Mat& g) {
        const Mat mask = (t.node(ia).val.array() > 0.0).cast<double>();
        t.accumulate(ia, g.cwiseProduct(mask));
    });
}

Var sigmoid(Var a) {
    Tape& t = *a.tape();
    const int ia = a.index();
    const int io = static_cast<int>(t.size());  // index the emit below will get
    Mat y = (1.0 / (1.0 + (-a.val().array()).exp())).matrix();
    return t.emit(std::move(y), t.node(ia).requires_grad, [ia, io](Tape& t, const Mat& g) {
        const Mat& y = t.node(io).val;
        t.accumulate(ia, g.cwiseProduct(y.cwiseProduct((1.0 - y.array()).matrix())));
    });
}

Var log_elem(Var a) {
    Tape& t = *a.tape();
    const int ia = a.index();
    return t.emit(a.val().array().log().matrix(), t.node(ia).requires_grad,
                  [ia](Tape& t, const Mat& g) {
                      t.accumulate(ia, g.cwiseQuotient(t.node(ia).val));
                  });
}

Var pow_elem(Var a, double p) {
    Tape& t = *a.tape();
    const int ia = a.index();
    Mat y = a.val().array().pow(p).matrix();
    const bool rg = t.node(ia).requires_grad;
    if (p == 0.0) {
        return t.emit(std::move(y), rg, [](Tape&, const Mat&) {});
    }
    return t.emit(std::move(y), rg, [ia, p](Tape& t, const Mat& g) {
        const Mat d = (p * t.node(ia).val.array().pow(p - 1.0)).matrix();
        t.accumulate(ia, g.cwiseProduct(d));
    });
}

// ---- linear algebra ----

Var matmul(Var a, Var b) {
    check_same_tape(a, b, "matmul");
    if (a.cols() != b.rows()) {
        throw Error(ErrorKind::shape, "matmul: inner dims " + std::to_string(a.cols()) + " vs " +
                                          std::to_string(b.rows()));
    }
    Tape& t = *a.tape();
    const int ia = a.index(), ib = b.index();
    const bool rg = t.node(ia).requires_grad || t.node(ib).requires_grad;
    return t.emit(a.val() * b.val(), rg, [ia, ib](Tape& t, const Mat& g) {
        t.accumulate(ia, g * t.node(ib).val.transpose());
        t.accumulate(ib, t.node(ia).val.transpose() * g);
    });
}

Var transpose(Var a) {
    Tape& t = *a.tape();
    const int ia = a.index();
    return t.emit(a.val().transpose(), t.node(ia).requires_grad,
                  [ia](Tape& t, const Mat& g) { t.accumulate(ia, g.transpose()); });
}

Var rows_softmax(Var a) {
    Tape& t = *a.tape();
    const int ia = a.index();
    const int io = static_cast<int>(t.size());
    Mat y(a.rows(), a.cols());
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
        const double mx = a.val().row(r).maxCoeff();
        Eigen::ArrayXd e = (a.val().row(r).array() - mx).exp();
        y.row(r) = (e / e.sum()).matrix();
    }
    return t.emit(std::move(y), t.node(ia).requires_grad, [ia, io](Tape& t, const Mat& g) {
        const Mat& y = t.node(io).val;
        Mat gin(y.rows(), y.cols());
        for (Eigen::Index r = 0; r < y.rows(); ++r) {
            const double dot = g.row(r).dot(y.row(r));
            gin.row(r) = y.row(r).cwiseProduct((g.row(r).array() - dot).matrix());
        }
        t.accumulate(ia, gin);
    });
}

// ---- reductions / broadcasts ----

Var sum_all(Var a) {
    Tape& t = *a.tape();
    const int ia = a.index();
    Mat y(1, 1);
    y(0, 0) = a.val().sum();
    const Eigen::Index r = a.rows(), c = a.cols();
    return t.emit(std::move(y), t.node(ia).requires_grad, [ia, r, c](Tape& t, const Mat& g) {
        t.accumulate(ia, Mat::Constant(r, c, g(0, 0)));
    });
}

Var mean_all(Var a) { return scale(sum_all(a), 1.0 / static_cast<double>(a.rows() * a.cols())); }

Var mean_cols(Var a) {
    Tape& t = *a.tape();
    const int ia = a.index();
    const Eigen::Index c = a.cols();
    return t.emit(a.val().rowwise().mean(), t.node(ia).requires_grad,
                  [ia, c](Tape& t, const Mat& g) {
                      t.accumulate(ia, g.replicate(1, c) / static_cast<double>(c));
                  });
}

Var mean_rows(Var a) {
    Tape& t = *a.tape();
    const int ia = a.index();
    const Eigen::Index r = a.rows();
    return t.emit(a.val().colwise().mean(), t.node(ia).requires_grad,
                  [ia, r](Tape& t, const Mat& g) {
                      t.accumulate(ia, g.replicate(r, 1) / static_cast<double>(r));
                  });
}

Var broadcast_cols(Var a, int n) {
    if (a.cols() != 1) throw Error(ErrorKind::shape, "broadcast_cols: expected a column vector");
    Tape& t = *a.tape();
    const int ia = a.index();
    return t.emit(a.val().replicate(1, n), t.node(ia).requires_grad,
                  [ia](Tape& t, const Mat& g) { t.accumulate(ia, g.rowwise().sum()); });
}

Var add_col_bias(Var a, Var bias) {
    check_same_tape(a, bias, "add_col_bias");
    if (bias.cols() != 1 || bias.rows() != a.rows()) {
        throw Error(ErrorKind::shape, "add_col_bias: bias must be [rows x 1]");
    }
    Tape& t = *a.tape();
    const int ia = a.index(), ib = bias.index();
    const bool rg = t.node(ia).requires_grad || t.node(ib).requires_grad;
    return t.emit(a.val().colwise() + Eigen::VectorXd(bias.val().col(0)), rg,
                  [ia, ib](Tape& t, const Mat& g) {
                      t.accumulate(ia, g);
                      t.accumulate(ib, g.rowwise().sum());
                  });
}

// ---- indexing ----

Var concat_rows(Var a, Var b) {
    check_same_tape(a, b, "concat_rows");
    if (a.cols() != b.cols()) throw Error(ErrorKind::shape, "concat_rows: column count mismatch");
    Tape& t = *a.tape();
    const int ia = a.index(), ib = b.index();
    Mat y(a.rows() + b.rows(), a.cols());
    y.topRows(a.rows()) = a.val();
    y.bottomRows(b.rows()) = b.val();
    const Eigen::Index ra = a.rows(), rb = b.rows();
    const bool rg = t.node(ia).requires_grad || t.node(ib).requires_grad;
    return t.emit(std::move(y), rg, [ia, ib, ra, rb](Tape& t, const Mat& g) {
        t.accumulate(ia, g.topRows(ra));
        t.accumulate(ib, g.bottomRows(rb));
    });
}

Var gather_cols(Var a, std::vector<int> idx) {
    Tape& t = *a.tape();
    const int ia = a.index();
    Mat y(a.rows(), static_cast<Eigen::Index>(idx.size()));
    for (size_t j = 0; j < idx.size(); ++j) {
        if (idx[j] < 0 || idx[j] >= a.cols()) throw Error(ErrorKind::shape, "gather_cols: index out of range");
        y.col(static_cast<Eigen::Index>(j)) = a.val().col(idx[j]);
    }
    auto ids = std::make_shared<std::vector<int>>(std::move(idx));
    return t.emit(std::move(y), t.node(ia).requires_grad, [ia, ids](Tape& t, const Mat& g) {
        Mat gin = Mat::Zero(t.node(ia).val.rows(), t.node(ia).val.cols());
        for (size_t j = 0; j < ids->size(); ++j) {
            gin.col((*ids)[j]) += g.col(static_cast<Eigen::Index>(j));
        }
        t.accumulate(ia, gin);
    });
}

Var gather_rows(Var a, std::vector<int> idx) {
    Tape& t = *a.tape();
    const int ia = a.index();
    Mat y(static_cast<Eigen::Index>(idx.size()), a.cols());
    for (size_t j = 0; j < idx.size(); ++j) {
        if (idx[j] < 0 || idx[j] >= a.rows()) throw Error(ErrorKind::shape, "gather_rows: index out of range");
        y.row(static_cast<Eigen::Index>(j)) = a.val().row(idx[j]);
    }
    auto ids = std::make_shared<std::vector<int>>(std::move(idx));
    return t.emit(std::move(y), t.node(ia).requires_grad, [ia, ids](Tape& t, const Mat& g) {
        Mat gin = Mat::Zero(t.node(ia).val.rows(), t.node(ia).val.cols());
        for (size_t j = 0; j < ids->size(); ++j) {
            gin.row((*ids)[j]) += g.row(static_cast<Eigen::Index>(j));
        }
        t.accumulate(ia, gin);
    });
}

Var block_max_cols(Var a, int block) {
    if (block <= 0 || a.cols() % block != 0) {
        throw Error(ErrorKind::shape, "block_max_cols: columns not divisible by block");
    }
    Tape& t = *a.tape();
    const int ia = a.index();
    const Eigen::Index m = a.cols() / block;
    Mat y(a.rows(), m);
    auto argmax = std::make_shared<std::vector<int>>(static_cast<size_t>(a.rows() * m));
    for (Eigen::Index j = 0; j < m; ++j) {
        for (Eigen::Index r = 0; r < a.rows(); ++r) {
            int best = 0;
            double bv = a.val()(r, j * block);
            for (int k = 1; k < block; ++k) {
                const double v = a.val()(r, j * block + k);
                if (v > bv) {
                    bv = v;
                    best = k;
                }
            }
            y(r, j) = bv;
            (*argmax)[static_cast<size_t>(r * m + j)] = static_cast<int>(j) * block + best;
        }
    }
    return t.emit(std::move(y), t.node(ia).requires_grad, [ia, argmax, m](Tape& t, const Mat& g) {
        Mat gin = Mat::Zero(t.node(ia).val.rows(), t.node(ia).val.cols());
        for (Eigen::Index j = 0; j < m; ++j) {
            for (Eigen::Index r = 0; r < g.rows(); ++r) {
                gin(r, (*argmax)[static_cast<size_t>(r * m + j)]) += g(r, j);
            }
        }
        t.accumulate(ia, gin);
    });
}

Var interp_cols(Var a, std::shared_ptr<const std::vector<std::vector<int>>> indices,
                std::shared_ptr<const std::vector<std::vector<double>>> weights) {
    if (!indices || !weights || indices->size() != weights->size()) {
        throw Error(ErrorKind::argument, "interp_cols: indices/weights size mismatch");
    }
    Tape& t = *a.tape();
    const int ia = a.index();
    const Eigen::Index n = static_cast<Eigen::Index>(indices->size());
    Mat y = Mat::Zero(a.rows(), n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& ids = (*indices)[static_cast<size_t>(i)];
        const auto& ws = (*weights)[static_cast<size_t>(i)];
        for (size_t k = 0; k < ids.size(); ++k) {
            y.col(i) += ws[k] * a.val().col(ids[k]);
        }
    }
    return t.emit(std::move(y), t.node(ia).requires_grad,
                  [ia, indices, weights](Tape& t, const Mat& g) {
                      Mat gin = Mat::Zero(t.node(ia).val.rows(), t.node(ia).val.cols());
                      for (Eigen::Index i = 0; i < g.cols(); ++i) {
                          const auto& ids = (*indices)[static_cast<size_t>(i)];
                          const auto& ws = (*weights)[static_cast<size_t>(i)];
                          for (size_t k = 0; k < ids.size(); ++k) {
                              gin.col(ids[k]) += ws[k] * g.col(i);
                          }
                      }
                      t.accumulate(ia, gin);
                  });
}

// ---- convolution ----

namespace {

// spatial source column for each (kernel offset, output pixel); -1 = zero pad
std::shared_ptr<std::vector<int>> im2col_map(const Conv2dSpec& s) {
    const int oh = s.out_height(), ow = s.out_width();
    auto map = std::make_shared<std::vector<int>>(static_cast<size_t>(s.kernel * s.kernel * oh * ow), -1);
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            const int j = oy * ow + ox;
            for (int ky = 0; ky < s.kernel; ++ky) {
                for (int kx = 0; kx < s.kernel; ++kx) {
                    const int sy = oy * s.stride - s.pad + ky;
                    const int sx = ox * s.stride - s.pad + kx;
                    if (sy >= 0 && sy < s.height && sx >= 0 && sx < s.width) {
                        (*map)[static_cast<size_t>((ky * s.kernel + kx) * oh * ow + j)] = sy * s.width + sx;
                    }
                }
            }
        }
    }
    return map;
}

Mat build_patches(const Mat& x, const Conv2dSpec& s, const std::vector<int>& map) {
    const int n_out = s.out_height() * s.out_width();
    const int kk = s.kernel * s.kernel;
    Mat p = Mat::Zero(static_cast<Eigen::Index>(s.in_ch) * kk, n_out);
    for (int off = 0; off < kk; ++off) {
        for (int j = 0; j < n_out; ++j) {
            const int src = map[static_cast<size_t>(off * n_out + j)];
            if (src < 0) continue;
            for (int ci = 0; ci < s.in_ch; ++ci) {
                p(static_cast<Eigen::Index>(ci) * kk + off, j) = x(ci, src);
            }
        }
    }
    return p;
}

}  // namespace

Var conv2d(Var x, Var w, Var b, const Conv2dSpec& spec) {
    check_same_tape(x, w, "conv2d");
    check_same_tape(x, b, "conv2d");
    if (x.rows() != spec.in_ch || x.cols() != static_cast<Eigen::Index>(spec.height) * spec.width) {
        throw Error(ErrorKind::shape, "conv2d: input is not [in_ch x H*W]");
    }
    const int kk = spec.kernel * spec.kernel;
    if (w.rows() != spec.out_ch || w.cols() != static_cast<Eigen::Index>(spec.in_ch) * kk) {
        throw Error(ErrorKind::shape, "conv2d: weight is not [out_ch x in_ch*k*k]");
    }
    if (b.rows() != spec.out_ch || b.cols() != 1) {
        throw Error(ErrorKind::shape, "conv2d: bias is not [out_ch x 1]");
    }
    Tape& t = *x.tape();
    const int ix = x.index(), iw = w.index(), ib = b.index();
    auto map = im2col_map(spec);
    auto patches = std::make_shared<Mat>(build_patches(x.val(), spec, *map));
    Mat y = (w.val() * (*patches)).colwise() + Eigen::VectorXd(b.val().col(0));
    const bool rg = t.node(ix).requires_grad || t.node(iw).requires_grad || t.node(ib).requires_grad;
    const Conv2dSpec s = spec;
    return t.emit(std::move(y), rg, [ix, iw, ib, map, patches, s](Tape& t, const Mat& g) {
        t.accumulate(iw, g * patches->transpose());
        t.accumulate(ib, g.rowwise().sum());
        if (t.node(ix).requires_grad) {
            const Mat gp = t.node(iw).val.transpose() * g;  // [in_ch*k*k x n_out]
            Mat gx = Mat::Zero(s.in_ch, static_cast<Eigen::Index>(s.height) * s.width);
            const int n_out = s.out_height() * s.out_width();
            const int kk = s.kernel * s.kernel;
            for (int off = 0; off < kk; ++off) {
                for (int j = 0; j < n_out; ++j) {
                    const int src = (*map)[static_cast<size_t>(off * n_out + j)];
                    if (src < 0) continue;
                    for (int ci = 0; ci < s.in_ch; ++ci) {
                        gx(ci, src) += gp(static_cast<Eigen::Index>(ci) * kk + off, j);
                    }
                }
            }
            t.accumulate(ix, gx);
        }
    });
}

Var attention_rows(Var q, Var k, Var v, double scl) {
    Var logits = scale(matmul(q, transpose(k)), scl);
    return matmul(rows_softmax(logits), v);
}

}  // namespace great::ad
