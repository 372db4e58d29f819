// Copyright 2026 moonlite authors
// SPDX-License-Identifier: Apache-2.0
//
// Differentiable kernels. Eigen maps over the flat tensor storage do the
// math; reductions are single-threaded and fixed-order so repeated runs
// are bit-identical.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "moonlite/tape.hpp"

namespace moonlite {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using CMatMap = Eigen::Map<const RowMat>;
using ArrMap = Eigen::Map<Eigen::ArrayXd>;
using CArrMap = Eigen::Map<const Eigen::ArrayXd>;

CMatMap mat(const Tensor& t) { return CMatMap(t.data.data(), t.rows(), t.cols()); }
MatMap mat(Tensor& t) { return MatMap(t.data.data(), t.rows(), t.cols()); }
CArrMap arr(const Tensor& t) { return CArrMap(t.data.data(), t.numel()); }
ArrMap arr(Tensor& t) { return ArrMap(t.data.data(), t.numel()); }

void require(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
}

double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

Var matmul(Tape& t, Var a, Var b) {
    const Tensor& A = t.val(a);
    const Tensor& B = t.val(b);
    require(A.rank() <= 2 && B.rank() <= 2, "matmul: operands must be rank <= 2");
    require(A.cols() == B.rows(), "matmul: inner dimensions disagree, " + shape_str(A.shape) +
                                      " vs " + shape_str(B.shape));
    Tensor C = Tensor::zeros({A.rows(), B.cols()});
    mat(C).noalias() = mat(A) * mat(B);
    bool rg = t.wants_grad(a) || t.wants_grad(b);
    return t.emplace(std::move(C), rg, [a, b](Tape& t, const Tensor& g) {
        if (t.wants_grad(a)) mat(t.grad_buf(a)).noalias() += mat(g) * mat(t.val(b)).transpose();
        if (t.wants_grad(b)) mat(t.grad_buf(b)).noalias() += mat(t.val(a)).transpose() * mat(g);
    });
}

Var matmul_nt(Tape& t, Var a, Var b) {
    const Tensor& A = t.val(a);
    const Tensor& B = t.val(b);
    require(A.rank() <= 2 && B.rank() <= 2, "matmul_nt: operands must be rank <= 2");
    require(A.cols() == B.cols(), "matmul_nt: inner dimensions disagree, " + shape_str(A.shape) +
                                      " vs " + shape_str(B.shape));
    Tensor C = Tensor::zeros({A.rows(), B.rows()});
    mat(C).noalias() = mat(A) * mat(B).transpose();
    bool rg = t.wants_grad(a) || t.wants_grad(b);
    return t.emplace(std::move(C), rg, [a, b](Tape& t, const Tensor& g) {
        if (t.wants_grad(a)) mat(t.grad_buf(a)).noalias() += mat(g) * mat(t.val(b));
        if (t.wants_grad(b)) mat(t.grad_buf(b)).noalias() += mat(g).transpose() * mat(t.val(a));
    });
}

Var add(Tape& t, Var a, Var b) {
    const Tensor& A = t.val(a);
    const Tensor& B = t.val(b);
    require(A.same_shape(B), "add: shape mismatch " + shape_str(A.shape) + " vs " + shape_str(B.shape));
    Tensor C = Tensor::zeros(A.shape);
    arr(C) = arr(A) + arr(B);
    bool rg = t.wants_grad(a) || t.wants_grad(b);
    return t.emplace(std::move(C), rg, [a, b](Tape& t, const Tensor& g) {
        if (t.wants_grad(a)) t.accum(a, g);
        if (t.wants_grad(b)) t.accum(b, g);
    });
}

Var sub(Tape& t, Var a, Var b) {
    const Tensor& A = t.val(a);
    const Tensor& B = t.val(b);
    require(A.same_shape(B), "sub: shape mismatch " + shape_str(A.shape) + " vs " + shape_str(B.shape));
    Tensor C = Tensor::zeros(A.shape);
    arr(C) = arr(A) - arr(B);
    bool rg = t.wants_grad(a) || t.wants_grad(b);
    return t.emplace(std::move(C), rg, [a, b](Tape& t, const Tensor& g) {
        if (t.wants_grad(a)) t.accum(a, g);
        if (t.wants_grad(b)) arr(t.grad_buf(b)) -= arr(g);
    });
}

Var mul(Tape& t, Var a, Var b) {
    const Tensor& A = t.val(a);
    const Tensor& B = t.val(b);
    require(A.same_shape(B), "mul: shape mismatch " + shape_str(A.shape) + " vs " + shape_str(B.shape));
    Tensor C = Tensor::zeros(A.shape);
    arr(C) = arr(A) * arr(B);
    bool rg = t.wants_grad(a) || t.wants_grad(b);
    return t.emplace(std::move(C), rg, [a, b](Tape& t, const Tensor& g) {
        if (t.wants_grad(a)) arr(t.grad_buf(a)) += arr(g) * arr(t.val(b));
        if (t.wants_grad(b)) arr(t.grad_buf(b)) += arr(g) * arr(t.val(a));
    });
}

Var add_rowvec(Tape& t, Var m, Var v) {
    const Tensor& M = t.val(m);
    const Tensor& V = t.val(v);
    require(V.rank() == 1 && V.cols() == M.cols(),
            "add_rowvec: vector length " + shape_str(V.shape) + " vs matrix " + shape_str(M.shape));
    Tensor C = Tensor::zeros(M.shape);
    mat(C) = mat(M).rowwise() + mat(V).row(0);
    bool rg = t.wants_grad(m) || t.wants_grad(v);
    return t.emplace(std::move(C), rg, [m, v](Tape& t, const Tensor& g) {
        if (t.wants_grad(m)) t.accum(m, g);
        if (t.wants_grad(v)) mat(t.grad_buf(v)).row(0) += mat(g).colwise().sum();
    });
}

Var scale(Tape& t, Var x, double c) {
    Tensor C = Tensor::zeros(t.val(x).shape);
    arr(C) = arr(t.val(x)) * c;
    return t.emplace(std::move(C), t.wants_grad(x), [x, c](Tape& t, const Tensor& g) {
        if (t.wants_grad(x)) arr(t.grad_buf(x)) += arr(g) * c;
    });
}

Var add_scalar(Tape& t, Var x, double c) {
    Tensor C = Tensor::zeros(t.val(x).shape);
    arr(C) = arr(t.val(x)) + c;
    return t.emplace(std::move(C), t.wants_grad(x), [x](Tape& t, const Tensor& g) {
        if (t.wants_grad(x)) t.accum(x, g);
    });
}

Var mul_vs(Tape& t, Var s, Var x) {
    const Tensor& S = t.val(s);
    require(S.numel() == 1, "mul_vs: first operand must be scalar");
    Tensor C = Tensor::zeros(t.val(x).shape);
    arr(C) = arr(t.val(x)) * S.data[0];
    bool rg = t.wants_grad(s) || t.wants_grad(x);
    return t.emplace(std::move(C), rg, [s, x](Tape& t, const Tensor& g) {
        if (t.wants_grad(s)) t.grad_buf(s).data[0] += (arr(g) * arr(t.val(x))).sum();
        if (t.wants_grad(x)) arr(t.grad_buf(x)) += arr(g) * t.val(s).data[0];
    });
}

Var sigmoid(Tape& t, Var x) {
    const Tensor& X = t.val(x);
    Tensor Y = Tensor::zeros(X.shape);
    for (std::size_t i = 0; i < X.data.size(); ++i) Y.data[i] = stable_sigmoid(X.data[i]);
    int self = static_cast<int>(t.size());
    return t.emplace(std::move(Y), t.wants_grad(x), [x, self](Tape& t, const Tensor& g) {
        if (!t.wants_grad(x)) return;
        CArrMap y = arr(t.val(Var{self}));
        arr(t.grad_buf(x)) += arr(g) * y * (1.0 - y);
    });
}

Var tanh_op(Tape& t, Var x) {
    Tensor Y = Tensor::zeros(t.val(x).shape);
    arr(Y) = arr(t.val(x)).tanh();
    int self = static_cast<int>(t.size());
    return t.emplace(std::move(Y), t.wants_grad(x), [x, self](Tape& t, const Tensor& g) {
        if (!t.wants_grad(x)) return;
        CArrMap y = arr(t.val(Var{self}));
        arr(t.grad_buf(x)) += arr(g) * (1.0 - y * y);
    });
}

Var exp_op(Tape& t, Var x) {
    Tensor Y = Tensor::zeros(t.val(x).shape);
    arr(Y) = arr(t.val(x)).exp();
    int self = static_cast<int>(t.size());
    return t.emplace(std::move(Y), t.wants_grad(x), [x, self](Tape& t, const Tensor& g) {
        if (!t.wants_grad(x)) return;
        arr(t.grad_buf(x)) += arr(g) * arr(t.val(Var{self}));
    });
}

Var relu_floor(Tape& t, Var x) { return clamp(t, x, 0.0, std::numeric_limits<double>::infinity()); }

Var clamp(Tape& t, Var x, double lo, double hi) {
    Tensor Y = Tensor::zeros(t.val(x).shape);
    arr(Y) = arr(t.val(x)).min(hi).max(lo);
    return t.emplace(std::move(Y), t.wants_grad(x), [x, lo, hi](Tape& t, const Tensor& g) {
        if (!t.wants_grad(x)) return;
        CArrMap xv = arr(t.val(x));
        arr(t.grad_buf(x)) += arr(g) * ((xv > lo).cast<double>() * (xv < hi).cast<double>());
    });
}

Var minimum(Tape& t, Var a, Var b) {
    const Tensor& A = t.val(a);
    const Tensor& B = t.val(b);
    require(A.same_shape(B), "minimum: shape mismatch");
    Tensor C = Tensor::zeros(A.shape);
    arr(C) = arr(A).min(arr(B));
    bool rg = t.wants_grad(a) || t.wants_grad(b);
    return t.emplace(std::move(C), rg, [a, b](Tape& t, const Tensor& g) {
        CArrMap av = arr(t.val(a));
        CArrMap bv = arr(t.val(b));
        if (t.wants_grad(a)) arr(t.grad_buf(a)) += arr(g) * (av <= bv).cast<double>();
        if (t.wants_grad(b)) arr(t.grad_buf(b)) += arr(g) * (av > bv).cast<double>();
    });
}

Var layer_norm(Tape& t, Var x, Var gain, Var bias, double eps) {
    const Tensor& X = t.val(x);
    const Tensor& G = t.val(gain);
    const Tensor& B = t.val(bias);
    int d = X.cols();
    require(G.numel() == d && B.numel() == d,
            "layer_norm: gain/bias length must equal last dimension " + std::to_string(d));
    Tensor Y = Tensor::zeros(X.shape);
    for (int r = 0; r < X.rows(); ++r) {
        double mu = 0.0, var = 0.0;
        for (int c = 0; c < d; ++c) mu += X.at(r, c);
        mu /= d;
        for (int c = 0; c < d; ++c) {
            double xc = X.at(r, c) - mu;
            var += xc * xc;
        }
        var /= d;
        double inv = 1.0 / std::sqrt(var + eps);
        for (int c = 0; c < d; ++c) Y.at(r, c) = (X.at(r, c) - mu) * inv * G.data[c] + B.data[c];
    }
    bool rg = t.wants_grad(x) || t.wants_grad(gain) || t.wants_grad(bias);
    return t.emplace(std::move(Y), rg, [x, gain, bias, eps](Tape& t, const Tensor& g) {
        const Tensor& X = t.val(x);
        const Tensor& G = t.val(gain);
        int d = X.cols();
        std::vector<double> xhat(d), dxhat(d);
        for (int r = 0; r < X.rows(); ++r) {
            double mu = 0.0, var = 0.0;
            for (int c = 0; c < d; ++c) mu += X.at(r, c);
            mu /= d;
            for (int c = 0; c < d; ++c) {
                double xc = X.at(r, c) - mu;
                var += xc * xc;
            }
            var /= d;
            double inv = 1.0 / std::sqrt(var + eps);
            double m1 = 0.0, m2 = 0.0;  // mean(dxhat), mean(dxhat * xhat)
            for (int c = 0; c < d; ++c) {
                xhat[c] = (X.at(r, c) - mu) * inv;
                dxhat[c] = g.at(r, c) * G.data[c];
                m1 += dxhat[c];
                m2 += dxhat[c] * xhat[c];
            }
            m1 /= d;
            m2 /= d;
            if (t.wants_grad(gain)) {
                Tensor& gg = t.grad_buf(gain);
                for (int c = 0; c < d; ++c) gg.data[c] += g.at(r, c) * xhat[c];
            }
            if (t.wants_grad(bias)) {
                Tensor& gb = t.grad_buf(bias);
                for (int c = 0; c < d; ++c) gb.data[c] += g.at(r, c);
            }
            if (t.wants_grad(x)) {
                Tensor& gx = t.grad_buf(x);
                for (int c = 0; c < d; ++c) gx.at(r, c) += inv * (dxhat[c] - m1 - xhat[c] * m2);
            }
        }
    });
}

Var softmax_xent(Tape& t, Var logits, const std::vector<int>& targets) {
    const Tensor& Z = t.val(logits);
    int n = Z.rows(), V = Z.cols();
    require(static_cast<int>(targets.size()) == n, "softmax_xent: one target per row required");
    for (int r = 0; r < n; ++r)
        require(targets[r] >= 0 && targets[r] < V,
                "softmax_xent: target index " + std::to_string(targets[r]) + " out of range [0," +
                    std::to_string(V) + ")");
    double loss = 0.0;
    for (int r = 0; r < n; ++r) {
        double m = Z.at(r, 0);
        for (int c = 1; c < V; ++c) m = std::max(m, Z.at(r, c));
        double se = 0.0;
        for (int c = 0; c < V; ++c) se += std::exp(Z.at(r, c) - m);
        loss += m + std::log(se) - Z.at(r, targets[r]);
    }
    loss /= n;
    return t.emplace(Tensor::scalar(loss), t.wants_grad(logits),
                     [logits, targets](Tape& t, const Tensor& g) {
                         if (!t.wants_grad(logits)) return;
                         const Tensor& Z = t.val(logits);
                         int n = Z.rows(), V = Z.cols();
                         Tensor& gz = t.grad_buf(logits);
                         double w = g.data[0] / n;
                         for (int r = 0; r < n; ++r) {
                             double m = Z.at(r, 0);
                             for (int c = 1; c < V; ++c) m = std::max(m, Z.at(r, c));
                             double se = 0.0;
                             for (int c = 0; c < V; ++c) se += std::exp(Z.at(r, c) - m);
                             for (int c = 0; c < V; ++c) {
                                 double p = std::exp(Z.at(r, c) - m) / se;
                                 gz.at(r, c) += w * (p - (c == targets[r] ? 1.0 : 0.0));
                             }
                         }
                     });
}

Var causal_softmax(Tape& t, Var scores) {
    const Tensor& S = t.val(scores);
    require(S.rank() == 2 && S.rows() == S.cols(), "causal_softmax: square matrix required");
    int L = S.rows();
    Tensor A = Tensor::zeros(S.shape);
    for (int i = 0; i < L; ++i) {
        double m = S.at(i, 0);
        for (int j = 1; j <= i; ++j) m = std::max(m, S.at(i, j));
        double se = 0.0;
        for (int j = 0; j <= i; ++j) se += std::exp(S.at(i, j) - m);
        for (int j = 0; j <= i; ++j) A.at(i, j) = std::exp(S.at(i, j) - m) / se;
    }
    int self = static_cast<int>(t.size());
    return t.emplace(std::move(A), t.wants_grad(scores), [scores, self](Tape& t, const Tensor& g) {
        if (!t.wants_grad(scores)) return;
        const Tensor& A = t.val(Var{self});
        int L = A.rows();
        Tensor& gs = t.grad_buf(scores);
        for (int i = 0; i < L; ++i) {
            double acc = 0.0;
            for (int j = 0; j <= i; ++j) acc += g.at(i, j) * A.at(i, j);
            for (int j = 0; j <= i; ++j) gs.at(i, j) += A.at(i, j) * (g.at(i, j) - acc);
        }
    });
}

Var reshape(Tape& t, Var x, Shape s) {
    const Tensor& X = t.val(x);
    require(shape_numel(s) == X.numel(), "reshape: numel mismatch " + shape_str(X.shape) + " -> " +
                                             shape_str(s));
    Tensor Y(std::move(s), X.data);
    return t.emplace(std::move(Y), t.wants_grad(x), [x](Tape& t, const Tensor& g) {
        if (!t.wants_grad(x)) return;
        Tensor& gx = t.grad_buf(x);
        for (std::size_t i = 0; i < g.data.size(); ++i) gx.data[i] += g.data[i];
    });
}

Var concat_cols(Tape& t, Var a, Var b) {
    const Tensor& A = t.val(a);
    const Tensor& B = t.val(b);
    require(A.rank() == 2 && B.rank() == 2 && A.rows() == B.rows(),
            "concat_cols: row mismatch " + shape_str(A.shape) + " vs " + shape_str(B.shape));
    int r = A.rows(), ca = A.cols(), cb = B.cols();
    Tensor Y = Tensor::zeros({r, ca + cb});
    for (int i = 0; i < r; ++i) {
        for (int j = 0; j < ca; ++j) Y.at(i, j) = A.at(i, j);
        for (int j = 0; j < cb; ++j) Y.at(i, ca + j) = B.at(i, j);
    }
    bool rg = t.wants_grad(a) || t.wants_grad(b);
    return t.emplace(std::move(Y), rg, [a, b, ca, cb](Tape& t, const Tensor& g) {
        if (t.wants_grad(a)) {
            Tensor& ga = t.grad_buf(a);
            for (int i = 0; i < ga.rows(); ++i)
                for (int j = 0; j < ca; ++j) ga.at(i, j) += g.at(i, j);
        }
        if (t.wants_grad(b)) {
            Tensor& gb = t.grad_buf(b);
            for (int i = 0; i < gb.rows(); ++i)
                for (int j = 0; j < cb; ++j) gb.at(i, j) += g.at(i, ca + j);
        }
    });
}

Var scale_rows(Tape& t, Var x, Var s) {
    const Tensor& X = t.val(x);
    const Tensor& S = t.val(s);
    require(X.rank() == 2 && S.rank() == 1 && S.cols() == X.rows(),
            "scale_rows: need one scale per row, got " + shape_str(X.shape) + " and " +
                shape_str(S.shape));
    Tensor Y = Tensor::zeros(X.shape);
    for (int r = 0; r < X.rows(); ++r)
        for (int c = 0; c < X.cols(); ++c) Y.at(r, c) = X.at(r, c) * S.data[r];
    bool rg = t.wants_grad(x) || t.wants_grad(s);
    return t.emplace(std::move(Y), rg, [x, s](Tape& t, const Tensor& g) {
        const Tensor& X = t.val(x);
        const Tensor& S = t.val(s);
        if (t.wants_grad(x)) {
            Tensor& gx = t.grad_buf(x);
            for (int r = 0; r < X.rows(); ++r)
                for (int c = 0; c < X.cols(); ++c) gx.at(r, c) += g.at(r, c) * S.data[r];
        }
        if (t.wants_grad(s)) {
            Tensor& gs = t.grad_buf(s);
            for (int r = 0; r < X.rows(); ++r) {
                double acc = 0.0;
                for (int c = 0; c < X.cols(); ++c) acc += g.at(r, c) * X.at(r, c);
                gs.data[r] += acc;
            }
        }
    });
}

Var add_rows_range(Tape& t, Var x, Var v, int lo, int hi) {
    const Tensor& X = t.val(x);
    const Tensor& V = t.val(v);
    require(X.rank() == 2 && V.rank() == 1 && V.cols() == X.cols(), "add_rows_range: shape mismatch");
    require(lo >= 0 && lo < hi && hi <= X.rows(), "add_rows_range: bad row range");
    Tensor Y = X;
    for (int r = lo; r < hi; ++r)
        for (int c = 0; c < X.cols(); ++c) Y.at(r, c) += V.data[c];
    bool rg = t.wants_grad(x) || t.wants_grad(v);
    return t.emplace(std::move(Y), rg, [x, v, lo, hi](Tape& t, const Tensor& g) {
        if (t.wants_grad(x)) t.accum(x, g);
        if (t.wants_grad(v)) {
            Tensor& gv = t.grad_buf(v);
            for (int r = lo; r < hi; ++r)
                for (int c = 0; c < g.cols(); ++c) gv.data[c] += g.at(r, c);
        }
    });
}

Var concat_vec(Tape& t, const std::vector<Var>& parts) {
    require(!parts.empty(), "concat_vec: no parts");
    int total = 0;
    bool rg = false;
    for (Var p : parts) {
        require(t.val(p).rank() == 1, "concat_vec: parts must be rank 1");
        total += static_cast<int>(t.val(p).numel());
        rg = rg || t.wants_grad(p);
    }
    Tensor Y = Tensor::zeros({total});
    std::int64_t off = 0;
    for (Var p : parts) {
        const Tensor& P = t.val(p);
        std::copy(P.data.begin(), P.data.end(), Y.data.begin() + off);
        off += P.numel();
    }
    return t.emplace(std::move(Y), rg, [parts](Tape& t, const Tensor& g) {
        std::int64_t off = 0;
        for (Var p : parts) {
            std::int64_t n = t.val(p).numel();
            if (t.wants_grad(p)) {
                Tensor& gp = t.grad_buf(p);
                for (std::int64_t i = 0; i < n; ++i) gp.data[i] += g.data[off + i];
            }
            off += n;
        }
    });
}

namespace {

// Shared backward for contiguous-range views (row-major layout makes row
// slices contiguous).
Var range_view(Tape& t, Var x, std::int64_t lo, std::int64_t hi, Shape out_shape) {
    const Tensor& X = t.val(x);
    Tensor Y = Tensor::zeros(out_shape);
    std::copy(X.data.begin() + lo, X.data.begin() + hi, Y.data.begin());
    return t.emplace(std::move(Y), t.wants_grad(x), [x, lo](Tape& t, const Tensor& g) {
        if (!t.wants_grad(x)) return;
        Tensor& gx = t.grad_buf(x);
        for (std::size_t i = 0; i < g.data.size(); ++i) gx.data[lo + i] += g.data[i];
    });
}

}  // namespace

Var slice_rows(Tape& t, Var x, int lo, int hi) {
    const Tensor& X = t.val(x);
    require(X.rank() == 2 && lo >= 0 && lo < hi && hi <= X.rows(), "slice_rows: bad range");
    int c = X.cols();
    return range_view(t, x, static_cast<std::int64_t>(lo) * c, static_cast<std::int64_t>(hi) * c,
                      {hi - lo, c});
}

Var select_row(Tape& t, Var x, int r) {
    const Tensor& X = t.val(x);
    require(X.rank() == 2 && r >= 0 && r < X.rows(), "select_row: row out of range");
    int c = X.cols();
    return range_view(t, x, static_cast<std::int64_t>(r) * c, static_cast<std::int64_t>(r + 1) * c, {c});
}

Var slice_span(Tape& t, Var v, int lo, int hi) {
    const Tensor& V = t.val(v);
    require(V.rank() == 1 && lo >= 0 && lo < hi && hi <= V.cols(), "slice_span: bad range");
    return range_view(t, v, lo, hi, {hi - lo});
}

Var mean_rows(Tape& t, Var x, int lo, int hi) {
    const Tensor& X = t.val(x);
    require(X.rank() == 2 && lo >= 0 && lo < hi && hi <= X.rows(), "mean_rows: bad range");
    int c = X.cols();
    int n = hi - lo;
    Tensor Y = Tensor::zeros({c});
    for (int r = lo; r < hi; ++r)
        for (int j = 0; j < c; ++j) Y.data[j] += X.at(r, j);
    for (int j = 0; j < c; ++j) Y.data[j] /= n;
    return t.emplace(std::move(Y), t.wants_grad(x), [x, lo, hi, c, n](Tape& t, const Tensor& g) {
        if (!t.wants_grad(x)) return;
        Tensor& gx = t.grad_buf(x);
        for (int r = lo; r < hi; ++r)
            for (int j = 0; j < c; ++j) gx.at(r, j) += g.data[j] / n;
    });
}

Var concat_rows(Tape& t, const std::vector<Var>& parts) {
    require(!parts.empty(), "concat_rows: no parts");
    int c = t.val(parts[0]).cols();
    int rows = 0;
    bool rg = false;
    for (Var p : parts) {
        require(t.val(p).cols() == c, "concat_rows: column mismatch");
        rows += t.val(p).rows();
        rg = rg || t.wants_grad(p);
    }
    Tensor Y = Tensor::zeros({rows, c});
    std::int64_t off = 0;
    for (Var p : parts) {
        const Tensor& P = t.val(p);
        std::copy(P.data.begin(), P.data.end(), Y.data.begin() + off);
        off += P.numel();
    }
    return t.emplace(std::move(Y), rg, [parts](Tape& t, const Tensor& g) {
        std::int64_t off = 0;
        for (Var p : parts) {
            std::int64_t n = t.val(p).numel();
            if (t.wants_grad(p)) {
                Tensor& gp = t.grad_buf(p);
                for (std::int64_t i = 0; i < n; ++i) gp.data[i] += g.data[off + i];
            }
            off += n;
        }
    });
}

Var gather_rows(Tape& t, Var table, const std::vector<int>& ids) {
    const Tensor& T = t.val(table);
    require(T.rank() == 2, "gather_rows: table must be rank 2");
    require(!ids.empty(), "gather_rows: empty id list");
    int c = T.cols();
    for (int id : ids)
        require(id >= 0 && id < T.rows(), "gather_rows: id " + std::to_string(id) + " out of range");
    Tensor Y = Tensor::zeros({static_cast<int>(ids.size()), c});
    for (std::size_t i = 0; i < ids.size(); ++i)
        for (int j = 0; j < c; ++j) Y.at(static_cast<int>(i), j) = T.at(ids[i], j);
    return t.emplace(std::move(Y), t.wants_grad(table), [table, ids, c](Tape& t, const Tensor& g) {
        if (!t.wants_grad(table)) return;
        Tensor& gt = t.grad_buf(table);
        for (std::size_t i = 0; i < ids.size(); ++i)
            for (int j = 0; j < c; ++j) gt.at(ids[i], j) += g.at(static_cast<int>(i), j);
    });
}

Var element(Tape& t, Var x, std::int64_t i) {
    const Tensor& X = t.val(x);
    require(i >= 0 && i < X.numel(), "element: index out of range");
    return t.emplace(Tensor::scalar(X.data[i]), t.wants_grad(x), [x, i](Tape& t, const Tensor& g) {
        if (t.wants_grad(x)) t.grad_buf(x).data[i] += g.data[0];
    });
}

Var sum(Tape& t, Var x) {
    double s = 0.0;
    for (double v : t.val(x).data) s += v;
    return t.emplace(Tensor::scalar(s), t.wants_grad(x), [x](Tape& t, const Tensor& g) {
        if (t.wants_grad(x)) arr(t.grad_buf(x)) += g.data[0];
    });
}

Var dot(Tape& t, Var a, Var b) {
    const Tensor& A = t.val(a);
    const Tensor& B = t.val(b);
    require(A.same_shape(B), "dot: shape mismatch");
    double s = 0.0;
    for (std::int64_t i = 0; i < A.numel(); ++i) s += A.data[i] * B.data[i];
    bool rg = t.wants_grad(a) || t.wants_grad(b);
    return t.emplace(Tensor::scalar(s), rg, [a, b](Tape& t, const Tensor& g) {
        if (t.wants_grad(a)) arr(t.grad_buf(a)) += g.data[0] * arr(t.val(b));
        if (t.wants_grad(b)) arr(t.grad_buf(b)) += g.data[0] * arr(t.val(a));
    });
}

Var norm2(Tape& t, Var v) {
    double s = 0.0;
    for (double x : t.val(v).data) s += x * x;
    double n = std::sqrt(s);
    return t.emplace(Tensor::scalar(n), t.wants_grad(v), [v, n](Tape& t, const Tensor& g) {
        if (!t.wants_grad(v) || n == 0.0) return;
        arr(t.grad_buf(v)) += g.data[0] / n * arr(t.val(v));
    });
}

Var l2_normalize(Tape& t, Var v, double eps) {
    const Tensor& V = t.val(v);
    double s = 0.0;
    for (double x : V.data) s += x * x;
    double n = std::sqrt(s);
    double d = n + eps;
    Tensor Y = Tensor::zeros(V.shape);
    arr(Y) = arr(V) / d;
    return t.emplace(std::move(Y), t.wants_grad(v), [v, n, d](Tape& t, const Tensor& g) {
        if (!t.wants_grad(v)) return;
        CArrMap vv = arr(t.val(v));
        double vg = (vv * arr(g)).sum();
        if (n > 0.0)
            arr(t.grad_buf(v)) += arr(g) / d - vv * (vg / (n * d * d));
        else
            arr(t.grad_buf(v)) += arr(g) / d;
    });
}

Var cosine_sim(Tape& t, Var a, Var b, double eps) {
    const Tensor& A = t.val(a);
    const Tensor& B = t.val(b);
    require(A.numel() == B.numel(), "cosine_sim: length mismatch");
    double ip = 0.0, na2 = 0.0, nb2 = 0.0;
    for (std::int64_t i = 0; i < A.numel(); ++i) {
        ip += A.data[i] * B.data[i];
        na2 += A.data[i] * A.data[i];
        nb2 += B.data[i] * B.data[i];
    }
    double na = std::sqrt(na2), nb = std::sqrt(nb2);
    double den = na * nb + eps;
    double s = ip / den;
    bool rg = t.wants_grad(a) || t.wants_grad(b);
    return t.emplace(Tensor::scalar(s), rg, [a, b, na, nb, den, s](Tape& t, const Tensor& g) {
        CArrMap av = arr(t.val(a));
        CArrMap bv = arr(t.val(b));
        double g0 = g.data[0];
        if (t.wants_grad(a)) {
            ArrMap ga = arr(t.grad_buf(a));
            ga += g0 * bv / den;
            if (na > 0.0) ga -= g0 * s * (nb / na) / den * av;
        }
        if (t.wants_grad(b)) {
            ArrMap gb = arr(t.grad_buf(b));
            gb += g0 * av / den;
            if (nb > 0.0) gb -= g0 * s * (na / nb) / den * bv;
        }
    });
}

double cosine_sim_value(const Tensor& a, const Tensor& b, double eps) {
    if (a.numel() != b.numel()) throw std::invalid_argument("cosine_sim_value: length mismatch");
    double ip = 0.0, na2 = 0.0, nb2 = 0.0;
    for (std::int64_t i = 0; i < a.numel(); ++i) {
        ip += a.data[i] * b.data[i];
        na2 += a.data[i] * a.data[i];
        nb2 += b.data[i] * b.data[i];
    }
    return ip / (std::sqrt(na2) * std::sqrt(nb2) + eps);
}

}  // namespace moonlite
