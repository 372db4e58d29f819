// Copyright 2026 moonlite authors
// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode autodiff over Tensors. A Tape records a DAG of operations
// in creation order (which is therefore a topological order); backward()
// sweeps it in reverse, accumulating gradients into every node that
// requires them. Leaf nodes may be bound to Params so trained modules can
// export per-parameter gradients after the sweep.

#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "moonlite/tensor.hpp"

namespace moonlite {

struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

class Tape {
public:
    struct Node {
        Tensor owned;
        const Tensor* view = nullptr;
        Tensor grad;
        int param_id = -1;
        bool requires_grad = false;
        std::function<void(Tape&, const Tensor&)> back;

        const Tensor& value() const { return view ? *view : owned; }
    };

    // Leaf bound to a Param; gradients flow and are exported under p.id.
    Var param(const Param& p);
    // Leaf view of external storage. Caller keeps it alive for the tape's
    // lifetime.
    Var feed(const Tensor& t, bool requires_grad = false);
    // Owning overload so temporaries are safe to feed.
    Var feed(Tensor&& t, bool requires_grad = false);
    // Leaf owning its value; never receives gradients.
    Var constant(Tensor t);

    Var emplace(Tensor value, bool requires_grad, std::function<void(Tape&, const Tensor&)> back);

    const Tensor& val(Var v) const { return nodes_[v.id].value(); }
    bool wants_grad(Var v) const { return nodes_[v.id].requires_grad; }

    // Gradient accumulator for a node, allocated to zeros on first use.
    Tensor& grad_buf(Var v);
    void accum(Var v, const Tensor& g);

    // Gradient of a node after backward(); zeros if it never received one.
    Tensor grad_of(Var v) const;

    void backward(Var scalar_root);
    void backward(const std::vector<std::pair<Var, Tensor>>& seeds);

    // Visits (param_id, grad) for every param leaf that received gradient,
    // in node-creation order.
    void export_grads(const std::function<void(int, const Tensor&)>& sink) const;

    std::size_t size() const { return nodes_.size(); }
    void reserve(std::size_t n) { nodes_.reserve(n); }

private:
    std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Differentiable operations. All are pure functions of their inputs; each
// backward accumulates into every gradient-requiring input.
// ---------------------------------------------------------------------------

// C[m×n] = A[m×k] · B[k×n]; rank-1 operands are treated as single rows.
Var matmul(Tape& t, Var a, Var b);
// C[m×n] = A[m×k] · B[n×k]ᵀ
Var matmul_nt(Tape& t, Var a, Var b);

Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var mul(Tape& t, Var a, Var b);             // elementwise
Var add_rowvec(Tape& t, Var m, Var v);      // broadcast v over rows of m
Var scale(Tape& t, Var x, double c);
Var add_scalar(Tape& t, Var x, double c);
Var mul_vs(Tape& t, Var s, Var x);          // scalar node times tensor node

Var sigmoid(Tape& t, Var x);
Var tanh_op(Tape& t, Var x);
Var exp_op(Tape& t, Var x);
Var relu_floor(Tape& t, Var x);             // max(0, x), zero gradient at the kink
Var clamp(Tape& t, Var x, double lo, double hi);
Var minimum(Tape& t, Var a, Var b);         // ties route gradient to a

// Per-row zero-mean unit-variance (eps-stabilized) then affine with gain/bias
// broadcast over rows. gain and bias have length = last dimension.
inline constexpr double kLayerNormEps = 1e-5;
Var layer_norm(Tape& t, Var x, Var gain, Var bias, double eps = kLayerNormEps);

// Mean negative log-probability of targets under row-wise softmax,
// max-subtraction stabilized. logits: [n×V], one target per row.
Var softmax_xent(Tape& t, Var logits, const std::vector<int>& targets);

// Row-wise softmax over the causal prefix (column j participates in row i
// iff j <= i); masked entries are exactly zero.
Var causal_softmax(Tape& t, Var scores);

// Same storage, new shape (numel preserved).
Var reshape(Tape& t, Var x, Shape s);
// [a ; b] along columns: rows must match.
Var concat_cols(Tape& t, Var a, Var b);
// y.row(i) = x.row(i) * s[i]; s is rank-1 with one entry per row.
Var scale_rows(Tape& t, Var x, Var s);
// y = x with v added to rows [lo, hi).
Var add_rows_range(Tape& t, Var x, Var v, int lo, int hi);
Var concat_vec(Tape& t, const std::vector<Var>& parts);  // rank-1 concat

Var slice_rows(Tape& t, Var x, int lo, int hi);
Var select_row(Tape& t, Var x, int r);      // rank-1 result
Var slice_span(Tape& t, Var v, int lo, int hi);  // rank-1 slice
Var mean_rows(Tape& t, Var x, int lo, int hi);   // rank-1 result
Var concat_rows(Tape& t, const std::vector<Var>& parts);
Var gather_rows(Tape& t, Var table, const std::vector<int>& ids);
Var element(Tape& t, Var x, std::int64_t i);     // scalar pick

Var sum(Tape& t, Var x);
Var dot(Tape& t, Var a, Var b);
inline constexpr double kNormEps = 1e-12;
Var norm2(Tape& t, Var v);                       // L2 norm, scalar
Var l2_normalize(Tape& t, Var v, double eps = kNormEps);
Var cosine_sim(Tape& t, Var a, Var b, double eps = kNormEps);

// Convenience: plain-value cosine similarity with the same eps convention
// (returns 0.0 when both vectors are zero).
double cosine_sim_value(const Tensor& a, const Tensor& b, double eps = kNormEps);

}  // namespace moonlite
