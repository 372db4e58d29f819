// Copyright 2026 moonlite authors
// SPDX-License-Identifier: Apache-2.0

#include "moonlite/tape.hpp"

#include <stdexcept>

namespace moonlite {

Var Tape::param(const Param& p) {
    Node n;
    n.view = &p.value;
    n.param_id = p.id;
    n.requires_grad = true;
    nodes_.push_back(std::move(n));
    return {static_cast<int>(nodes_.size()) - 1};
}

Var Tape::feed(const Tensor& t, bool requires_grad) {
    Node n;
    n.view = &t;
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return {static_cast<int>(nodes_.size()) - 1};
}

Var Tape::feed(Tensor&& t, bool requires_grad) {
    Node n;
    n.owned = std::move(t);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return {static_cast<int>(nodes_.size()) - 1};
}

Var Tape::constant(Tensor t) {
    Node n;
    n.owned = std::move(t);
    nodes_.push_back(std::move(n));
    return {static_cast<int>(nodes_.size()) - 1};
}

Var Tape::emplace(Tensor value, bool requires_grad, std::function<void(Tape&, const Tensor&)> back) {
    Node n;
    n.owned = std::move(value);
    n.requires_grad = requires_grad;
    if (requires_grad) n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return {static_cast<int>(nodes_.size()) - 1};
}

Tensor& Tape::grad_buf(Var v) {
    Node& n = nodes_[v.id];
    if (n.grad.data.empty()) n.grad = Tensor::zeros(n.value().shape);
    return n.grad;
}

void Tape::accum(Var v, const Tensor& g) { grad_buf(v).add_(g); }

Tensor Tape::grad_of(Var v) const {
    const Node& n = nodes_[v.id];
    if (n.grad.data.empty()) return Tensor::zeros(n.value().shape);
    return n.grad;
}

void Tape::backward(Var scalar_root) {
    if (val(scalar_root).numel() != 1)
        throw std::invalid_argument("backward: root must be scalar, got " +
                                    shape_str(val(scalar_root).shape));
    backward({{scalar_root, Tensor::full(val(scalar_root).shape, 1.0)}});
}

void Tape::backward(const std::vector<std::pair<Var, Tensor>>& seeds) {
    for (const auto& [v, seed] : seeds) {
        if (!val(v).same_shape(seed))
            throw std::invalid_argument("backward: seed shape " + shape_str(seed.shape) +
                                        " does not match node shape " + shape_str(val(v).shape));
        accum(v, seed);
    }
    for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
        Node& n = nodes_[i];
        if (n.back && !n.grad.data.empty()) n.back(*this, n.grad);
    }
}

void Tape::export_grads(const std::function<void(int, const Tensor&)>& sink) const {
    for (const Node& n : nodes_)
        if (n.param_id >= 0 && !n.grad.data.empty()) sink(n.param_id, n.grad);
}

}  // namespace moonlite
