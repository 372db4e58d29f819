// Copyright 2026 moonlite authors
// SPDX-License-Identifier: Apache-2.0

#include "moonlite/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace moonlite {

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << "x";
        os << s[i];
    }
    os << "]";
    return os.str();
}

std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (int d : s) {
        if (d <= 0) throw std::invalid_argument("tensor dims must be positive, got " + shape_str(s));
        n *= d;
    }
    return n;
}

Tensor::Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (shape_numel(shape) != static_cast<std::int64_t>(data.size()))
        throw std::invalid_argument("tensor data length does not match shape " + shape_str(shape));
}

Tensor Tensor::zeros(const Shape& s) {
    Tensor t;
    t.shape = s;
    t.data.assign(static_cast<std::size_t>(shape_numel(s)), 0.0);
    return t;
}

Tensor Tensor::full(const Shape& s, double v) {
    Tensor t = zeros(s);
    t.fill(v);
    return t;
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::row_vector(std::initializer_list<double> v) {
    return Tensor({static_cast<int>(v.size())}, std::vector<double>(v));
}

Tensor Tensor::matrix(int r, int c, std::initializer_list<double> v) {
    return Tensor({r, c}, std::vector<double>(v));
}

std::int64_t Tensor::numel() const { return static_cast<std::int64_t>(data.size()); }

int Tensor::rows() const {
    if (shape.size() == 1) return 1;
    if (shape.size() == 2) return shape[0];
    throw std::logic_error("rows() on tensor of rank " + std::to_string(shape.size()));
}

int Tensor::cols() const {
    if (shape.size() == 1) return shape[0];
    if (shape.size() == 2) return shape[1];
    throw std::logic_error("cols() on tensor of rank " + std::to_string(shape.size()));
}

bool Tensor::all_finite() const {
    for (double v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

void Tensor::fill(double v) {
    for (double& x : data) x = v;
}

void Tensor::add_(const Tensor& o) {
    if (!same_shape(o))
        throw std::invalid_argument("add_: shape mismatch " + shape_str(shape) + " vs " + shape_str(o.shape));
    for (std::size_t i = 0; i < data.size(); ++i) data[i] += o.data[i];
}

}  // namespace moonlite
