// Copyright 2026 moonlite authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major tensors of 64-bit reals, plus the named parameter type
// that pairs a value with its gradient accumulator.

#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace moonlite {

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);

struct Tensor {
    Shape shape;
    std::vector<double> data;  // row-major, size == product(shape)

    Tensor() = default;
    Tensor(Shape s, std::vector<double> d);

    static Tensor zeros(const Shape& s);
    static Tensor full(const Shape& s, double v);
    static Tensor scalar(double v);
    static Tensor row_vector(std::initializer_list<double> v);
    static Tensor matrix(int r, int c, std::initializer_list<double> v);

    std::int64_t numel() const;
    int rank() const { return static_cast<int>(shape.size()); }

    // 2-D accessors; a rank-1 tensor counts as a single row.
    int rows() const;
    int cols() const;
    double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols() + c]; }
    double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols() + c]; }
    double& operator[](std::int64_t i) { return data[static_cast<std::size_t>(i)]; }
    double operator[](std::int64_t i) const { return data[static_cast<std::size_t>(i)]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
    bool all_finite() const;

    void fill(double v);
    void add_(const Tensor& o);  // in-place +=, shapes must match
};

std::int64_t shape_numel(const Shape& s);

struct Param {
    std::string name;
    Tensor value;
    Tensor grad;  // same shape as value, starts at zero
    int id = -1;  // index in its ParamStore

    void zero_grad() { grad.fill(0.0); }
};

}  // namespace moonlite
