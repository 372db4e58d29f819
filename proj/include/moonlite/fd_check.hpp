// Copyright 2026 moonlite authors
// SPDX-License-Identifier: Apache-2.0
//
// Central-difference gradient oracle. Test-only: nothing in the library
// proper calls this, so analytic backward passes are checked against an
// independent path.

#pragma once

#include <cmath>
#include <functional>

#include "moonlite/tensor.hpp"

namespace moonlite {

// (f(x + h e_i) - f(x - h e_i)) / (2h) per coordinate.
inline Tensor fd_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                      double h = 1e-5) {
    Tensor g = Tensor::zeros(x.shape);
    Tensor probe = x;
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        probe.data[i] = x.data[i] + h;
        double fp = f(probe);
        probe.data[i] = x.data[i] - h;
        double fm = f(probe);
        probe.data[i] = x.data[i];
        g.data[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

// Worst per-component relative error; components where both magnitudes are
// below `tiny` count as exact (finite differences carry no signal there).
inline double max_rel_err(const Tensor& a, const Tensor& b, double tiny = 1e-7) {
    double worst = 0.0;
    for (std::int64_t i = 0; i < a.numel(); ++i) {
        double m = std::max(std::abs(a.data[i]), std::abs(b.data[i]));
        if (m < tiny) continue;
        worst = std::max(worst, std::abs(a.data[i] - b.data[i]) / m);
    }
    return worst;
}

}  // namespace moonlite
