// Copyright 2026 moonlite authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "moonlite/checkpoint.hpp"

namespace moonlite {

class Adam {
public:
    Adam(ParamStore& store, double lr, double beta1 = 0.9, double beta2 = 0.999,
         double eps = 1e-8);

    // Applies one update from the grads currently held by the store.
    void step();

    // Scales all grads so their global L2 norm is at most max_norm
    // (no-op when max_norm <= 0).
    void clip_grad_norm(double max_norm);

    int t() const { return t_; }

    // Moment/step entries for checkpoints, named opt.m.<p> / opt.v.<p> /
    // opt.step.
    std::vector<NamedTensor> state_entries() const;
    void load_state(const std::vector<NamedTensor>& entries);

private:
    ParamStore& store_;
    double lr_, beta1_, beta2_, eps_;
    int t_ = 0;
    std::vector<Tensor> m_, v_;
};

}  // namespace moonlite
