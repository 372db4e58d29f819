// Copyright 2026 moonlite authors
// SPDX-License-Identifier: Apache-2.0
//
// Shared plumbing for trainable modules: a per-tape parameter binder and
// the fan-in uniform initializer.

#pragma once

#include <unordered_map>

#include "moonlite/checkpoint.hpp"
#include "moonlite/rng.hpp"
#include "moonlite/tape.hpp"

namespace moonlite {

// Binds Params onto one Tape, once each. In train mode leaves require
// gradients; in inference mode they are plain views and the backward
// graph is never built.
class Binder {
public:
    Binder(Tape& tape, bool train) : tape_(tape), train_(train) {}

    Tape& tape() { return tape_; }
    bool train() const { return train_; }

    Var operator()(const Param& p) {
        auto it = cache_.find(p.id);
        if (it != cache_.end()) return it->second;
        Var v = train_ ? tape_.param(p) : tape_.feed(p.value, false);
        cache_.emplace(p.id, v);
        return v;
    }

private:
    Tape& tape_;
    bool train_;
    std::unordered_map<int, Var> cache_;
};

// U(-1/sqrt(fan_in), +1/sqrt(fan_in))
Tensor init_uniform_fanin(const Shape& shape, int fan_in, Rng& rng);

}  // namespace moonlite
