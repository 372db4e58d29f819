// Copyright 2026 moonlite authors
// SPDX-License-Identifier: Apache-2.0
//
// Toy vision encoder: a linear stem projects raw patch features into the
// working width, then each layer mixes a per-patch linear map with the
// patch mean. forward() exposes every level's map so the residual
// enhancement stages can tap intermediate features.

#pragma once

#include <vector>

#include "moonlite/module.hpp"

namespace moonlite {

struct VisionConfig {
    int patch_count = 8;
    int patch_dim = 12;   // raw input channels
    int layers = 4;       // mixing layers after the stem
    int width = 32;       // working width D
};

class VisionEncoder {
public:
    VisionEncoder(const VisionConfig& cfg, ParamStore& store, Rng& rng);

    // layers+1 maps of shape P x width: stem output first, final last.
    std::vector<Var> forward(Binder& b, Var patches) const;

    const VisionConfig& config() const { return cfg_; }

private:
    VisionConfig cfg_;
    Param *stem_w_, *stem_b_;
    struct Layer {
        Param *w_self, *w_mix, *b;
    };
    std::vector<Layer> layers_;
};

}  // namespace moonlite
