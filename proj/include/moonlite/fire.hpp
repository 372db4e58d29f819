// Copyright 2026 moonlite authors
// SPDX-License-Identifier: Apache-2.0
//
// Fine-grained residual enhancement: patch-level gated visual residuals,
// multi-level injection of pooled visual features into early decoder
// layers, and a learnable long-range residual inside the decoder.

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "moonlite/module.hpp"

namespace moonlite {

struct FireConfig {
    bool enabled = true;
    // (vision map index, decoder layer index); injection happens at the
    // input of that decoder layer, over image-prefix positions only.
    std::vector<std::pair<int, int>> injection_pairs = {{2, 1}, {3, 2}};
    int early_layer = 1;  // hidden recorded after this block
    int deep_layer = 5;   // residual applied before this block

    static std::vector<std::pair<int, int>> parse_pairs(const std::string& text);  // "2:1,3:2"
    void validate(int vision_layers, int decoder_layers) const;
};

class Fire {
public:
    // When cfg.enabled is false no parameters are created and the module
    // must not be called.
    Fire(const FireConfig& cfg, int vision_layers, int vision_width, int d_model, ParamStore& store,
         Rng& rng);

    bool enabled() const { return cfg_.enabled; }
    const FireConfig& config() const { return cfg_; }

    // maps: all vision levels (intermediates + final), each P x D.
    // Returns layer_norm(X^L + sum_m gate_m(X^m, X^L) * X^m).
    Var enhance_patches(Binder& b, const std::vector<Var>& maps) const;

    // Sum of pooled, projected vision features configured for this decoder
    // layer; invalid Var when no pair targets it.
    Var injection_for_layer(Binder& b, const std::vector<Var>& maps, int decoder_layer) const;

    // h_deep + alpha * W_r(h_early)
    Var long_range(Binder& b, Var h_early, Var h_deep) const;

private:
    FireConfig cfg_;
    int vision_layers_, vision_width_, d_model_;
    struct GateMlp {
        Param *w1, *b1, *w2, *b2;
    };
    std::vector<GateMlp> gates_;  // one per intermediate vision map
    struct Injector {
        int vision_map, dec_layer;
        Param *w, *b;
    };
    std::vector<Injector> injectors_;
    Param *alpha_, *w_r_, *ln_gain_, *ln_bias_;
};

}  // namespace moonlite
