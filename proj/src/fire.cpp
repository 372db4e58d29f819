// Copyright 2026 moonlite authors
// SPDX-License-Identifier: Apache-2.0

#include "moonlite/fire.hpp"

#include <sstream>
#include <stdexcept>

namespace moonlite {

std::vector<std::pair<int, int>> FireConfig::parse_pairs(const std::string& text) {
    std::vector<std::pair<int, int>> pairs;
    std::istringstream is(text);
    std::string item;
    while (std::getline(is, item, ',')) {
        if (item.empty()) continue;
        auto colon = item.find(':');
        if (colon == std::string::npos)
            throw std::invalid_argument("fire.injection_pairs: expected v:l, got '" + item + "'");
        pairs.emplace_back(std::stoi(item.substr(0, colon)), std::stoi(item.substr(colon + 1)));
    }
    return pairs;
}

void FireConfig::validate(int vision_layers, int decoder_layers) const {
    if (!enabled) return;
    if (!(early_layer < deep_layer && deep_layer < decoder_layers))
        throw std::invalid_argument("fire: need early_layer < deep_layer < decoder depth, got " +
                                    std::to_string(early_layer) + ", " + std::to_string(deep_layer) +
                                    ", " + std::to_string(decoder_layers));
    for (const auto& [v, l] : injection_pairs) {
        if (v < 0 || v > vision_layers)
            throw std::invalid_argument("fire: vision map index " + std::to_string(v) +
                                        " out of range [0," + std::to_string(vision_layers) + "]");
        if (l < 0 || l >= decoder_layers / 2)
            throw std::invalid_argument("fire: injection decoder layer " + std::to_string(l) +
                                        " must lie in the first half of the decoder");
    }
}

Fire::Fire(const FireConfig& cfg, int vision_layers, int vision_width, int d_model,
           ParamStore& store, Rng& rng)
    : cfg_(cfg), vision_layers_(vision_layers), vision_width_(vision_width), d_model_(d_model) {
    if (!cfg_.enabled) return;
    int D = vision_width;
    for (int m = 0; m < vision_layers; ++m) {
        std::string p = "fire.gate" + std::to_string(m) + ".";
        gates_.push_back({
            &store.create(p + "w1", init_uniform_fanin({2 * D, D}, 2 * D, rng)),
            &store.create(p + "b1", Tensor::zeros({D})),
            &store.create(p + "w2", init_uniform_fanin({D, 1}, D, rng)),
            &store.create(p + "b2", Tensor::zeros({1})),
        });
    }
    for (std::size_t i = 0; i < cfg_.injection_pairs.size(); ++i) {
        auto [v, l] = cfg_.injection_pairs[i];
        std::string p = "fire.inject" + std::to_string(i) + ".";
        injectors_.push_back({v, l, &store.create(p + "w", init_uniform_fanin({D, d_model}, D, rng)),
                              &store.create(p + "b", Tensor::zeros({d_model}))});
    }
    // alpha starts at zero: the long-range residual is identity at init.
    alpha_ = &store.create("fire.alpha", Tensor::zeros({1}));
    w_r_ = &store.create("fire.w_r", init_uniform_fanin({d_model, d_model}, d_model, rng));
    ln_gain_ = &store.create("fire.ln.gain", Tensor::full({D}, 1.0));
    ln_bias_ = &store.create("fire.ln.bias", Tensor::zeros({D}));
}

Var Fire::enhance_patches(Binder& b, const std::vector<Var>& maps) const {
    if (!cfg_.enabled) throw std::logic_error("Fire::enhance_patches on disabled module");
    Tape& t = b.tape();
    if (static_cast<int>(maps.size()) != vision_layers_ + 1)
        throw std::invalid_argument("enhance_patches: expected " + std::to_string(vision_layers_ + 1) +
                                    " maps, got " + std::to_string(maps.size()));
    Var final_map = maps.back();
    const Tensor& F = t.val(final_map);
    int P = F.rows();
    for (const Var m : maps)
        if (!t.val(m).same_shape(F))
            throw std::invalid_argument("enhance_patches: map shape mismatch " +
                                        shape_str(t.val(m).shape) + " vs " + shape_str(F.shape));
    Var acc = final_map;
    for (int m = 0; m < vision_layers_; ++m) {
        const GateMlp& gm = gates_[m];
        Var cat = concat_cols(t, maps[m], final_map);
        Var h1 = tanh_op(t, add_rowvec(t, matmul(t, cat, b(*gm.w1)), b(*gm.b1)));
        Var logit = add_rowvec(t, matmul(t, h1, b(*gm.w2)), b(*gm.b2));  // P x 1
        Var lambda = reshape(t, sigmoid(t, logit), {P});
        acc = add(t, acc, scale_rows(t, maps[m], lambda));
    }
    return layer_norm(t, acc, b(*ln_gain_), b(*ln_bias_));
}

Var Fire::injection_for_layer(Binder& b, const std::vector<Var>& maps, int decoder_layer) const {
    if (!cfg_.enabled) return {};
    Tape& t = b.tape();
    Var acc{};
    for (const auto& inj : injectors_) {
        if (inj.dec_layer != decoder_layer) continue;
        Var pooled = mean_rows(t, maps[inj.vision_map], 0, t.val(maps[inj.vision_map]).rows());
        Var projected = add(t, select_row(t, matmul(t, pooled, b(*inj.w)), 0), b(*inj.b));
        acc = acc.valid() ? add(t, acc, projected) : projected;
    }
    return acc;
}

Var Fire::long_range(Binder& b, Var h_early, Var h_deep) const {
    if (!cfg_.enabled) throw std::logic_error("Fire::long_range on disabled module");
    Tape& t = b.tape();
    if (!t.val(h_early).same_shape(t.val(h_deep)))
        throw std::invalid_argument("long_range: shape mismatch");
    Var projected = matmul(t, h_early, b(*w_r_));
    Var alpha = element(t, b(*alpha_), 0);
    return add(t, h_deep, mul_vs(t, alpha, projected));
}

}  // namespace moonlite
