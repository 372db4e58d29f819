// Copyright 2026 moonlite authors
// SPDX-License-Identifier: Apache-2.0

#include "moonlite/vision.hpp"

#include <cmath>
#include <stdexcept>

namespace moonlite {

Tensor init_uniform_fanin(const Shape& shape, int fan_in, Rng& rng) {
    double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Tensor t = Tensor::zeros(shape);
    for (auto& v : t.data) v = rng.uniform(-bound, bound);
    return t;
}

VisionEncoder::VisionEncoder(const VisionConfig& cfg, ParamStore& store, Rng& rng) : cfg_(cfg) {
    if (cfg.patch_count <= 0 || cfg.patch_dim <= 0 || cfg.width <= 0 || cfg.layers < 0)
        throw std::invalid_argument("VisionEncoder: bad config");
    stem_w_ = &store.create("vis.stem.w", init_uniform_fanin({cfg.patch_dim, cfg.width}, cfg.patch_dim, rng));
    stem_b_ = &store.create("vis.stem.b", Tensor::zeros({cfg.width}));
    for (int l = 0; l < cfg.layers; ++l) {
        std::string p = "vis.layer" + std::to_string(l) + ".";
        layers_.push_back({
            &store.create(p + "w_self", init_uniform_fanin({cfg.width, cfg.width}, cfg.width, rng)),
            &store.create(p + "w_mix", init_uniform_fanin({cfg.width, cfg.width}, cfg.width, rng)),
            &store.create(p + "b", Tensor::zeros({cfg.width})),
        });
    }
}

std::vector<Var> VisionEncoder::forward(Binder& b, Var patches) const {
    Tape& t = b.tape();
    const Tensor& X = t.val(patches);
    if (X.rank() != 2 || X.rows() != cfg_.patch_count || X.cols() != cfg_.patch_dim)
        throw std::invalid_argument("VisionEncoder: patch grid " + shape_str(X.shape) +
                                    " does not match configured " +
                                    std::to_string(cfg_.patch_count) + "x" +
                                    std::to_string(cfg_.patch_dim));
    std::vector<Var> maps;
    maps.reserve(cfg_.layers + 1);
    Var x = tanh_op(t, add_rowvec(t, matmul(t, patches, b(*stem_w_)), b(*stem_b_)));
    maps.push_back(x);
    for (const auto& layer : layers_) {
        Var mean = mean_rows(t, x, 0, cfg_.patch_count);
        Var mixed = select_row(t, matmul(t, mean, b(*layer.w_mix)), 0);
        Var shift = add(t, mixed, b(*layer.b));
        x = tanh_op(t, add_rowvec(t, matmul(t, x, b(*layer.w_self)), shift));
        maps.push_back(x);
    }
    return maps;
}

}  // namespace moonlite
