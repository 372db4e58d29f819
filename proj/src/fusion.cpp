// Copyright 2026 moonlite authors
// SPDX-License-Identifier: Apache-2.0

#include "moonlite/fusion.hpp"

#include <stdexcept>

namespace moonlite {

Fusion::Fusion(const FusionConfig& cfg, int d_model, ParamStore& store, Rng& rng)
    : cfg_(cfg), d_model_(d_model) {
    if (cfg.dim <= 0 || cfg.heads <= 0 || cfg.dim % cfg.heads != 0)
        throw std::invalid_argument("Fusion: dim must be positive and divisible by heads");
    proj_base_ = &store.create("fus.proj_base", init_uniform_fanin({d_model, cfg.dim}, d_model, rng));
    if (!cfg.enabled) return;
    proj_img_ = &store.create("fus.proj_img", init_uniform_fanin({d_model, cfg.dim}, d_model, rng));
    proj_txt_ = &store.create("fus.proj_txt", init_uniform_fanin({d_model, cfg.dim}, d_model, rng));
    int gate_in = 3 * cfg.dim + 2;
    gate_ = &store.create("fus.gate", init_uniform_fanin({gate_in, 3 * cfg.heads}, gate_in, rng));
}

Var Fusion::fuse(Binder& b, const BundleVars& bundle, FuseDiag* diag) const {
    Tape& t = b.tape();
    Var base = select_row(t, matmul(t, bundle.h_last, b(*proj_base_)), 0);
    if (!cfg_.enabled) return l2_normalize(t, base);

    int dim = cfg_.dim, H = cfg_.heads, hs = dim / H;
    Var zero_dim = t.constant(Tensor::zeros({dim}));
    Var zero_scalar = t.constant(Tensor::scalar(0.0));

    // Presence scores gate the raw embeddings before projection; an absent
    // modality contributes an exact zero pathway.
    Var s_i = zero_scalar, s_t = zero_scalar;
    Var hp_img = zero_dim, hp_txt = zero_dim;
    if (bundle.has_img) {
        s_i = sigmoid(t, norm2(t, bundle.h_img));
        hp_img = select_row(t, matmul(t, mul_vs(t, s_i, bundle.h_img), b(*proj_img_)), 0);
    }
    if (bundle.has_txt) {
        s_t = sigmoid(t, norm2(t, bundle.h_txt));
        hp_txt = select_row(t, matmul(t, mul_vs(t, s_t, bundle.h_txt), b(*proj_txt_)), 0);
    }

    Var g_i = bundle.has_img ? relu_floor(t, cosine_sim(t, base, hp_img)) : zero_scalar;
    Var g_t = bundle.has_txt ? relu_floor(t, cosine_sim(t, base, hp_txt)) : zero_scalar;

    Var gate_in = concat_vec(t, {hp_img, hp_txt, base, s_i, s_t});
    Var alphas = sigmoid(t, select_row(t, matmul(t, gate_in, b(*gate_)), 0));  // 3H logits

    Var h_mm = mul(t, hp_img, hp_txt);

    std::vector<Var> slices;
    slices.reserve(H);
    for (int h = 0; h < H; ++h) {
        int lo = h * hs, hi = (h + 1) * hs;
        Var a_i = element(t, alphas, h);
        Var a_t = element(t, alphas, H + h);
        Var a_mm = element(t, alphas, 2 * H + h);
        Var r = slice_span(t, base, lo, hi);
        r = add(t, r, mul_vs(t, mul(t, g_i, a_i), slice_span(t, hp_img, lo, hi)));
        r = add(t, r, mul_vs(t, mul(t, g_t, a_t), slice_span(t, hp_txt, lo, hi)));
        r = add(t, r, mul_vs(t, a_mm, slice_span(t, h_mm, lo, hi)));
        slices.push_back(r);
    }
    Var fused = concat_vec(t, slices);

    if (diag) {
        diag->s_i = t.val(s_i).data[0];
        diag->s_t = t.val(s_t).data[0];
        diag->g_i = t.val(g_i).data[0];
        diag->g_t = t.val(g_t).data[0];
        diag->alpha_i.clear();
        diag->alpha_t.clear();
        diag->alpha_mm.clear();
        const Tensor& av = t.val(alphas);
        for (int h = 0; h < H; ++h) {
            diag->alpha_i.push_back(av.data[h]);
            diag->alpha_t.push_back(av.data[H + h]);
            diag->alpha_mm.push_back(av.data[2 * H + h]);
        }
    }
    return l2_normalize(t, fused);
}

}  // namespace moonlite
