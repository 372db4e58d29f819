// Copyright 2026 moonlite authors
// SPDX-License-Identifier: Apache-2.0

#include "moonlite/decoder.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace moonlite {

Decoder::Decoder(const DecoderConfig& cfg, ParamStore& store, Rng& rng) : cfg_(cfg) {
    if (cfg.vocab_size <= 0) throw std::invalid_argument("Decoder: vocab_size not set");
    int d = cfg.d_model;
    tok_emb_ = &store.create("dec.tok_emb", init_uniform_fanin({cfg.vocab_size, d}, d, rng));
    pos_emb_ = &store.create("dec.pos_emb", init_uniform_fanin({cfg.max_len, d}, d, rng));
    for (int l = 0; l < cfg.n_layers; ++l) {
        std::string p = "dec.layer" + std::to_string(l) + ".";
        layers_.push_back({
            &store.create(p + "ln1.gain", Tensor::full({d}, 1.0)),
            &store.create(p + "ln1.bias", Tensor::zeros({d})),
            &store.create(p + "attn.wq", init_uniform_fanin({d, d}, d, rng)),
            &store.create(p + "attn.bq", Tensor::zeros({d})),
            &store.create(p + "attn.wk", init_uniform_fanin({d, d}, d, rng)),
            &store.create(p + "attn.bk", Tensor::zeros({d})),
            &store.create(p + "attn.wv", init_uniform_fanin({d, d}, d, rng)),
            &store.create(p + "attn.bv", Tensor::zeros({d})),
            &store.create(p + "attn.wo", init_uniform_fanin({d, d}, d, rng)),
            &store.create(p + "attn.bo", Tensor::zeros({d})),
            &store.create(p + "ln2.gain", Tensor::full({d}, 1.0)),
            &store.create(p + "ln2.bias", Tensor::zeros({d})),
            &store.create(p + "ffn.w1", init_uniform_fanin({d, cfg.ffn_hidden}, d, rng)),
            &store.create(p + "ffn.b1", Tensor::zeros({cfg.ffn_hidden})),
            &store.create(p + "ffn.w2", init_uniform_fanin({cfg.ffn_hidden, d}, cfg.ffn_hidden, rng)),
            &store.create(p + "ffn.b2", Tensor::zeros({d})),
        });
    }
    lnf_g_ = &store.create("dec.lnf.gain", Tensor::full({d}, 1.0));
    lnf_b_ = &store.create("dec.lnf.bias", Tensor::zeros({d}));
    w_out_ = &store.create("dec.head.w", init_uniform_fanin({d, cfg.vocab_size}, d, rng));
    b_out_ = &store.create("dec.head.b", Tensor::zeros({cfg.vocab_size}));
}

Var Decoder::embed_tokens(Binder& b, const std::vector<int>& ids) const {
    return gather_rows(b.tape(), b(*tok_emb_), ids);
}

Decoder::Forward Decoder::forward(Binder& b, Var input_rows, const Fire* fire,
                                  const std::vector<Var>* vision_maps, int prefix_rows) const {
    Tape& t = b.tape();
    int L = t.val(input_rows).rows();
    if (L > cfg_.max_len)
        throw std::invalid_argument("Decoder: context length " + std::to_string(L) +
                                    " exceeds max_len " + std::to_string(cfg_.max_len));
    std::vector<int> positions(L);
    std::iota(positions.begin(), positions.end(), 0);
    Var x = add(t, input_rows, gather_rows(t, b(*pos_emb_), positions));

    bool use_fire = fire && fire->enabled();
    double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(cfg_.d_model));
    Forward out;
    Var h_early{};
    for (int l = 0; l < cfg_.n_layers; ++l) {
        if (use_fire && vision_maps && prefix_rows > 0) {
            Var inj = fire->injection_for_layer(b, *vision_maps, l);
            if (inj.valid()) x = add_rows_range(t, x, inj, 0, prefix_rows);
        }
        if (use_fire && l == fire->config().deep_layer && h_early.valid())
            x = fire->long_range(b, h_early, x);

        const Layer& ly = layers_[l];
        Var n1 = layer_norm(t, x, b(*ly.ln1_g), b(*ly.ln1_b));
        Var q = add_rowvec(t, matmul(t, n1, b(*ly.wq)), b(*ly.bq));
        Var k = add_rowvec(t, matmul(t, n1, b(*ly.wk)), b(*ly.bk));
        Var v = add_rowvec(t, matmul(t, n1, b(*ly.wv)), b(*ly.bv));
        Var att = causal_softmax(t, scale(t, matmul_nt(t, q, k), inv_sqrt_d));
        Var ctx = add_rowvec(t, matmul(t, matmul(t, att, v), b(*ly.wo)), b(*ly.bo));
        x = add(t, x, ctx);
        Var n2 = layer_norm(t, x, b(*ly.ln2_g), b(*ly.ln2_b));
        Var hidden = tanh_op(t, add_rowvec(t, matmul(t, n2, b(*ly.w1)), b(*ly.b1)));
        Var ffn = add_rowvec(t, matmul(t, hidden, b(*ly.w2)), b(*ly.b2));
        x = add(t, x, ffn);

        out.layer_hidden.push_back(x);
        if (use_fire && l == fire->config().early_layer) h_early = x;
    }
    out.final_hidden = layer_norm(t, x, b(*lnf_g_), b(*lnf_b_));
    out.logits = add_rowvec(t, matmul(t, out.final_hidden, b(*w_out_)), b(*b_out_));
    return out;
}

}  // namespace moonlite
