// Copyright 2026 moonlite authors
// SPDX-License-Identifier: Apache-2.0
//
// Single-head causal transformer decoder with learned absolute positions.
// Sequences arrive as already-assembled embedding rows (image prefix +
// token embeddings); the decoder adds positions, runs the blocks with the
// optional residual-enhancement hooks, and exposes per-layer hidden
// states plus next-token logits.

#pragma once

#include <vector>

#include "moonlite/fire.hpp"
#include "moonlite/module.hpp"

namespace moonlite {

struct DecoderConfig {
    int n_layers = 6;
    int d_model = 64;
    int ffn_hidden = 128;
    int vocab_size = 0;  // set from the vocabulary
    int max_len = 160;
};

class Decoder {
public:
    Decoder(const DecoderConfig& cfg, ParamStore& store, Rng& rng);

    struct Forward {
        Var final_hidden;               // L x d, after the final layer norm
        std::vector<Var> layer_hidden;  // post-block states, n_layers entries
        Var logits;                     // L x vocab
    };

    // input_rows: L x d_model embedding rows (positions not yet added).
    // prefix_rows: number of leading image-prefix rows (0 if none); fire
    // injections touch only those rows. vision_maps may be null when fire
    // is disabled or the sequence has no image.
    Forward forward(Binder& b, Var input_rows, const Fire* fire,
                    const std::vector<Var>* vision_maps, int prefix_rows) const;

    Var embed_tokens(Binder& b, const std::vector<int>& ids) const;

    const DecoderConfig& config() const { return cfg_; }

private:
    DecoderConfig cfg_;
    Param *tok_emb_, *pos_emb_;
    struct Layer {
        Param *ln1_g, *ln1_b, *wq, *bq, *wk, *bk, *wv, *bv, *wo, *bo;
        Param *ln2_g, *ln2_b, *w1, *b1, *w2, *b2;
    };
    std::vector<Layer> layers_;
    Param *lnf_g_, *lnf_b_, *w_out_, *b_out_;
};

}  // namespace moonlite
