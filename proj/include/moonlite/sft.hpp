// Copyright 2026 moonlite authors
// SPDX-License-Identifier: Apache-2.0
//
// Supervised fine-tuning stage: five teacher-forced inputs per triplet
// (image/text/multimodal query views, multimodal positive and negative),
// a generation loss summed over their rationale tokens, and
// modality-specific InfoNCE terms over the fused embeddings with in-batch
// and hard negatives.

#pragma once

#include <cstdio>

#include "moonlite/adam.hpp"
#include "moonlite/attributes.hpp"
#include "moonlite/model.hpp"

namespace moonlite {

struct SftWeights {
    double w_img = 1.0;
    double w_txt = 0.3;
    double w_mm = 0.1;
    double w_ntp = 0.01;
    double tau = 0.07;
};

// -log( exp(q.p/tau) / (exp(q.p/tau) + sum_n exp(q.n/tau)) ).
// Empty negative set gives exactly 0. Inputs are expected L2-normalized;
// similarity is the plain dot product.
Var infonce(Tape& t, Var r_q, Var r_p, const std::vector<Var>& negs, double tau);

struct SftStats {
    double total = 0.0;
    double l_img = 0.0, l_txt = 0.0, l_mm = 0.0, l_ntp = 0.0;
};

// One batch pass over the given triplet indices. With `backward` the
// gradients of `total` accumulate into the store's params. Thread count
// only affects scheduling, never values.
SftStats sft_batch(const MoonModel& model, const AttrCodec& codec, const Dataset& data,
                   const std::vector<int>& indices, const SftWeights& weights, bool backward,
                   ParamStore& store, int threads);

// Target rationale for a record seen through a modality: the matching
// attribute view, or the bare <|emb|> when reasoning is disabled.
std::vector<int> target_rationale(const AttrCodec& codec, const ProductRecord& rec, Modality m,
                                  bool reasoning);

class SftTrainer {
public:
    SftTrainer(MoonModel& model, ParamStore& store, const Dataset& data, const AttrCodec& codec,
               const SftWeights& weights, double lr, double grad_clip, int batch_size, int threads,
               Rng data_rng);

    SftStats step();
    // One tab-separated line per step: step, total, L_img, L_txt, L_mm, L_ntp.
    void train(int steps, std::FILE* log);

    Adam& optimizer() { return adam_; }
    Rng& data_rng() { return data_rng_; }
    int step_index() const { return step_index_; }
    void set_step_index(int s) { step_index_ = s; }

private:
    MoonModel& model_;
    ParamStore& store_;
    const Dataset& data_;
    const AttrCodec& codec_;
    SftWeights weights_;
    double grad_clip_;
    int batch_size_;
    int threads_;
    Adam adam_;
    Rng data_rng_;
    int step_index_ = 0;
};

}  // namespace moonlite
