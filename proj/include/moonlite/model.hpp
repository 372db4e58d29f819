// Copyright 2026 moonlite authors
// SPDX-License-Identifier: Apache-2.0
//
// Assembled pipeline: vision encoder + residual enhancement + decoder +
// fusion. Sequences follow the layout
//   [image prefix (P rows) | <bos> | title tokens | generated tokens]
// and the product embedding is read from the final <|emb|> position.

#pragma once

#include <optional>

#include "moonlite/config.hpp"
#include "moonlite/dataset.hpp"
#include "moonlite/decoder.hpp"
#include "moonlite/fusion.hpp"
#include "moonlite/vision.hpp"

namespace moonlite {

struct ModelConfig {
    DecoderConfig dec;
    VisionConfig vis;
    FireConfig fire;
    FusionConfig fus;
    bool reasoning = true;

    static ModelConfig from_config(const Config& c, int vocab_size);
};

struct SeqPlan {
    const Tensor* patches = nullptr;  // null = no image modality
    std::vector<int> title;           // empty = no text modality
    std::vector<int> gen;             // rationale tokens
};

struct SeqOut {
    Var logits;        // L x V
    Var final_hidden;  // L x d
    std::vector<Var> layer_hidden;
    int img_lo = 0, img_hi = 0;  // [lo, hi) prefix span, empty if no image
    int txt_lo = 0, txt_hi = 0;
    int gen_start = 0;  // position of the first generated token
    int len = 0;
};

// Mean-pools the image/text spans and picks the representation position
// from the final hidden state. Present flags with empty spans are
// rejected.
struct BundleSpec {
    int img_lo = 0, img_hi = 0;
    bool img_present = false;
    int txt_lo = 0, txt_hi = 0;
    bool txt_present = false;
    int emb_pos = 0;
};
BundleVars pool_modalities(Tape& t, Var hidden, const BundleSpec& spec);

// One sampled reasoning rollout.
struct SampledTrajectory {
    std::vector<int> tokens;        // generated tokens (stop token included)
    std::vector<double> logprobs;   // per-token log-probs under the sampling policy
    double temperature = 1.0;
    bool ended_with_emb = false;
};

class MoonModel {
public:
    MoonModel(const ModelConfig& cfg, ParamStore& store, Rng& rng);

    const ModelConfig& config() const { return cfg_; }
    const Decoder& decoder() const { return decoder_; }
    const VisionEncoder& vision() const { return vision_; }
    const Fire& fire() const { return fire_; }
    const Fusion& fusion() const { return fusion_; }

    SeqOut forward_plan(Binder& b, const SeqPlan& plan) const;

    // Teacher-forced sum of -log P(gen_j | ...) over the generated span.
    Var ntp_sum(Binder& b, const SeqOut& out, const std::vector<int>& gen) const;
    // Sum of log-probs of the generated span at a sampling temperature.
    Var sequence_logprob(Binder& b, const SeqOut& out, const std::vector<int>& gen,
                         double temperature) const;

    // Fused embedding at the last position (the <|emb|> token).
    Var embedding_of(Binder& b, const SeqOut& out, FuseDiag* diag = nullptr) const;

    // Next-token logits and per-layer hidden states at the last position.
    struct StepOut {
        Tensor logits;
        std::vector<Tensor> layer_states;
    };
    StepOut decode_step(const SeqPlan& plan) const;

    // Greedy (temperature-0) rationale completion; stops at <|emb|>, <eos>
    // or after max_new tokens. Ties pick the lowest token id.
    std::vector<int> greedy_gen(const SeqPlan& prefix, int max_new) const;

    SampledTrajectory sample_trajectory(const SeqPlan& prefix, Rng& rng, double temperature,
                                        int max_new) const;

    // Deterministic embedding of a record: greedy rationale (or immediate
    // <|emb|> when reasoning is off), then the fused embedding. The
    // rationale tokens (without the forced <|emb|>, if any was appended)
    // are returned through gen_out when non-null.
    Tensor embed_record(const ProductRecord& rec, Modality m,
                        std::vector<int>* gen_out = nullptr) const;

    SeqPlan plan_for(const ProductRecord& rec, Modality m, std::vector<int> gen = {}) const;

    // Maximum new tokens budget used for greedy embedding decodes.
    int gen_budget() const;

private:
    ModelConfig cfg_;
    VisionEncoder vision_;
    Fire fire_;
    Decoder decoder_;
    Fusion fusion_;
    Param *img_proj_w_, *img_proj_b_;

    Var assemble_rows(Binder& b, const SeqPlan& plan, std::vector<Var>* maps_out, SeqOut& out) const;
};

}  // namespace moonlite
