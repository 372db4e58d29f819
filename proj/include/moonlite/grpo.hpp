// Copyright 2026 moonlite authors
// SPDX-License-Identifier: Apache-2.0
//
// Joint contrastive + reinforcement stage: composite rewards over sampled
// reasoning trajectories (format, length, log-rank retrieval accuracy,
// attribute quality), group-normalized advantages, the clipped
// probability-ratio surrogate, and the fused step loss.

#pragma once

#include <cstdio>
#include <functional>

#include "moonlite/adam.hpp"
#include "moonlite/model.hpp"
#include "moonlite/sft.hpp"

namespace moonlite {

struct RewardWeights {
    double w1 = 0.5, w2 = 0.3, w3 = 1.0, w4 = 1.0;
    double alpha_q = 0.2;
    double tau_q = 4.0;
    int lmax = 96;
    double lambda1 = 0.1, lambda2 = 1.0;
    double clip = 0.2;
    int G = 8;
};

struct RewardBreakdown {
    double u_format = 0.0, u_length = 0.0, u_accuracy = 0.0, u_quality = 0.0;
    double u_composite = 0.0;
    double advantage = 0.0;
};

struct Trajectory {
    std::vector<int> tokens;
    std::vector<double> logprobs;  // under the sampling-time policy
    double temperature = 1.0;
    ParseResult parsed;
    Tensor r;  // fused embedding from this trajectory's own <|emb|> state
    RewardBreakdown reward;
};

// (label, generated) -> score in [0, 1]; deterministic.
using QualityScorer = std::function<double(const AttributeMap&, const AttributeMap&)>;

// Default scorer: value-level F1 between generated and label pairs.
double f1_quality_score(const AttributeMap& label, const AttributeMap& generated);
// rl.scorer config values: "f1" or "external:<command>"; the external
// command receives two lines on stdin (label, generated, compact text
// form) and must print one number.
QualityScorer make_scorer(const std::string& spec);

double reward_format(const Trajectory& t);
double reward_length(const Trajectory& t, int lmax);
// rank of the positive among the pool by cosine to r, ties favor the
// positive; 1 - log(rank)/log(|pool|). Pool must have >= 2 items.
double reward_accuracy(const Tensor& r, const std::vector<Tensor>& pool, int pos_index);
double reward_quality(const Trajectory& t, const AttributeMap& label, const QualityScorer& scorer,
                      double alpha_q, double tau_q);
double composite(const RewardBreakdown& u, const RewardWeights& w);

// A_g = (u_g - mean) / (pop_std + 1e-8); needs G >= 2.
std::vector<double> advantages(const std::vector<double>& rewards);

// Clipped surrogate over one group. new_logprobs are fresh re-scores on
// tape t; old sums and advantages are constants.
Var grpo_loss(Tape& t, const std::vector<Var>& new_logprobs,
              const std::vector<double>& old_logprob_sums, const std::vector<double>& advs,
              double clip_eps);

struct RlStats {
    double total = 0.0, l_grpo = 0.0, l_infonce = 0.0;
    double mean_composite = 0.0, mean_format = 0.0, mean_length = 0.0, mean_accuracy = 0.0,
           mean_quality = 0.0;
};

class RlTrainer {
public:
    RlTrainer(MoonModel& model, ParamStore& store, const Dataset& data, const AttrCodec& codec,
              const RewardWeights& rw, const SftWeights& sft_weights, const QualityScorer& scorer,
              double lr, double grad_clip, int batch_size, double temperature, int threads,
              Rng rng);

    RlStats step();
    // Tab-separated per step: step, L_total, L_GRPO, L_InfoNCE, mean
    // composite/format/length/accuracy/quality.
    void train(int steps, std::FILE* log);

    Adam& optimizer() { return adam_; }
    Rng& rng() { return rng_; }
    int step_index() const { return step_index_; }
    void set_step_index(int s) { step_index_ = s; }
    // Trajectories of the most recent step, reward breakdowns filled.
    const std::vector<Trajectory>& last_trajectories() const { return last_trajs_; }

private:
    MoonModel& model_;
    ParamStore& store_;
    const Dataset& data_;
    const AttrCodec& codec_;
    RewardWeights rw_;
    SftWeights sft_weights_;
    QualityScorer scorer_;
    double grad_clip_;
    int batch_size_;
    double temperature_;
    int threads_;
    Adam adam_;
    Rng rng_;
    int step_index_ = 0;
    std::vector<Trajectory> last_trajs_;
};

}  // namespace moonlite
