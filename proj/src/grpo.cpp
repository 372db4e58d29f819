// Copyright 2026 moonlite authors
// SPDX-License-Identifier: Apache-2.0

#include "moonlite/grpo.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>

#include "moonlite/parallel.hpp"

namespace moonlite {

double f1_quality_score(const AttributeMap& label, const AttributeMap& generated) {
    int n_label = label.pair_count();
    int n_gen = generated.pair_count();
    if (n_label == 0 || n_gen == 0) return 0.0;
    int inter = 0;
    for (const auto& [k, vs] : generated.items) {
        const auto* lv = label.find(k);
        if (!lv) continue;
        for (const auto& v : vs)
            if (std::find(lv->begin(), lv->end(), v) != lv->end()) ++inter;
    }
    double p = static_cast<double>(inter) / n_gen;
    double r = static_cast<double>(inter) / n_label;
    if (p + r == 0.0) return 0.0;
    double f1 = 2.0 * p * r / (p + r);
    return std::min(1.0, std::max(0.0, f1));
}

QualityScorer make_scorer(const std::string& spec) {
    if (spec == "f1") return f1_quality_score;
    const std::string prefix = "external:";
    if (spec.rfind(prefix, 0) == 0) {
        std::string cmd = spec.substr(prefix.size());
        if (cmd.empty()) throw std::invalid_argument("rl.scorer: empty external command");
        return [cmd](const AttributeMap& label, const AttributeMap& gen) {
            std::string in_path = "moonlite_scorer_in.tmp";
            std::string out_path = "moonlite_scorer_out.tmp";
            {
                std::ofstream in(in_path, std::ios::binary);
                in << label.to_text() << "\n" << gen.to_text() << "\n";
            }
            std::string full = cmd + " < " + in_path + " > " + out_path;
            if (std::system(full.c_str()) != 0)
                throw std::runtime_error("rl.scorer: external command failed: " + cmd);
            std::ifstream out(out_path);
            double s = 0.0;
            if (!(out >> s)) throw std::runtime_error("rl.scorer: no score from: " + cmd);
            std::remove(in_path.c_str());
            std::remove(out_path.c_str());
            return std::min(1.0, std::max(0.0, s));
        };
    }
    throw std::invalid_argument("rl.scorer: expected 'f1' or 'external:<cmd>', got '" + spec + "'");
}

double reward_format(const Trajectory& t) { return t.parsed.ok ? 1.0 : 0.0; }

double reward_length(const Trajectory& t, int lmax) {
    return static_cast<int>(t.tokens.size()) <= lmax ? 1.0 : 0.0;
}

double reward_accuracy(const Tensor& r, const std::vector<Tensor>& pool, int pos_index) {
    if (pool.size() < 2)
        throw std::invalid_argument("reward_accuracy: pool must hold at least 2 items");
    if (pos_index < 0 || pos_index >= static_cast<int>(pool.size()))
        throw std::invalid_argument("reward_accuracy: positive index out of range");
    double pos_sim = cosine_sim_value(r, pool[pos_index]);
    int rank = 1;
    for (std::size_t j = 0; j < pool.size(); ++j) {
        if (static_cast<int>(j) == pos_index) continue;
        if (cosine_sim_value(r, pool[j]) > pos_sim) ++rank;
    }
    return 1.0 - std::log(static_cast<double>(rank)) / std::log(static_cast<double>(pool.size()));
}

double reward_quality(const Trajectory& t, const AttributeMap& label, const QualityScorer& scorer,
                      double alpha_q, double tau_q) {
    if (!t.parsed.ok) return 0.0;
    double s = scorer(label, t.parsed.map);
    int n_gen = t.parsed.map.pair_count();
    int n_label = label.pair_count();
    double extra = std::min(std::max(0.0, static_cast<double>(n_gen - n_label)), tau_q);
    return s + alpha_q * extra;
}

double composite(const RewardBreakdown& u, const RewardWeights& w) {
    return w.w1 * u.u_format + w.w2 * u.u_length + w.w3 * u.u_accuracy + w.w4 * u.u_quality;
}

std::vector<double> advantages(const std::vector<double>& rewards) {
    int G = static_cast<int>(rewards.size());
    if (G < 2) throw std::invalid_argument("advantages: need a group of at least 2");
    double mu = 0.0;
    for (double u : rewards) mu += u;
    mu /= G;
    double var = 0.0;
    for (double u : rewards) var += (u - mu) * (u - mu);
    var /= G;  // population variance
    double sd = std::sqrt(var) + 1e-8;
    std::vector<double> a(G);
    for (int g = 0; g < G; ++g) a[g] = (rewards[g] - mu) / sd;
    return a;
}

Var grpo_loss(Tape& t, const std::vector<Var>& new_logprobs,
              const std::vector<double>& old_logprob_sums, const std::vector<double>& advs,
              double clip_eps) {
    std::size_t G = new_logprobs.size();
    if (G == 0 || old_logprob_sums.size() != G || advs.size() != G)
        throw std::invalid_argument("grpo_loss: group size mismatch");
    Var acc{};
    for (std::size_t g = 0; g < G; ++g) {
        Var rho = exp_op(t, add_scalar(t, new_logprobs[g], -old_logprob_sums[g]));
        Var unclipped = scale(t, rho, advs[g]);
        Var clipped = scale(t, clamp(t, rho, 1.0 - clip_eps, 1.0 + clip_eps), advs[g]);
        Var term = minimum(t, unclipped, clipped);
        acc = acc.valid() ? add(t, acc, term) : term;
    }
    return scale(t, acc, -1.0 / static_cast<double>(G));
}

// ---------------------------------------------------------------------------
// RL trainer
// ---------------------------------------------------------------------------

RlTrainer::RlTrainer(MoonModel& model, ParamStore& store, const Dataset& data,
                     const AttrCodec& codec, const RewardWeights& rw, const SftWeights& sft_weights,
                     const QualityScorer& scorer, double lr, double grad_clip, int batch_size,
                     double temperature, int threads, Rng rng)
    : model_(model),
      store_(store),
      data_(data),
      codec_(codec),
      rw_(rw),
      sft_weights_(sft_weights),
      scorer_(scorer),
      grad_clip_(grad_clip),
      batch_size_(batch_size),
      temperature_(temperature),
      threads_(threads),
      adam_(store, lr),
      rng_(rng) {
    // Group-relative advantages need G >= 2 unless the GRPO term is off.
    if (rw.G < 2 && rw.lambda2 != 0.0)
        throw std::invalid_argument("RlTrainer: group size must be >= 2");
    if (rw.G < 1) throw std::invalid_argument("RlTrainer: group size must be >= 1");
    if (data.triplets.empty()) throw std::invalid_argument("RlTrainer: dataset has no triplets");
}

namespace {

struct TrajSlot {
    Trajectory traj;
    std::unique_ptr<Tape> tape;
    Var logp{};
    Var r{};
    double logp_value = 0.0;
    Tensor logp_grad, r_grad;
};

struct ItemSlot {  // a positive or negative embedded with gradients
    const ProductRecord* rec = nullptr;
    std::vector<int> gen;
    std::unique_ptr<Tape> tape;
    Var r{};
    Tensor r_value;
    Tensor r_grad;
};

}  // namespace

RlStats RlTrainer::step() {
    int B = batch_size_;
    int G = rw_.G;
    std::vector<int> queries(B);
    for (int i = 0; i < B; ++i) queries[i] = static_cast<int>(rng_.below(data_.triplets.size()));

    // Rollouts: G sampled trajectories per query, deterministic per-slot
    // streams so thread scheduling cannot reorder draws.
    std::vector<TrajSlot> slots(static_cast<std::size_t>(B) * G);
    std::vector<Rng> slot_rngs;
    slot_rngs.reserve(slots.size());
    for (std::size_t s = 0; s < slots.size(); ++s)
        slot_rngs.push_back(rng_.fork(0x524C0000ULL + static_cast<std::uint64_t>(step_index_) * 131071 + s));

    int max_new = std::min(rw_.lmax + 8, model_.gen_budget());
    parallel_for(static_cast<int>(slots.size()), threads_, [&](int s) {
        int q = s / G;
        const Triplet& trip = data_.triplets[queries[q]];
        SeqPlan prefix = model_.plan_for(trip.query, trip.query_modality);
        SampledTrajectory st = model_.sample_trajectory(prefix, slot_rngs[s], temperature_, max_new);
        Trajectory& tr = slots[s].traj;
        tr.tokens = st.tokens;
        tr.logprobs = st.logprobs;
        tr.temperature = st.temperature;
        tr.parsed = codec_.parse(tr.tokens);

        // Fresh re-score with gradients; the embedding comes from the same
        // pass (an <|emb|> is appended when the rollout never emitted one).
        slots[s].tape = std::make_unique<Tape>();
        Binder b(*slots[s].tape, true);
        SeqPlan plan = prefix;
        plan.gen = tr.tokens;
        if (plan.gen.empty() || plan.gen.back() != kEmb) plan.gen.push_back(kEmb);
        SeqOut out = model_.forward_plan(b, plan);
        if (!tr.tokens.empty()) {
            slots[s].logp = model_.sequence_logprob(b, out, tr.tokens, temperature_);
            slots[s].logp_value = slots[s].tape->val(slots[s].logp).data[0];
        }
        slots[s].r = model_.embedding_of(b, out);
        tr.r = slots[s].tape->val(slots[s].r);
    });

    // Positives and negatives, teacher-forced as in the SFT stage.
    std::vector<ItemSlot> items(static_cast<std::size_t>(B) * 2);
    for (int q = 0; q < B; ++q) {
        const Triplet& trip = data_.triplets[queries[q]];
        items[2 * q].rec = &data_.positive_of(trip);
        items[2 * q + 1].rec = &data_.negative_of(trip);
    }
    parallel_for(static_cast<int>(items.size()), threads_, [&](int i) {
        ItemSlot& it = items[i];
        it.gen = target_rationale(codec_, *it.rec, Modality::kMultimodal, model_.config().reasoning);
        it.tape = std::make_unique<Tape>();
        Binder b(*it.tape, true);
        SeqPlan plan = model_.plan_for(*it.rec, Modality::kMultimodal, it.gen);
        SeqOut out = model_.forward_plan(b, plan);
        it.r = model_.embedding_of(b, out);
        it.r_value = it.tape->val(it.r);
    });

    // Rewards against the step's global item pool.
    std::vector<Tensor> pool;
    pool.reserve(items.size());
    for (const auto& it : items) pool.push_back(it.r_value);

    RlStats stats;
    for (int q = 0; q < B; ++q) {
        std::vector<double> rewards(G);
        for (int g = 0; g < G; ++g) {
            Trajectory& tr = slots[q * G + g].traj;
            const Triplet& trip = data_.triplets[queries[q]];
            AttributeMap label = [&] {
                switch (trip.query_modality) {
                    case Modality::kImage: return trip.query.attrs_img;
                    case Modality::kText: return trip.query.attrs_txt;
                    case Modality::kMultimodal: return trip.query.attrs_mm;
                }
                return trip.query.attrs_mm;
            }();
            RewardBreakdown& u = tr.reward;
            u.u_format = reward_format(tr);
            u.u_length = reward_length(tr, rw_.lmax);
            u.u_accuracy = reward_accuracy(tr.r, pool, 2 * q);
            u.u_quality = reward_quality(tr, label, scorer_, rw_.alpha_q, rw_.tau_q);
            u.u_composite = composite(u, rw_);
            rewards[g] = u.u_composite;
            stats.mean_format += u.u_format;
            stats.mean_length += u.u_length;
            stats.mean_accuracy += u.u_accuracy;
            stats.mean_quality += u.u_quality;
            stats.mean_composite += u.u_composite;
        }
        if (G >= 2) {
            std::vector<double> advs = advantages(rewards);
            for (int g = 0; g < G; ++g) slots[q * G + g].traj.reward.advantage = advs[g];
        }
    }
    double n_traj = static_cast<double>(B) * G;
    stats.mean_format /= n_traj;
    stats.mean_length /= n_traj;
    stats.mean_accuracy /= n_traj;
    stats.mean_quality /= n_traj;
    stats.mean_composite /= n_traj;

    // Master tape: GRPO surrogate + contrastive constraint over the
    // spliced embeddings and sequence log-probs.
    Tape master;
    std::vector<Var> item_feeds(items.size());
    for (std::size_t i = 0; i < items.size(); ++i)
        item_feeds[i] = master.feed(items[i].r_value, true);
    std::vector<Var> r_feeds(slots.size());
    std::vector<Tensor> logp_values(slots.size());
    std::vector<Var> logp_feeds(slots.size());
    for (std::size_t s = 0; s < slots.size(); ++s) {
        r_feeds[s] = master.feed(slots[s].traj.r, true);
        logp_values[s] = Tensor::scalar(slots[s].logp_value);
        logp_feeds[s] = master.feed(logp_values[s], slots[s].logp.valid());
    }

    bool use_grpo = rw_.lambda2 != 0.0;
    Var grpo_total{}, con_total{};
    for (int q = 0; q < B; ++q) {
        if (use_grpo) {
            std::vector<Var> new_lp(G);
            std::vector<double> old_lp(G), advs(G);
            for (int g = 0; g < G; ++g) {
                int s = q * G + g;
                new_lp[g] = logp_feeds[s];
                old_lp[g] = 0.0;
                for (double lp : slots[s].traj.logprobs) old_lp[g] += lp;
                advs[g] = slots[s].traj.reward.advantage;
            }
            Var gq = grpo_loss(master, new_lp, old_lp, advs, rw_.clip);
            grpo_total = grpo_total.valid() ? add(master, grpo_total, gq) : gq;
        }

        for (int g = 0; g < G; ++g) {
            std::vector<Var> negs;
            negs.push_back(item_feeds[2 * q + 1]);
            for (int j = 0; j < B; ++j)
                if (j != q) negs.push_back(item_feeds[2 * j]);
            Var c = infonce(master, r_feeds[q * G + g], item_feeds[2 * q], negs, sft_weights_.tau);
            con_total = con_total.valid() ? add(master, con_total, c) : c;
        }
    }
    Var l_con = scale(master, con_total, 1.0 / (B * static_cast<double>(G)));
    Var total = scale(master, l_con, rw_.lambda1);
    if (use_grpo) {
        Var l_grpo = scale(master, grpo_total, 1.0 / B);
        total = add(master, total, scale(master, l_grpo, rw_.lambda2));
        stats.l_grpo = master.val(l_grpo).data[0];
    }
    stats.l_infonce = master.val(l_con).data[0];
    stats.total = master.val(total).data[0];

    store_.zero_grads();
    master.backward(total);
    for (std::size_t s = 0; s < slots.size(); ++s) {
        slots[s].r_grad = master.grad_of(r_feeds[s]);
        slots[s].logp_grad = master.grad_of(logp_feeds[s]);
    }
    for (std::size_t i = 0; i < items.size(); ++i) items[i].r_grad = master.grad_of(item_feeds[i]);

    parallel_for(static_cast<int>(slots.size()), threads_, [&](int s) {
        std::vector<std::pair<Var, Tensor>> seeds;
        seeds.emplace_back(slots[s].r, slots[s].r_grad);
        if (slots[s].logp.valid()) seeds.emplace_back(slots[s].logp, slots[s].logp_grad);
        slots[s].tape->backward(seeds);
    });
    parallel_for(static_cast<int>(items.size()), threads_, [&](int i) {
        items[i].tape->backward({{items[i].r, items[i].r_grad}});
    });
    for (const auto& s : slots)
        s.tape->export_grads([this](int pid, const Tensor& g) { store_.at(pid).grad.add_(g); });
    for (const auto& it : items)
        it.tape->export_grads([this](int pid, const Tensor& g) { store_.at(pid).grad.add_(g); });

    adam_.clip_grad_norm(grad_clip_);
    adam_.step();
    ++step_index_;
    last_trajs_.clear();
    for (auto& s : slots) last_trajs_.push_back(std::move(s.traj));
    return stats;
}

void RlTrainer::train(int steps, std::FILE* log) {
    for (int s = 0; s < steps; ++s) {
        RlStats st = step();
        if (log)
            std::fprintf(log, "%d\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\n", step_index_,
                         st.total, st.l_grpo, st.l_infonce, st.mean_composite, st.mean_format,
                         st.mean_length, st.mean_accuracy, st.mean_quality);
    }
}

}  // namespace moonlite
