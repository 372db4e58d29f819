// Copyright 2026 moonlite authors
// SPDX-License-Identifier: Apache-2.0

#include "moonlite/model.hpp"

#include <cmath>
#include <stdexcept>

namespace moonlite {

ModelConfig ModelConfig::from_config(const Config& c, int vocab_size) {
    ModelConfig m;
    m.dec.n_layers = c.get_int("model.n_layers");
    m.dec.d_model = c.get_int("model.d_model");
    m.dec.ffn_hidden = c.get_int("model.ffn_hidden");
    m.dec.max_len = c.get_int("model.max_len");
    m.dec.vocab_size = vocab_size;
    m.vis.patch_count = c.get_int("model.patch_count");
    m.vis.patch_dim = c.get_int("model.patch_dim");
    m.vis.layers = c.get_int("model.vision_layers");
    m.vis.width = c.get_int("model.vision_width");
    m.fire.enabled = c.get_bool("fire.enabled");
    m.fire.injection_pairs = FireConfig::parse_pairs(c.get("fire.injection_pairs"));
    m.fire.early_layer = c.get_int("fire.early_layer");
    m.fire.deep_layer = c.get_int("fire.deep_layer");
    m.fus.enabled = c.get_bool("fusion.enabled");
    m.fus.heads = c.get_int("fusion.heads");
    m.fus.dim = c.get_int("fusion.dim");
    m.reasoning = c.get_bool("reasoning.enabled");
    m.fire.validate(m.vis.layers, m.dec.n_layers);
    return m;
}

BundleVars pool_modalities(Tape& t, Var hidden, const BundleSpec& spec) {
    BundleVars b;
    if (spec.img_present && spec.img_lo >= spec.img_hi)
        throw std::invalid_argument("pool_modalities: empty image span with present flag");
    if (spec.txt_present && spec.txt_lo >= spec.txt_hi)
        throw std::invalid_argument("pool_modalities: empty text span with present flag");
    if (spec.img_present && spec.txt_present &&
        !(spec.img_hi <= spec.txt_lo || spec.txt_hi <= spec.img_lo))
        throw std::invalid_argument("pool_modalities: overlapping spans");
    if ((spec.img_present && spec.emb_pos < spec.img_hi) ||
        (spec.txt_present && spec.emb_pos < spec.txt_hi))
        throw std::invalid_argument("pool_modalities: emb position inside a modality span");
    if (spec.emb_pos < 0 || spec.emb_pos >= t.val(hidden).rows())
        throw std::invalid_argument("pool_modalities: emb position out of range");
    if (spec.img_present) {
        b.h_img = mean_rows(t, hidden, spec.img_lo, spec.img_hi);
        b.has_img = true;
    }
    if (spec.txt_present) {
        b.h_txt = mean_rows(t, hidden, spec.txt_lo, spec.txt_hi);
        b.has_txt = true;
    }
    b.h_last = select_row(t, hidden, spec.emb_pos);
    return b;
}

namespace {

const ModelConfig& validated(const ModelConfig& cfg) {
    cfg.fire.validate(cfg.vis.layers, cfg.dec.n_layers);
    return cfg;
}

}  // namespace

MoonModel::MoonModel(const ModelConfig& cfg, ParamStore& store, Rng& rng)
    : cfg_(validated(cfg)),
      vision_(cfg.vis, store, rng),
      fire_(cfg.fire, cfg.vis.layers, cfg.vis.width, cfg.dec.d_model, store, rng),
      decoder_(cfg.dec, store, rng),
      fusion_(cfg.fus, cfg.dec.d_model, store, rng) {
    img_proj_w_ = &store.create("img_proj.w",
                                init_uniform_fanin({cfg.vis.width, cfg.dec.d_model}, cfg.vis.width, rng));
    img_proj_b_ = &store.create("img_proj.b", Tensor::zeros({cfg.dec.d_model}));
}

Var MoonModel::assemble_rows(Binder& b, const SeqPlan& plan, std::vector<Var>* maps_out,
                             SeqOut& out) const {
    Tape& t = b.tape();
    std::vector<Var> parts;
    int pos = 0;
    if (plan.patches) {
        Var patches = t.feed(*plan.patches, false);
        std::vector<Var> maps = vision_.forward(b, patches);
        Var visual = fire_.enabled() ? fire_.enhance_patches(b, maps) : maps.back();
        parts.push_back(add_rowvec(t, matmul(t, visual, b(*img_proj_w_)), b(*img_proj_b_)));
        out.img_lo = 0;
        out.img_hi = cfg_.vis.patch_count;
        pos = cfg_.vis.patch_count;
        if (maps_out) *maps_out = std::move(maps);
    }
    std::vector<int> tokens;
    tokens.push_back(kBos);
    int txt_lo = pos + 1;
    tokens.insert(tokens.end(), plan.title.begin(), plan.title.end());
    out.txt_lo = txt_lo;
    out.txt_hi = txt_lo + static_cast<int>(plan.title.size());
    out.gen_start = out.txt_hi;
    tokens.insert(tokens.end(), plan.gen.begin(), plan.gen.end());
    parts.push_back(decoder_.embed_tokens(b, tokens));
    out.len = pos + static_cast<int>(tokens.size());
    return parts.size() == 1 ? parts[0] : concat_rows(t, parts);
}

SeqOut MoonModel::forward_plan(Binder& b, const SeqPlan& plan) const {
    SeqOut out;
    std::vector<Var> maps;
    Var rows = assemble_rows(b, plan, &maps, out);
    const Fire* fire = fire_.enabled() ? &fire_ : nullptr;
    Decoder::Forward f = decoder_.forward(b, rows, fire, plan.patches ? &maps : nullptr,
                                          plan.patches ? cfg_.vis.patch_count : 0);
    out.logits = f.logits;
    out.final_hidden = f.final_hidden;
    out.layer_hidden = std::move(f.layer_hidden);
    return out;
}

Var MoonModel::ntp_sum(Binder& b, const SeqOut& out, const std::vector<int>& gen) const {
    if (gen.empty()) throw std::invalid_argument("ntp_sum: no generated tokens");
    Tape& t = b.tape();
    int n = static_cast<int>(gen.size());
    Var rows = slice_rows(t, out.logits, out.gen_start - 1, out.gen_start - 1 + n);
    return scale(t, softmax_xent(t, rows, gen), static_cast<double>(n));
}

Var MoonModel::sequence_logprob(Binder& b, const SeqOut& out, const std::vector<int>& gen,
                                double temperature) const {
    if (gen.empty()) throw std::invalid_argument("sequence_logprob: no generated tokens");
    if (temperature <= 0.0) throw std::invalid_argument("sequence_logprob: temperature must be > 0");
    Tape& t = b.tape();
    int n = static_cast<int>(gen.size());
    Var rows = slice_rows(t, out.logits, out.gen_start - 1, out.gen_start - 1 + n);
    Var scaled = scale(t, rows, 1.0 / temperature);
    return scale(t, softmax_xent(t, scaled, gen), -static_cast<double>(n));
}

Var MoonModel::embedding_of(Binder& b, const SeqOut& out, FuseDiag* diag) const {
    BundleSpec spec;
    spec.img_present = out.img_hi > out.img_lo;
    spec.img_lo = out.img_lo;
    spec.img_hi = out.img_hi;
    spec.txt_present = out.txt_hi > out.txt_lo;
    spec.txt_lo = out.txt_lo;
    spec.txt_hi = out.txt_hi;
    spec.emb_pos = out.len - 1;
    BundleVars bundle = pool_modalities(b.tape(), out.final_hidden, spec);
    return fusion_.fuse(b, bundle, diag);
}

MoonModel::StepOut MoonModel::decode_step(const SeqPlan& plan) const {
    Tape t;
    Binder b(t, false);
    SeqOut out = forward_plan(b, plan);
    StepOut s;
    const Tensor& logits = t.val(out.logits);
    s.logits = Tensor::zeros({logits.cols()});
    for (int c = 0; c < logits.cols(); ++c) s.logits.data[c] = logits.at(out.len - 1, c);
    for (Var lh : out.layer_hidden) {
        const Tensor& H = t.val(lh);
        Tensor row = Tensor::zeros({H.cols()});
        for (int c = 0; c < H.cols(); ++c) row.data[c] = H.at(out.len - 1, c);
        s.layer_states.push_back(std::move(row));
    }
    return s;
}

namespace {

int argmax_lowest(const Tensor& v) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(v.numel()); ++i)
        if (v.data[i] > v.data[best]) best = i;
    return best;
}

}  // namespace

namespace {

int plan_length(const SeqPlan& plan, int patch_count) {
    return (plan.patches ? patch_count : 0) + 1 + static_cast<int>(plan.title.size()) +
           static_cast<int>(plan.gen.size());
}

}  // namespace

std::vector<int> MoonModel::greedy_gen(const SeqPlan& prefix, int max_new) const {
    SeqPlan plan = prefix;
    for (int i = 0; i < max_new; ++i) {
        if (plan_length(plan, cfg_.vis.patch_count) + 1 > cfg_.dec.max_len) break;
        StepOut s = decode_step(plan);
        int next = argmax_lowest(s.logits);
        plan.gen.push_back(next);
        if (next == kEmb || next == kEos) break;
    }
    return plan.gen;
}

SampledTrajectory MoonModel::sample_trajectory(const SeqPlan& prefix, Rng& rng, double temperature,
                                               int max_new) const {
    if (temperature <= 0.0) throw std::invalid_argument("sample_trajectory: temperature must be > 0");
    SampledTrajectory traj;
    traj.temperature = temperature;
    SeqPlan plan = prefix;
    for (int i = 0; i < max_new; ++i) {
        if (plan_length(plan, cfg_.vis.patch_count) + 1 > cfg_.dec.max_len) break;
        StepOut s = decode_step(plan);
        // log softmax of logits / T, max-subtraction stabilized
        int V = static_cast<int>(s.logits.numel());
        double m = s.logits.data[0] / temperature;
        for (int c = 1; c < V; ++c) m = std::max(m, s.logits.data[c] / temperature);
        double se = 0.0;
        for (int c = 0; c < V; ++c) se += std::exp(s.logits.data[c] / temperature - m);
        double lse = m + std::log(se);
        double u = rng.uniform();
        double acc = 0.0;
        int next = V - 1;
        for (int c = 0; c < V; ++c) {
            acc += std::exp(s.logits.data[c] / temperature - lse);
            if (u < acc) {
                next = c;
                break;
            }
        }
        traj.tokens.push_back(next);
        traj.logprobs.push_back(s.logits.data[next] / temperature - lse);
        plan.gen.push_back(next);
        if (next == kEmb) {
            traj.ended_with_emb = true;
            break;
        }
        if (next == kEos) break;
    }
    return traj;
}

SeqPlan MoonModel::plan_for(const ProductRecord& rec, Modality m, std::vector<int> gen) const {
    SeqPlan plan;
    if (m == Modality::kImage || m == Modality::kMultimodal) plan.patches = &rec.patches;
    if (m == Modality::kText || m == Modality::kMultimodal) plan.title = rec.title_tokens;
    plan.gen = std::move(gen);
    return plan;
}

int MoonModel::gen_budget() const {
    // room for the longest well-formed rationale plus slack; capped by the
    // context the decoder can hold
    int ctx_room = cfg_.dec.max_len - cfg_.vis.patch_count - 2;
    return std::min(96, ctx_room);
}

Tensor MoonModel::embed_record(const ProductRecord& rec, Modality m,
                               std::vector<int>* gen_out) const {
    SeqPlan prefix = plan_for(rec, m);
    std::vector<int> gen;
    if (cfg_.reasoning) {
        gen = greedy_gen(prefix, gen_budget());
    } else {
        gen = {kEmb};
    }
    if (gen_out) *gen_out = gen;
    SeqPlan plan = prefix;
    plan.gen = gen;
    if (plan.gen.empty() || plan.gen.back() != kEmb) plan.gen.push_back(kEmb);
    Tape t;
    Binder b(t, false);
    SeqOut out = forward_plan(b, plan);
    Var r = embedding_of(b, out);
    return t.val(r);
}

}  // namespace moonlite
