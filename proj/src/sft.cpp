// Copyright 2026 moonlite authors
// SPDX-License-Identifier: Apache-2.0

#include "moonlite/sft.hpp"

#include <memory>
#include <stdexcept>

#include "moonlite/parallel.hpp"

namespace moonlite {

Var infonce(Tape& t, Var r_q, Var r_p, const std::vector<Var>& negs, double tau) {
    if (tau <= 0.0) throw std::invalid_argument("infonce: temperature must be positive");
    std::vector<Var> cands;
    cands.reserve(1 + negs.size());
    cands.push_back(r_p);
    for (Var n : negs) cands.push_back(n);
    Var stack = concat_rows(t, cands);
    Var sims = matmul_nt(t, r_q, stack);  // 1 x (1 + |negs|)
    return softmax_xent(t, scale(t, sims, 1.0 / tau), {0});
}

std::vector<int> target_rationale(const AttrCodec& codec, const ProductRecord& rec, Modality m,
                                  bool reasoning) {
    if (!reasoning) return {kEmb};
    switch (m) {
        case Modality::kImage: return codec.serialize(rec.attrs_img);
        case Modality::kText: return codec.serialize(rec.attrs_txt);
        case Modality::kMultimodal: return codec.serialize(rec.attrs_mm);
    }
    throw std::logic_error("target_rationale: bad modality");
}

namespace {

struct Element {
    const ProductRecord* rec = nullptr;
    Modality modality = Modality::kMultimodal;
    std::vector<int> gen;

    std::unique_ptr<Tape> tape;
    Var ntp{};
    Var r{};
    double ntp_value = 0.0;
    Tensor r_value;
    Tensor r_grad;        // seed from the master tape
};

}  // namespace

SftStats sft_batch(const MoonModel& model, const AttrCodec& codec, const Dataset& data,
                   const std::vector<int>& indices, const SftWeights& weights, bool backward,
                   ParamStore& store, int threads) {
    int B = static_cast<int>(indices.size());
    if (B == 0) throw std::invalid_argument("sft_batch: empty batch");
    bool reasoning = model.config().reasoning;

    std::vector<Element> elems(5 * B);
    auto bind = [&elems](int slot, const ProductRecord* rec, Modality m) {
        elems[slot].rec = rec;
        elems[slot].modality = m;
    };
    for (int i = 0; i < B; ++i) {
        const Triplet& trip = data.triplets[indices[i]];
        bind(5 * i + 0, &trip.query, Modality::kImage);
        bind(5 * i + 1, &trip.query, Modality::kText);
        bind(5 * i + 2, &trip.query, Modality::kMultimodal);
        bind(5 * i + 3, &data.positive_of(trip), Modality::kMultimodal);
        bind(5 * i + 4, &data.negative_of(trip), Modality::kMultimodal);
    }
    for (auto& e : elems) e.gen = target_rationale(codec, *e.rec, e.modality, reasoning);

    // Phase 1: independent forwards, one tape per element.
    parallel_for(static_cast<int>(elems.size()), threads, [&](int idx) {
        Element& e = elems[idx];
        e.tape = std::make_unique<Tape>();
        Binder b(*e.tape, backward);
        SeqPlan plan = model.plan_for(*e.rec, e.modality, e.gen);
        SeqOut out = model.forward_plan(b, plan);
        e.ntp = model.ntp_sum(b, out, e.gen);
        e.r = model.embedding_of(b, out);
        e.ntp_value = e.tape->val(e.ntp).data[0];
        e.r_value = e.tape->val(e.r);
    });

    // Phase 2: contrastive losses over the fused embeddings on a master
    // tape fed from the element tapes.
    Tape master;
    std::vector<Var> feeds(elems.size());
    for (std::size_t e = 0; e < elems.size(); ++e) feeds[e] = master.feed(elems[e].r_value, true);

    auto query_loss = [&](int i, int elem_offset) {
        std::vector<Var> negs;
        negs.push_back(feeds[5 * i + 4]);
        for (int j = 0; j < B; ++j)
            if (j != i) negs.push_back(feeds[5 * j + 3]);
        return infonce(master, feeds[5 * i + elem_offset], feeds[5 * i + 3], negs, weights.tau);
    };

    Var l_img{}, l_txt{}, l_mm{};
    for (int i = 0; i < B; ++i) {
        Var qi = query_loss(i, 0), qt = query_loss(i, 1), qm = query_loss(i, 2);
        l_img = i ? add(master, l_img, qi) : qi;
        l_txt = i ? add(master, l_txt, qt) : qt;
        l_mm = i ? add(master, l_mm, qm) : qm;
    }
    l_img = scale(master, l_img, 1.0 / B);
    l_txt = scale(master, l_txt, 1.0 / B);
    l_mm = scale(master, l_mm, 1.0 / B);
    Var contrastive = add(master, add(master, scale(master, l_img, weights.w_img),
                                      scale(master, l_txt, weights.w_txt)),
                          scale(master, l_mm, weights.w_mm));

    SftStats stats;
    stats.l_img = master.val(l_img).data[0];
    stats.l_txt = master.val(l_txt).data[0];
    stats.l_mm = master.val(l_mm).data[0];
    double ntp_total = 0.0;
    for (const auto& e : elems) ntp_total += e.ntp_value;
    stats.l_ntp = ntp_total / B;
    stats.total = master.val(contrastive).data[0] + weights.w_ntp * stats.l_ntp;

    if (!backward) return stats;

    master.backward(contrastive);
    for (std::size_t e = 0; e < elems.size(); ++e) elems[e].r_grad = master.grad_of(feeds[e]);

    // Phase 3: per-element backwards from the spliced seeds.
    double ntp_seed = weights.w_ntp / B;
    parallel_for(static_cast<int>(elems.size()), threads, [&](int idx) {
        Element& e = elems[idx];
        e.tape->backward({{e.r, e.r_grad}, {e.ntp, Tensor::scalar(ntp_seed)}});
    });

    // Fixed-order merge keeps results independent of thread count.
    for (const auto& e : elems)
        e.tape->export_grads([&store](int pid, const Tensor& g) { store.at(pid).grad.add_(g); });
    return stats;
}

SftTrainer::SftTrainer(MoonModel& model, ParamStore& store, const Dataset& data,
                       const AttrCodec& codec, const SftWeights& weights, double lr,
                       double grad_clip, int batch_size, int threads, Rng data_rng)
    : model_(model),
      store_(store),
      data_(data),
      codec_(codec),
      weights_(weights),
      grad_clip_(grad_clip),
      batch_size_(batch_size),
      threads_(threads),
      adam_(store, lr),
      data_rng_(data_rng) {
    if (data.triplets.empty()) throw std::invalid_argument("SftTrainer: dataset has no triplets");
}

SftStats SftTrainer::step() {
    std::vector<int> batch(batch_size_);
    for (int i = 0; i < batch_size_; ++i)
        batch[i] = static_cast<int>(data_rng_.below(data_.triplets.size()));
    store_.zero_grads();
    SftStats stats = sft_batch(model_, codec_, data_, batch, weights_, true, store_, threads_);
    adam_.clip_grad_norm(grad_clip_);
    adam_.step();
    ++step_index_;
    return stats;
}

void SftTrainer::train(int steps, std::FILE* log) {
    for (int s = 0; s < steps; ++s) {
        SftStats st = step();
        if (log)
            std::fprintf(log, "%d\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\n", step_index_, st.total, st.l_img,
                         st.l_txt, st.l_mm, st.l_ntp);
    }
}

}  // namespace moonlite
