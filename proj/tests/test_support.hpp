// Copyright 2026 moonlite authors
// SPDX-License-Identifier: Apache-2.0
//
// Small shared fixtures: a 3-key schema, a micro model configuration that
// trains in seconds, and a generated micro dataset.

#pragma once

#include <functional>
#include <memory>

#include "moonlite/fd_check.hpp"
#include "moonlite/grpo.hpp"
#include "moonlite/model.hpp"
#include "moonlite/sft.hpp"

namespace moonlite::testing {

// Worst relative error between the analytic gradient of a scalar loss
// w.r.t. one Param and central differences. loss_fn must rebuild the same
// graph on any Binder it is given.
inline double param_fd_err(ParamStore& store, Param& p,
                           const std::function<Var(Binder&)>& loss_fn, double h = 1e-5) {
    store.zero_grads();
    {
        Tape t;
        Binder b(t, true);
        Var loss = loss_fn(b);
        t.backward(loss);
        t.export_grads([&store](int pid, const Tensor& g) { store.at(pid).grad.add_(g); });
    }
    Tensor analytic = p.grad;
    Tensor saved = p.value;
    auto f = [&p, &loss_fn](const Tensor& v) {
        p.value = v;
        Tape t;
        Binder b(t, false);
        return t.val(loss_fn(b)).data[0];
    };
    Tensor fd = fd_grad(f, saved, h);
    p.value = saved;
    return max_rel_err(analytic, fd);
}

inline Schema micro_schema() {
    Schema s;
    s.keys = {{"Category", {"Alpha", "Beta", "Gamma", "Delta"}},
              {"Color", {"Red", "Blue", "Green", "Gold"}},
              {"Style", {"Plain", "Fancy", "Retro", "Sport"}}};
    return s;
}

inline ModelConfig micro_model_config(int vocab_size, bool fire_on = true, bool fusion_on = true,
                                      bool reasoning_on = true) {
    ModelConfig mc;
    mc.dec.n_layers = 3;
    mc.dec.d_model = 32;
    mc.dec.ffn_hidden = 64;
    mc.dec.vocab_size = vocab_size;
    mc.dec.max_len = 64;
    mc.vis.patch_count = 4;
    mc.vis.patch_dim = 6;
    mc.vis.layers = 2;
    mc.vis.width = 16;
    mc.fire.enabled = fire_on;
    mc.fire.injection_pairs = {{1, 0}, {2, 0}};
    mc.fire.early_layer = 0;
    mc.fire.deep_layer = 2;
    mc.fus.enabled = fusion_on;
    mc.fus.heads = 2;
    mc.fus.dim = 32;
    mc.reasoning = reasoning_on;
    return mc;
}

struct Micro {
    Schema schema;
    Vocab vocab;
    AttrCodec codec;
    Dataset data;
    ParamStore store;
    std::unique_ptr<MoonModel> model;

    static Dataset make_data(const Schema& schema, const Vocab& vocab, std::uint64_t seed,
                             int products, int triplets) {
        GenParams p;
        p.patch_count = 4;
        p.patch_dim = 6;
        p.noise_sigma = 0.02;
        Rng rng(seed);
        Rng proj_rng = rng.fork(11), uni_rng = rng.fork(12), trip_rng = rng.fork(13);
        PatchProjector proj = PatchProjector::make(schema, p, proj_rng);
        Dataset data{schema, vocab, p, gen_universe(schema, products, proj, p, uni_rng, vocab), {}};
        data.triplets = gen_triplets(data.universe, triplets, schema, proj, p, trip_rng);
        return data;
    }

    Micro(std::uint64_t seed, int products, int triplets, bool fire_on = true,
          bool fusion_on = true, bool reasoning_on = true)
        : schema(micro_schema()),
          vocab(schema.vocab_tail()),
          codec(vocab, schema),
          data(make_data(schema, vocab, seed, products, triplets)) {
        Rng init = Rng(seed).fork(1);
        model = std::make_unique<MoonModel>(
            micro_model_config(vocab.size(), fire_on, fusion_on, reasoning_on), store, init);
    }

    // Quick overfit pass so decodes become meaningful.
    SftStats overfit(int steps, double lr = 0.003, int batch = 4, std::uint64_t seed = 2) {
        SftWeights w;
        SftTrainer trainer(*model, store, data, codec, w, lr, 1.0, batch, 0, Rng(seed));
        SftStats last;
        for (int s = 0; s < steps; ++s) last = trainer.step();
        return last;
    }
};

}  // namespace moonlite::testing
