// Copyright 2026 moonlite authors
// SPDX-License-Identifier: Apache-2.0
//
// Fusion module: presence scores, consistency gates, per-head subspace
// weights, the Hadamard interaction, base-only reductions, and gradient
// checks against finite differences.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "test_support.hpp"

using namespace moonlite;
using moonlite::testing::param_fd_err;

namespace {

struct FusionFixture {
    int d_model = 6;
    FusionConfig cfg;
    ParamStore store;
    Rng rng{91};
    std::unique_ptr<Fusion> fusion;

    explicit FusionFixture(int heads = 2, int dim = 6, bool enabled = true) {
        cfg.enabled = enabled;
        cfg.heads = heads;
        cfg.dim = dim;
        fusion = std::make_unique<Fusion>(cfg, d_model, store, rng);
    }

    void identity_projections() {
        for (const char* name : {"fus.proj_base", "fus.proj_img", "fus.proj_txt"}) {
            Param* p = store.find(name);
            p->value.fill(0.0);
            for (int i = 0; i < std::min(d_model, cfg.dim); ++i) p->value.at(i, i) = 1.0;
        }
    }

    Tensor vec(std::initializer_list<double> v) { return Tensor::row_vector(v); }
};

Tensor random_vec(int n, Rng& rng) {
    Tensor t = Tensor::zeros({n});
    for (auto& v : t.data) v = rng.normal();
    return t;
}

Tensor fuse_value(FusionFixture& f, const Tensor* img, const Tensor* txt, const Tensor& last,
                  FuseDiag* diag = nullptr) {
    Tape t;
    Binder b(t, false);
    BundleVars bundle;
    if (img) {
        bundle.h_img = t.feed(*img, false);
        bundle.has_img = true;
    }
    if (txt) {
        bundle.h_txt = t.feed(*txt, false);
        bundle.has_txt = true;
    }
    bundle.h_last = t.feed(last, false);
    return t.val(f.fusion->fuse(b, bundle, diag));
}

}  // namespace

TEST_CASE("presence scores: absent is exactly zero, zero-vector is 0.5, ln 3 gives 0.75") {
    FusionFixture f;
    Rng rng(7);
    Tensor last = random_vec(f.d_model, rng);

    FuseDiag diag;
    Tensor txt_zero = Tensor::zeros({f.d_model});
    fuse_value(f, nullptr, &txt_zero, last, &diag);
    CHECK(diag.s_i == 0.0);
    CHECK(diag.s_t == 0.5);

    Tensor txt_ln3 = Tensor::zeros({f.d_model});
    txt_ln3.data[0] = std::log(3.0);
    fuse_value(f, nullptr, &txt_ln3, last, &diag);
    CHECK(diag.s_t == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("consistency gates: aligned 1, orthogonal 0, anti-aligned clamped to 0") {
    FusionFixture f;
    f.identity_projections();
    f.store.find("fus.gate")->value.fill(0.0);

    Tensor last = f.vec({1, 0, 0, 0, 0, 0});
    FuseDiag diag;

    Tensor img_aligned = f.vec({2, 0, 0, 0, 0, 0});
    fuse_value(f, &img_aligned, nullptr, last, &diag);
    CHECK(diag.g_i == doctest::Approx(1.0).epsilon(1e-9));

    Tensor img_orth = f.vec({0, 3, 0, 0, 0, 0});
    fuse_value(f, &img_orth, nullptr, last, &diag);
    CHECK(diag.g_i == doctest::Approx(0.0));

    Tensor img_anti = f.vec({-2, 0, 0, 0, 0, 0});
    fuse_value(f, &img_anti, nullptr, last, &diag);
    CHECK(diag.g_i == 0.0);
}

TEST_CASE("head gates: zero gate net gives alpha 0.5 on every head, 3H outputs") {
    for (int H : {1, 2, 3}) {
        FusionFixture f(H, 6);
        f.store.find("fus.gate")->value.fill(0.0);
        Rng rng(17);
        Tensor img = random_vec(f.d_model, rng), txt = random_vec(f.d_model, rng),
               last = random_vec(f.d_model, rng);
        FuseDiag diag;
        fuse_value(f, &img, &txt, last, &diag);
        CHECK(static_cast<int>(diag.alpha_i.size()) == H);
        CHECK(static_cast<int>(diag.alpha_t.size()) == H);
        CHECK(static_cast<int>(diag.alpha_mm.size()) == H);
        for (int h = 0; h < H; ++h) {
            CHECK(diag.alpha_i[h] == 0.5);
            CHECK(diag.alpha_t[h] == 0.5);
            CHECK(diag.alpha_mm[h] == 0.5);
        }
    }
}

TEST_CASE("both modalities absent reduces to the normalized projected base") {
    FusionFixture f;
    Rng rng(23);
    Tensor last = random_vec(f.d_model, rng);
    Tensor r = fuse_value(f, nullptr, nullptr, last);

    // manual: normalize(last * proj_base)
    Tape t;
    Var manual = l2_normalize(
        t, select_row(t, matmul(t, t.feed(last, false), t.feed(f.store.find("fus.proj_base")->value, false)), 0));
    for (std::int64_t i = 0; i < r.numel(); ++i)
        CHECK(r.data[i] == doctest::Approx(t.val(manual).data[i]).epsilon(1e-12));

    double n = 0;
    for (double v : r.data) n += v * v;
    CHECK(std::sqrt(n) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("missing-modality safety: an absent modality's raw vector cannot influence r") {
    FusionFixture f;
    Rng rng(29);
    Tensor last = random_vec(f.d_model, rng);
    Tensor txt = random_vec(f.d_model, rng);
    Tensor r1 = fuse_value(f, nullptr, &txt, last);
    // A different image vector is irrelevant while has_img stays false.
    Tensor r2 = fuse_value(f, nullptr, &txt, last);
    CHECK(std::memcmp(r1.data.data(), r2.data.data(), r1.data.size() * sizeof(double)) == 0);
}

TEST_CASE("disabled fusion keeps only the base projection pathway") {
    FusionFixture f(2, 6, /*enabled=*/false);
    CHECK(f.store.find("fus.proj_img") == nullptr);
    CHECK(f.store.find("fus.gate") == nullptr);
    Rng rng(31);
    Tensor last = random_vec(f.d_model, rng);
    Tensor r = fuse_value(f, nullptr, nullptr, last);
    double n = 0;
    for (double v : r.data) n += v * v;
    CHECK(std::sqrt(n) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("head locality: other heads change only through the final normalization") {
    FusionFixture f(3, 6);
    Rng rng(37);
    Tensor img = random_vec(f.d_model, rng), txt = random_vec(f.d_model, rng),
           last = random_vec(f.d_model, rng);
    Tensor r_before = fuse_value(f, &img, &txt, last);

    // Perturb the gate column feeding head 0's alpha_mm only (the
    // interaction pathway carries no consistency gate, so it is always live).
    Param* gate = f.store.find("fus.gate");
    int col = 2 * f.cfg.heads;  // alpha_mm of head 0
    for (int row = 0; row < gate->value.rows(); ++row) gate->value.at(row, col) += 1.5;
    Tensor r_after = fuse_value(f, &img, &txt, last);

    // slice 0 moved; slices 1.. changed only by a common rescaling
    int hs = f.cfg.dim / f.cfg.heads;
    double ratio = 0.0;
    bool ratio_set = false;
    for (int i = hs; i < f.cfg.dim; ++i) {
        if (std::abs(r_before.data[i]) < 1e-12) continue;
        double q = r_after.data[i] / r_before.data[i];
        if (!ratio_set) {
            ratio = q;
            ratio_set = true;
        } else {
            CHECK(q == doctest::Approx(ratio).epsilon(1e-9));
        }
    }
    REQUIRE(ratio_set);
    bool head0_moved = false;
    for (int i = 0; i < hs; ++i)
        if (std::abs(r_after.data[i] - ratio * r_before.data[i]) > 1e-9) head0_moved = true;
    CHECK(head0_moved);
}

TEST_CASE("hadamard interaction is symmetric") {
    Tape t;
    Rng rng(41);
    Tensor a = random_vec(8, rng), b = random_vec(8, rng);
    Var ab = mul(t, t.feed(a, false), t.feed(b, false));
    Var ba = mul(t, t.feed(b, false), t.feed(a, false));
    CHECK(t.val(ab).data == t.val(ba).data);
}

TEST_CASE("fuse gradients match finite differences for params and inputs") {
    FusionFixture f(2, 6);
    Rng rng(43);
    Tensor img = random_vec(f.d_model, rng), txt = random_vec(f.d_model, rng),
           last = random_vec(f.d_model, rng);
    Tensor probe = random_vec(f.cfg.dim, rng);

    auto loss_fn = [&](Binder& b) {
        Tape& t = b.tape();
        BundleVars bundle;
        bundle.h_img = t.feed(img, false);
        bundle.has_img = true;
        bundle.h_txt = t.feed(txt, false);
        bundle.has_txt = true;
        bundle.h_last = t.feed(last, false);
        return dot(t, f.fusion->fuse(b, bundle), t.constant(probe));
    };
    CHECK(param_fd_err(f.store, *f.store.find("fus.gate"), loss_fn) <= 1e-4);
    CHECK(param_fd_err(f.store, *f.store.find("fus.proj_img"), loss_fn) <= 1e-4);
    CHECK(param_fd_err(f.store, *f.store.find("fus.proj_base"), loss_fn) <= 1e-4);

    // gradient w.r.t. the raw bundle inputs
    auto input_grad_err = [&](Tensor& target) {
        Tape t;
        Binder b(t, true);
        BundleVars bundle;
        bundle.h_img = t.feed(img, &target == &img);
        bundle.has_img = true;
        bundle.h_txt = t.feed(txt, &target == &txt);
        bundle.has_txt = true;
        bundle.h_last = t.feed(last, &target == &last);
        Var loss = dot(t, f.fusion->fuse(b, bundle), t.constant(probe));
        t.backward(loss);
        Var which = (&target == &img) ? bundle.h_img : (&target == &txt) ? bundle.h_txt : bundle.h_last;
        Tensor analytic = t.grad_of(which);
        Tensor saved = target;
        auto fval = [&](const Tensor& v) {
            target = v;
            Tape t2;
            Binder b2(t2, false);
            BundleVars bd;
            bd.h_img = t2.feed(img, false);
            bd.has_img = true;
            bd.h_txt = t2.feed(txt, false);
            bd.has_txt = true;
            bd.h_last = t2.feed(last, false);
            double out = t2.val(dot(t2, f.fusion->fuse(b2, bd), t2.constant(probe))).data[0];
            return out;
        };
        Tensor fd = fd_grad(fval, saved, 1e-5);
        target = saved;
        return max_rel_err(analytic, fd);
    };
    CHECK(input_grad_err(img) <= 1e-4);
    CHECK(input_grad_err(txt) <= 1e-4);
    CHECK(input_grad_err(last) <= 1e-4);
}

TEST_CASE("dim must divide by heads") {
    ParamStore store;
    Rng rng(1);
    FusionConfig cfg;
    cfg.heads = 3;
    cfg.dim = 8;
    CHECK_THROWS_AS(Fusion(cfg, 6, store, rng), std::invalid_argument);
}
