// Copyright 2026 moonlite authors
// SPDX-License-Identifier: Apache-2.0
//
// Tensor/tape kernels against hand-computed values and the central
// finite-difference oracle, RNG stream determinism, checkpoint
// round-trips.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "moonlite/checkpoint.hpp"
#include "moonlite/fd_check.hpp"
#include "moonlite/rng.hpp"
#include "moonlite/tape.hpp"

using namespace moonlite;

namespace {

Tensor random_tensor(const Shape& s, Rng& rng, double scale = 1.0) {
    Tensor t = Tensor::zeros(s);
    for (auto& v : t.data) v = scale * rng.normal();
    return t;
}

// Analytic d(probe)/dx vs central differences for a scalar-valued graph
// built by `build` on top of a single input.
using GraphBuilder = std::function<Var(Tape&, Var)>;

double check_grad(const Tensor& x0, const GraphBuilder& build, double h = 1e-5) {
    Tape t;
    Var x = t.feed(x0, true);
    Var s = build(t, x);
    REQUIRE(t.val(s).numel() == 1);
    t.backward(s);
    Tensor analytic = t.grad_of(x);
    auto f = [&build](const Tensor& xv) {
        Tape t2;
        Var x2 = t2.feed(xv, false);
        return t2.val(build(t2, x2)).data[0];
    };
    return max_rel_err(analytic, fd_grad(f, x0, h));
}

// Weighted sum probe turns any tensor output into a scalar.
Var probe(Tape& t, Var y, const Tensor& w) { return dot(t, y, t.constant(w)); }

}  // namespace

TEST_CASE("matmul identity and hand-computed values") {
    Tape t;
    Var I = t.constant(Tensor::matrix(2, 2, {1, 0, 0, 1}));
    Var M = t.constant(Tensor::matrix(2, 2, {3, -1, 2, 5}));
    Var P = matmul(t, I, M);
    CHECK(t.val(P).data == t.val(M).data);

    Var A = t.constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
    Var B = t.constant(Tensor::matrix(2, 1, {1, 1}));
    Var C = matmul(t, A, B);
    CHECK(t.val(C).data[0] == doctest::Approx(3.0));
    CHECK(t.val(C).data[1] == doctest::Approx(7.0));
}

TEST_CASE("matmul rejects mismatched inner dimensions with shapes reported") {
    Tape t;
    Var A = t.constant(Tensor::zeros({2, 3}));
    Var B = t.constant(Tensor::zeros({4, 2}));
    try {
        matmul(t, A, B);
        FAIL("expected rejection");
    } catch (const std::invalid_argument& e) {
        std::string msg = e.what();
        CHECK(msg.find("[2x3]") != std::string::npos);
        CHECK(msg.find("[4x2]") != std::string::npos);
    }
}

TEST_CASE("matmul backward matches finite differences on random 3x4 * 4x2") {
    Rng rng(42);
    for (int trial = 0; trial < 3; ++trial) {
        Tensor a0 = random_tensor({3, 4}, rng);
        Tensor b0 = random_tensor({4, 2}, rng);
        Tensor w = random_tensor({3, 2}, rng);
        // gradient w.r.t. the left operand
        CHECK(check_grad(a0, [&](Tape& t, Var x) {
                  return probe(t, matmul(t, x, t.constant(b0)), w);
              }) <= 1e-6);
        // gradient w.r.t. the right operand
        CHECK(check_grad(b0, [&](Tape& t, Var x) {
                  return probe(t, matmul(t, t.constant(a0), x), w);
              }) <= 1e-6);
    }
}

TEST_CASE("sigmoid values: zero, saturation without overflow") {
    Tape t;
    Var x = t.constant(Tensor::row_vector({0.0, 50.0, -50.0}));
    Var y = sigmoid(t, x);
    CHECK(t.val(y).data[0] == 0.5);
    // sigmoid(50) = 1 - 1.9e-22 exactly, which rounds to 1.0 in f64; the
    // point is saturation without overflow.
    CHECK(t.val(y).data[1] >= 1.0 - 1e-20);
    CHECK(t.val(y).data[1] <= 1.0);
    CHECK(t.val(y).data[2] > 0.0);
    CHECK(t.val(y).data[2] < 1e-20);
    CHECK(t.val(y).all_finite());
}

TEST_CASE("sigmoid backward vs finite differences") {
    Rng rng(7);
    Tensor x0 = random_tensor({5}, rng);
    Tensor w = random_tensor({5}, rng);
    CHECK(check_grad(x0, [&](Tape& t, Var x) { return probe(t, sigmoid(t, x), w); }) <= 1e-6);
}

TEST_CASE("layer_norm: constant row maps to bias, [1,-1] scales by 1/sqrt(1+eps)") {
    Tape t;
    Var gain = t.constant(Tensor::full({3}, 1.0));
    Var bias = t.constant(Tensor::zeros({3}));
    Var x = t.constant(Tensor::matrix(1, 3, {2.5, 2.5, 2.5}));
    Var y = layer_norm(t, x, gain, bias);
    for (double v : t.val(y).data) CHECK(v == doctest::Approx(0.0));

    Var g2 = t.constant(Tensor::full({2}, 1.0));
    Var b2 = t.constant(Tensor::zeros({2}));
    Var x2 = t.constant(Tensor::row_vector({1.0, -1.0}));
    Var y2 = layer_norm(t, x2, g2, b2);
    double expected = 1.0 / std::sqrt(1.0 + 1e-5);  // frozen from the eps convention
    CHECK(t.val(y2).data[0] == doctest::Approx(expected).epsilon(1e-12));
    CHECK(t.val(y2).data[1] == doctest::Approx(-expected).epsilon(1e-12));
}

TEST_CASE("layer_norm backward vs finite differences, x gain and bias") {
    Rng rng(11);
    for (int trial = 0; trial < 3; ++trial) {
        Tensor x0 = random_tensor({4, 6}, rng);
        Tensor g0 = random_tensor({6}, rng, 0.5);
        Tensor b0 = random_tensor({6}, rng, 0.5);
        Tensor w = random_tensor({4, 6}, rng);
        CHECK(check_grad(x0, [&](Tape& t, Var x) {
                  return probe(t, layer_norm(t, x, t.constant(g0), t.constant(b0)), w);
              }) <= 1e-5);
        CHECK(check_grad(g0, [&](Tape& t, Var g) {
                  return probe(t, layer_norm(t, t.constant(x0), g, t.constant(b0)), w);
              }) <= 1e-5);
        CHECK(check_grad(b0, [&](Tape& t, Var b) {
                  return probe(t, layer_norm(t, t.constant(x0), t.constant(g0), b), w);
              }) <= 1e-5);
    }
}

TEST_CASE("cosine_sim analytic values and zero-vector convention") {
    Tape t;
    Var v = t.constant(Tensor::row_vector({0.3, -1.2, 0.7}));
    CHECK(t.val(cosine_sim(t, v, v)).data[0] == doctest::Approx(1.0).epsilon(1e-12));

    Var e1 = t.constant(Tensor::row_vector({1, 0}));
    Var e2 = t.constant(Tensor::row_vector({0, 1}));
    CHECK(t.val(cosine_sim(t, e1, e2)).data[0] == 0.0);

    Var a = t.constant(Tensor::row_vector({1, 1}));
    CHECK(t.val(cosine_sim(t, a, e1)).data[0] == doctest::Approx(std::sqrt(2.0) / 2).epsilon(1e-9));

    Var z = t.constant(Tensor::row_vector({0, 0}));
    CHECK(t.val(cosine_sim(t, z, z)).data[0] == 0.0);
}

TEST_CASE("softmax_xent: uniform logits give ln V, rising margin drives loss to zero") {
    Tape t;
    Var z = t.constant(Tensor::matrix(1, 4, {0.7, 0.7, 0.7, 0.7}));
    CHECK(t.val(softmax_xent(t, z, {2})).data[0] == doctest::Approx(std::log(4.0)).epsilon(1e-12));

    double prev = 1e9;
    for (double margin : {1.0, 5.0, 20.0, 200.0}) {
        Tape t2;
        Var z2 = t2.constant(Tensor::matrix(1, 3, {margin, 0.0, 0.0}));
        double loss = t2.val(softmax_xent(t2, z2, {0})).data[0];
        CHECK(loss < prev);
        prev = loss;
    }
    CHECK(prev < 1e-12);
}

TEST_CASE("softmax_xent rejects out-of-range target") {
    Tape t;
    Var z = t.constant(Tensor::zeros({2, 3}));
    CHECK_THROWS_AS(softmax_xent(t, z, {0, 3}), std::invalid_argument);
}

TEST_CASE("softmax_xent backward vs finite differences") {
    Rng rng(23);
    for (int trial = 0; trial < 3; ++trial) {
        Tensor z0 = random_tensor({3, 5}, rng);
        CHECK(check_grad(z0, [&](Tape& t, Var z) { return softmax_xent(t, z, {1, 4, 0}); }) <= 1e-5);
    }
}

TEST_CASE("fd_grad oracle on analytic cases") {
    auto sum_sq = [](const Tensor& x) {
        double s = 0;
        for (double v : x.data) s += v * v;
        return s;
    };
    Tensor g = fd_grad(sum_sq, Tensor::row_vector({1, 2}), 1e-5);
    CHECK(g.data[0] == doctest::Approx(2.0).epsilon(1e-6));
    CHECK(g.data[1] == doctest::Approx(4.0).epsilon(1e-6));

    auto constant = [](const Tensor&) { return 3.5; };
    Tensor gc = fd_grad(constant, Tensor::row_vector({1, 2, 3}), 1e-5);
    for (double v : gc.data) CHECK(v == 0.0);

    auto sig0 = [](const Tensor& x) { return 1.0 / (1.0 + std::exp(-x.data[0])); };
    Tensor gs = fd_grad(sig0, Tensor::row_vector({0.0, 9.0}), 1e-5);
    CHECK(gs.data[0] == doctest::Approx(0.25).epsilon(1e-7));
    CHECK(gs.data[1] == doctest::Approx(0.0));
}

TEST_CASE("every differentiable op agrees with the oracle at random points") {
    Rng rng(2024);
    for (int trial = 0; trial < 10; ++trial) {
        Tensor x0 = random_tensor({4, 4}, rng);
        Tensor v0 = random_tensor({4}, rng);
        Tensor w44 = random_tensor({4, 4}, rng);
        Tensor w4 = random_tensor({4}, rng);
        Tensor w34 = random_tensor({3, 4}, rng);
        Tensor w48 = random_tensor({4, 8}, rng);
        Tensor w43 = random_tensor({4, 3}, rng);

        CHECK(check_grad(x0, [&](Tape& t, Var x) { return probe(t, tanh_op(t, x), w44); }) <= 1e-6);
        CHECK(check_grad(x0, [&](Tape& t, Var x) {
                  return probe(t, causal_softmax(t, x), w44);
              }) <= 1e-5);
        CHECK(check_grad(v0, [&](Tape& t, Var x) { return probe(t, l2_normalize(t, x), w4); }) <= 1e-5);
        CHECK(check_grad(v0, [&](Tape& t, Var x) {
                  return cosine_sim(t, x, t.constant(w4));
              }) <= 1e-5);
        CHECK(check_grad(v0, [&](Tape& t, Var x) { return norm2(t, x); }) <= 1e-5);
        CHECK(check_grad(x0, [&](Tape& t, Var x) {
                  return probe(t, mean_rows(t, x, 1, 3), w4);
              }) <= 1e-6);
        CHECK(check_grad(x0, [&](Tape& t, Var x) {
                  return probe(t, gather_rows(t, x, {2, 0, 2}), w34);
              }) <= 1e-6);
        CHECK(check_grad(x0, [&](Tape& t, Var x) {
                  return probe(t, scale_rows(t, x, t.constant(w4)), w44);
              }) <= 1e-6);
        CHECK(check_grad(v0, [&](Tape& t, Var s) {
                  return probe(t, scale_rows(t, t.constant(x0), s), w44);
              }) <= 1e-6);
        CHECK(check_grad(x0, [&](Tape& t, Var x) {
                  return probe(t, add_rows_range(t, x, t.constant(w4), 1, 3), w44);
              }) <= 1e-6);
        CHECK(check_grad(v0, [&](Tape& t, Var x) {
                  return probe(t, add_rows_range(t, t.constant(x0), x, 0, 2), w44);
              }) <= 1e-6);
        CHECK(check_grad(x0, [&](Tape& t, Var x) {
                  return probe(t, concat_cols(t, x, t.constant(w44)), w48);
              }) <= 1e-6);
        CHECK(check_grad(v0, [&](Tape& t, Var x) {
                  return probe(t, mul_vs(t, element(t, x, 2), t.constant(w44)), w44);
              }) <= 1e-6);
        CHECK(check_grad(x0, [&](Tape& t, Var x) {
                  return probe(t, matmul_nt(t, x, t.constant(w34)), w43);
              }) <= 1e-6);
        CHECK(check_grad(x0, [&](Tape& t, Var x) {
                  return probe(t, add_rowvec(t, x, t.constant(w4)), w44);
              }) <= 1e-6);
        CHECK(check_grad(x0, [&](Tape& t, Var x) { return probe(t, exp_op(t, scale(t, x, 0.3)), w44); }) <= 1e-6);
    }
}

TEST_CASE("composition through layer_norm stays within the relaxed tolerance") {
    Rng rng(5);
    for (int trial = 0; trial < 5; ++trial) {
        Tensor x0 = random_tensor({3, 6}, rng);
        Tensor g0 = Tensor::full({6}, 1.0);
        Tensor b0 = Tensor::zeros({6});
        Tensor w6 = random_tensor({6, 6}, rng);
        Tensor probe_w = random_tensor({3, 6}, rng);
        CHECK(check_grad(x0, [&](Tape& t, Var x) {
                  Var n = layer_norm(t, x, t.constant(g0), t.constant(b0));
                  Var h = tanh_op(t, matmul(t, n, t.constant(w6)));
                  return probe(t, layer_norm(t, h, t.constant(g0), t.constant(b0)), probe_w);
              }) <= 1e-4);
    }
}

TEST_CASE("forward passes are bit-identical across repeated runs") {
    Rng rng(99);
    Tensor a = random_tensor({6, 6}, rng);
    Tensor b = random_tensor({6, 6}, rng);
    auto run = [&]() {
        Tape t;
        Var x = t.feed(a, false);
        Var y = t.feed(b, false);
        Var z = causal_softmax(t, matmul(t, tanh_op(t, x), y));
        return t.val(sum(t, z)).data[0];
    };
    double first = run();
    for (int i = 0; i < 5; ++i) {
        double again = run();
        CHECK(std::memcmp(&first, &again, sizeof(double)) == 0);
    }
}

TEST_CASE("rng: identical seeds give identical sequences, forks are independent") {
    Rng a(123456789), b(123456789);
    for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());

    // restore continues the stream
    Rng c(55);
    c.uniform();
    c.uniform();
    Rng d = Rng::restore(c.seed(), c.counter());
    for (int i = 0; i < 100; ++i) CHECK(c.next_u64() == d.next_u64());

    // forks do not depend on the parent's position
    Rng e(7), f(7);
    f.uniform();
    f.uniform();
    CHECK(e.fork(3).next_u64() == f.fork(3).next_u64());
    CHECK(e.fork(3).next_u64() != e.fork(4).next_u64());

    // draws stay in range and are not constant
    Rng g(13);
    bool varied = false;
    std::int64_t first = g.below(10);
    for (int i = 0; i < 200; ++i) {
        std::int64_t v = g.below(10);
        CHECK(v >= 0);
        CHECK(v < 10);
        varied = varied || v != first;
    }
    CHECK(varied);
    double u = Rng(3).uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
}

TEST_CASE("tensor invariants: positive dims, finite outputs") {
    CHECK_THROWS_AS(Tensor::zeros({0}), std::invalid_argument);
    CHECK_THROWS_AS(Tensor::zeros({3, 0}), std::invalid_argument);
    CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0}), std::invalid_argument);

    Rng rng(1);
    Tape t;
    Var x = t.constant(random_tensor({4, 4}, rng, 10.0));
    Var y = causal_softmax(t, x);
    CHECK(t.val(y).all_finite());
}

TEST_CASE("checkpoint round-trip is bit-exact, including raw u64 payloads") {
    Rng rng(321);
    std::vector<NamedTensor> entries;
    entries.push_back({"weights/a", random_tensor({3, 5}, rng)});
    entries.push_back({"weights/b", Tensor::row_vector({-0.0, 1e-308, 1e308, -1.5})});
    entries.push_back({"rng.state", u64_tensor({0xDEADBEEFCAFEF00DULL, 42})});

    std::string path = "nc_roundtrip.ckpt";
    write_checkpoint(path, entries);
    auto back = read_checkpoint(path);
    REQUIRE(back.size() == entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) {
        CHECK(back[i].name == entries[i].name);
        CHECK(back[i].tensor.shape == entries[i].tensor.shape);
        REQUIRE(back[i].tensor.data.size() == entries[i].tensor.data.size());
        CHECK(std::memcmp(back[i].tensor.data.data(), entries[i].tensor.data.data(),
                          back[i].tensor.data.size() * sizeof(double)) == 0);
    }
    auto words = u64_from_tensor(back[2].tensor);
    CHECK(words[0] == 0xDEADBEEFCAFEF00DULL);
    CHECK(words[1] == 42);
    std::remove(path.c_str());

    CHECK_THROWS(read_checkpoint("does_not_exist.ckpt"));
}

TEST_CASE("param store: ids, zero_grads, duplicate rejection") {
    ParamStore store;
    Param& p = store.create("w", Tensor::full({2, 2}, 1.0));
    CHECK(p.id == 0);
    CHECK(p.grad.same_shape(p.value));
    p.grad.fill(3.0);
    store.zero_grads();
    for (double g : p.grad.data) CHECK(g == 0.0);
    CHECK_THROWS_AS(store.create("w", Tensor::zeros({1})), std::invalid_argument);
}
