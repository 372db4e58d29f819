// Copyright 2026 moonlite authors
// SPDX-License-Identifier: Apache-2.0
//
// Counter-based deterministic RNG (splitmix64 core). State is just
// (seed, counter), so streams are trivially serializable and identical
// seeds reproduce identical sequences on any platform.

#pragma once

#include <cstdint>

namespace moonlite {

class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), counter_(0) {}

    std::uint64_t next_u64();

    // Uniform in [0, 1), 53-bit resolution.
    double uniform();
    double uniform(double lo, double hi);

    // Standard normal via Box-Muller; consumes two u64 draws per call.
    double normal();

    // Uniform integer in [0, n), n > 0. Lemire multiply-shift mapping.
    std::int64_t below(std::int64_t n);

    // Independent stream derived from (seed, tag); unaffected by this
    // stream's position.
    Rng fork(std::uint64_t tag) const;

    std::uint64_t seed() const { return seed_; }
    std::uint64_t counter() const { return counter_; }
    static Rng restore(std::uint64_t seed, std::uint64_t counter) {
        Rng r(seed);
        r.counter_ = counter;
        return r;
    }

private:
    std::uint64_t seed_;
    std::uint64_t counter_;
};

}  // namespace moonlite
