// Copyright 2026 moonlite authors
// SPDX-License-Identifier: Apache-2.0

#include "moonlite/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace moonlite {

namespace {

inline std::uint64_t mix64(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ULL;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return z;
}

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

}  // namespace

std::uint64_t Rng::next_u64() {
    ++counter_;
    return mix64(seed_ + counter_ * kGolden);
}

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
    // 1 - u keeps the log argument in (0, 1].
    double u1 = 1.0 - uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
}

std::int64_t Rng::below(std::int64_t n) {
    if (n <= 0) throw std::invalid_argument("Rng::below: n must be positive");
    unsigned __int128 wide = static_cast<unsigned __int128>(next_u64());
    wide *= static_cast<unsigned __int128>(n);
    return static_cast<std::int64_t>(wide >> 64);
}

Rng Rng::fork(std::uint64_t tag) const { return Rng(mix64(seed_ ^ mix64(tag + kGolden))); }

}  // namespace moonlite
