// Copyright 2026 moonlite authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <string>
#include <unordered_map>
#include <vector>

namespace moonlite {

// Fixed special-token ids. The vocabulary file lists these first, in this
// exact order, one token per line, line number == id.
enum SpecialToken : int {
    kPad = 0,
    kBos = 1,
    kEos = 2,
    kThinkOpen = 3,
    kThinkClose = 4,
    kEmb = 5,
};

class Vocab {
public:
    static constexpr int kNumSpecials = 6;
    static const std::array<const char*, kNumSpecials>& special_names();

    // Specials are prepended automatically; `rest` follows in given order.
    explicit Vocab(const std::vector<std::string>& rest);

    int size() const { return static_cast<int>(tokens_.size()); }
    bool contains(const std::string& tok) const { return ids_.count(tok) != 0; }
    int id(const std::string& tok) const;
    const std::string& token(int id) const;

    std::vector<int> encode(const std::vector<std::string>& toks) const;
    std::vector<std::string> decode(const std::vector<int>& ids) const;

    void save(const std::string& path) const;
    static Vocab load(const std::string& path);

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> ids_;
};

}  // namespace moonlite
