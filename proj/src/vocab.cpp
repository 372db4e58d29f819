// Copyright 2026 moonlite authors
// SPDX-License-Identifier: Apache-2.0

#include "moonlite/vocab.hpp"

#include <fstream>
#include <stdexcept>

namespace moonlite {

const std::array<const char*, Vocab::kNumSpecials>& Vocab::special_names() {
    static const std::array<const char*, kNumSpecials> names = {
        "<pad>", "<bos>", "<eos>", "<think>", "</think>", "<|emb|>"};
    return names;
}

Vocab::Vocab(const std::vector<std::string>& rest) {
    for (const char* s : special_names()) tokens_.emplace_back(s);
    for (const auto& t : rest) tokens_.push_back(t);
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        if (!ids_.emplace(tokens_[i], static_cast<int>(i)).second)
            throw std::invalid_argument("Vocab: duplicate token '" + tokens_[i] + "'");
    }
}

int Vocab::id(const std::string& tok) const {
    auto it = ids_.find(tok);
    if (it == ids_.end()) throw std::invalid_argument("Vocab: unknown token '" + tok + "'");
    return it->second;
}

const std::string& Vocab::token(int id) const {
    if (id < 0 || id >= size()) throw std::invalid_argument("Vocab: id out of range");
    return tokens_[id];
}

std::vector<int> Vocab::encode(const std::vector<std::string>& toks) const {
    std::vector<int> out;
    out.reserve(toks.size());
    for (const auto& t : toks) out.push_back(id(t));
    return out;
}

std::vector<std::string> Vocab::decode(const std::vector<int>& ids) const {
    std::vector<std::string> out;
    out.reserve(ids.size());
    for (int i : ids) out.push_back(token(i));
    return out;
}

void Vocab::save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("Vocab: cannot write " + path);
    for (const auto& t : tokens_) f << t << "\n";
}

Vocab Vocab::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("Vocab: cannot open " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    if (lines.size() < kNumSpecials) throw std::runtime_error("Vocab: file too short: " + path);
    for (int i = 0; i < kNumSpecials; ++i)
        if (lines[i] != special_names()[i])
            throw std::runtime_error("Vocab: special token order violated in " + path + " at line " +
                                     std::to_string(i + 1));
    return Vocab(std::vector<std::string>(lines.begin() + kNumSpecials, lines.end()));
}

}  // namespace moonlite
