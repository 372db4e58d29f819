// Copyright 2026 moonlite authors
// SPDX-License-Identifier: Apache-2.0

#include "moonlite/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <memory>
#include <stdexcept>
#include <unordered_map>

namespace moonlite {

namespace {

constexpr char kMagic[] = "MOONLITE1";  // 9 bytes on disk, no terminator
constexpr std::size_t kMagicLen = 9;

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void put_u32(std::FILE* f, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    if (std::fwrite(b, 1, 4, f) != 4) throw std::runtime_error("checkpoint: short write");
}

void put_f64(std::FILE* f, double d) {
    std::uint64_t v = std::bit_cast<std::uint64_t>(d);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    if (std::fwrite(b, 1, 8, f) != 8) throw std::runtime_error("checkpoint: short write");
}

bool get_u32(std::FILE* f, std::uint32_t& v) {
    unsigned char b[4];
    std::size_t n = std::fread(b, 1, 4, f);
    if (n == 0) return false;
    if (n != 4) throw std::runtime_error("checkpoint: truncated u32");
    v = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
        (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    return true;
}

double get_f64(std::FILE* f) {
    unsigned char b[8];
    if (std::fread(b, 1, 8, f) != 8) throw std::runtime_error("checkpoint: truncated f64");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return std::bit_cast<double>(v);
}

}  // namespace

void write_checkpoint(const std::string& path, const std::vector<NamedTensor>& entries) {
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw std::runtime_error("checkpoint: cannot open for write: " + path);
    if (std::fwrite(kMagic, 1, kMagicLen, f.get()) != kMagicLen)
        throw std::runtime_error("checkpoint: short write");
    for (const auto& e : entries) {
        put_u32(f.get(), static_cast<std::uint32_t>(e.name.size()));
        if (!e.name.empty() &&
            std::fwrite(e.name.data(), 1, e.name.size(), f.get()) != e.name.size())
            throw std::runtime_error("checkpoint: short write");
        put_u32(f.get(), static_cast<std::uint32_t>(e.tensor.shape.size()));
        for (int d : e.tensor.shape) put_u32(f.get(), static_cast<std::uint32_t>(d));
        for (double v : e.tensor.data) put_f64(f.get(), v);
    }
    if (std::fflush(f.get()) != 0) throw std::runtime_error("checkpoint: flush failed: " + path);
}

std::vector<NamedTensor> read_checkpoint(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw std::runtime_error("checkpoint: cannot open: " + path);
    char magic[kMagicLen];
    if (std::fread(magic, 1, kMagicLen, f.get()) != kMagicLen ||
        std::string(magic, kMagicLen) != std::string(kMagic, kMagicLen))
        throw std::runtime_error("checkpoint: bad magic in " + path);
    std::vector<NamedTensor> out;
    std::uint32_t name_len;
    while (get_u32(f.get(), name_len)) {
        NamedTensor e;
        e.name.resize(name_len);
        if (name_len &&
            std::fread(e.name.data(), 1, name_len, f.get()) != static_cast<std::size_t>(name_len))
            throw std::runtime_error("checkpoint: truncated name in " + path);
        std::uint32_t rank;
        if (!get_u32(f.get(), rank)) throw std::runtime_error("checkpoint: truncated rank");
        Shape shape(rank);
        for (std::uint32_t i = 0; i < rank; ++i) {
            std::uint32_t d;
            if (!get_u32(f.get(), d)) throw std::runtime_error("checkpoint: truncated dims");
            shape[i] = static_cast<int>(d);
        }
        e.tensor = Tensor::zeros(shape);
        for (auto& v : e.tensor.data) v = get_f64(f.get());
        out.push_back(std::move(e));
    }
    return out;
}

Tensor u64_tensor(const std::vector<std::uint64_t>& words) {
    Tensor t = Tensor::zeros({static_cast<int>(words.size())});
    for (std::size_t i = 0; i < words.size(); ++i) t.data[i] = std::bit_cast<double>(words[i]);
    return t;
}

std::vector<std::uint64_t> u64_from_tensor(const Tensor& t) {
    std::vector<std::uint64_t> w(t.data.size());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::bit_cast<std::uint64_t>(t.data[i]);
    return w;
}

Param& ParamStore::create(const std::string& name, Tensor init) {
    if (find(name)) throw std::invalid_argument("ParamStore: duplicate param name " + name);
    auto p = std::make_unique<Param>();
    p->name = name;
    p->grad = Tensor::zeros(init.shape);
    p->value = std::move(init);
    p->id = static_cast<int>(params_.size());
    params_.push_back(std::move(p));
    return *params_.back();
}

Param* ParamStore::find(const std::string& name) {
    for (auto& p : params_)
        if (p->name == name) return p.get();
    return nullptr;
}

void ParamStore::zero_grads() {
    for (auto& p : params_) p->zero_grad();
}

std::vector<NamedTensor> ParamStore::snapshot_values() const {
    std::vector<NamedTensor> out;
    out.reserve(params_.size());
    for (const auto& p : params_) out.push_back({p->name, p->value});
    return out;
}

void ParamStore::load_values(const std::vector<NamedTensor>& entries) {
    std::unordered_map<std::string, const Tensor*> by_name;
    for (const auto& e : entries) by_name[e.name] = &e.tensor;
    for (auto& p : params_) {
        auto it = by_name.find(p->name);
        if (it == by_name.end())
            throw std::runtime_error("checkpoint: missing param " + p->name);
        if (!(it->second->shape == p->value.shape))
            throw std::runtime_error("checkpoint: shape mismatch for " + p->name + ": file " +
                                     shape_str(it->second->shape) + " vs model " +
                                     shape_str(p->value.shape));
        p->value = *it->second;
    }
}

}  // namespace moonlite
