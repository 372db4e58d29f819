// Copyright 2026 moonlite authors
// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint container: magic "MOONLITE1", then per entry
//   u32 LE name length | UTF-8 name | u32 rank | u32 dims... | f64 LE payload.
// Round-trips are bit-exact; entry order is preserved.

#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "moonlite/tensor.hpp"

namespace moonlite {

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

void write_checkpoint(const std::string& path, const std::vector<NamedTensor>& entries);
std::vector<NamedTensor> read_checkpoint(const std::string& path);

// Raw-bit u64 payloads (RNG counters, step indices) travel inside f64
// tensors; only the bytes matter.
Tensor u64_tensor(const std::vector<std::uint64_t>& words);
std::vector<std::uint64_t> u64_from_tensor(const Tensor& t);

// Ordered parameter registry. Addresses are stable for the store's
// lifetime; ids index creation order.
class ParamStore {
public:
    Param& create(const std::string& name, Tensor init);
    Param& at(int id) { return *params_[id]; }
    const Param& at(int id) const { return *params_[id]; }
    Param* find(const std::string& name);
    int size() const { return static_cast<int>(params_.size()); }

    void zero_grads();
    std::vector<NamedTensor> snapshot_values() const;
    // Assigns values by name; throws on missing entry or shape mismatch.
    void load_values(const std::vector<NamedTensor>& entries);

private:
    std::vector<std::unique_ptr<Param>> params_;
};

}  // namespace moonlite
