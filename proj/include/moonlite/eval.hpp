// Copyright 2026 moonlite authors
// SPDX-License-Identifier: Apache-2.0
//
// Zero-shot evaluation: five retrieval directions over a shared candidate
// pool, embedding-based classification against text-embedded category
// labels, and per-key attribute prediction. Metrics are plain brute-force
// computations with index tie-breaking so reports are bit-stable.

#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "moonlite/model.hpp"

namespace moonlite {

// One L2-normalized embedding per record, deterministic greedy decoding.
std::vector<Tensor> embed_corpus(const MoonModel& model, const std::vector<const ProductRecord*>& records,
                                 Modality m, int threads);

// Fraction of queries whose gold candidate ranks within the top k by
// cosine similarity; ties broken by lower candidate index.
std::map<int, double> recall_at_k(const std::vector<Tensor>& queries,
                                  const std::vector<Tensor>& candidates,
                                  const std::vector<int>& gold, const std::vector<int>& ks);

// Argmax-cosine prediction per item, ties to the lower label index.
std::vector<int> nearest_label(const std::vector<Tensor>& items, const std::vector<Tensor>& labels);

struct ClsMetrics {
    double accuracy = 0.0;
    double precision = 0.0;  // macro
    double recall = 0.0;     // macro
    double f1 = 0.0;         // macro
};

// Macro averages over all n_classes; classes without predictions (or
// without gold instances) contribute zero.
ClsMetrics classification_metrics(const std::vector<int>& pred, const std::vector<int>& gold,
                                  int n_classes);

struct EvalOptions {
    std::set<std::string> tasks = {"retrieval", "classify", "attr"};
    int pool = 64;
    int threads = 0;
    std::vector<int> ks = {1, 5, 10};

    static std::set<std::string> parse_tasks(const std::string& csv);
};

struct EvalReport {
    std::vector<std::pair<std::string, std::string>> lines;  // fixed order
    double wall_seconds = 0.0;

    void add(const std::string& key, double value);
    void add_count(const std::string& key, long value);
    double get(const std::string& key) const;
    bool has(const std::string& key) const;
    void write(const std::string& path) const;
    std::string to_string() const;
};

EvalReport run_eval(const MoonModel& model, const Dataset& data, const EvalOptions& opts);

}  // namespace moonlite
