// Copyright 2026 moonlite authors
// SPDX-License-Identifier: Apache-2.0

#include "moonlite/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "moonlite/parallel.hpp"

namespace moonlite {

std::vector<Tensor> embed_corpus(const MoonModel& model,
                                 const std::vector<const ProductRecord*>& records, Modality m,
                                 int threads) {
    std::vector<Tensor> out(records.size());
    parallel_for(static_cast<int>(records.size()), threads,
                 [&](int i) { out[i] = model.embed_record(*records[i], m); });
    return out;
}

std::map<int, double> recall_at_k(const std::vector<Tensor>& queries,
                                  const std::vector<Tensor>& candidates,
                                  const std::vector<int>& gold, const std::vector<int>& ks) {
    if (queries.size() != gold.size())
        throw std::invalid_argument("recall_at_k: one gold index per query required");
    for (int k : ks)
        if (k <= 0 || k > static_cast<int>(candidates.size()))
            throw std::invalid_argument("recall_at_k: k=" + std::to_string(k) +
                                        " exceeds candidate count " +
                                        std::to_string(candidates.size()));
    for (int g : gold)
        if (g < 0 || g >= static_cast<int>(candidates.size()))
            throw std::invalid_argument("recall_at_k: gold index out of range");

    std::map<int, int> hits;
    for (int k : ks) hits[k] = 0;
    std::vector<int> order(candidates.size());
    std::vector<double> sims(candidates.size());
    for (std::size_t q = 0; q < queries.size(); ++q) {
        for (std::size_t c = 0; c < candidates.size(); ++c)
            sims[c] = cosine_sim_value(queries[q], candidates[c]);
        for (std::size_t c = 0; c < order.size(); ++c) order[c] = static_cast<int>(c);
        std::sort(order.begin(), order.end(), [&sims](int a, int b) {
            if (sims[a] != sims[b]) return sims[a] > sims[b];
            return a < b;
        });
        int pos = static_cast<int>(std::find(order.begin(), order.end(), gold[q]) - order.begin());
        for (int k : ks)
            if (pos < k) ++hits[k];
    }
    std::map<int, double> out;
    for (int k : ks) out[k] = queries.empty() ? 0.0 : static_cast<double>(hits[k]) / queries.size();
    return out;
}

std::vector<int> nearest_label(const std::vector<Tensor>& items, const std::vector<Tensor>& labels) {
    if (labels.size() < 2) throw std::invalid_argument("nearest_label: need at least 2 labels");
    std::vector<int> pred(items.size(), 0);
    for (std::size_t i = 0; i < items.size(); ++i) {
        int best = 0;
        double best_sim = cosine_sim_value(items[i], labels[0]);
        for (std::size_t l = 1; l < labels.size(); ++l) {
            double s = cosine_sim_value(items[i], labels[l]);
            if (s > best_sim) {
                best_sim = s;
                best = static_cast<int>(l);
            }
        }
        pred[i] = best;
    }
    return pred;
}

ClsMetrics classification_metrics(const std::vector<int>& pred, const std::vector<int>& gold,
                                  int n_classes) {
    if (pred.size() != gold.size())
        throw std::invalid_argument("classification_metrics: size mismatch");
    std::vector<long> tp(n_classes, 0), fp(n_classes, 0), fn(n_classes, 0);
    long correct = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] == gold[i]) {
            ++correct;
            ++tp[gold[i]];
        } else {
            ++fp[pred[i]];
            ++fn[gold[i]];
        }
    }
    ClsMetrics m;
    m.accuracy = pred.empty() ? 0.0 : static_cast<double>(correct) / pred.size();
    for (int c = 0; c < n_classes; ++c) {
        double p = (tp[c] + fp[c]) == 0 ? 0.0 : static_cast<double>(tp[c]) / (tp[c] + fp[c]);
        double r = (tp[c] + fn[c]) == 0 ? 0.0 : static_cast<double>(tp[c]) / (tp[c] + fn[c]);
        double f = (p + r) == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
        m.precision += p;
        m.recall += r;
        m.f1 += f;
    }
    if (n_classes > 0) {
        m.precision /= n_classes;
        m.recall /= n_classes;
        m.f1 /= n_classes;
    }
    return m;
}

std::set<std::string> EvalOptions::parse_tasks(const std::string& csv) {
    std::set<std::string> tasks;
    std::istringstream is(csv);
    std::string item;
    while (std::getline(is, item, ',')) {
        if (item.empty()) continue;
        if (item != "retrieval" && item != "classify" && item != "attr")
            throw std::invalid_argument("eval: unknown task '" + item +
                                        "' (want retrieval, classify, attr)");
        tasks.insert(item);
    }
    if (tasks.empty()) throw std::invalid_argument("eval: no tasks selected");
    return tasks;
}

void EvalReport::add(const std::string& key, double value) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", value);
    lines.emplace_back(key, buf);
}

void EvalReport::add_count(const std::string& key, long value) {
    lines.emplace_back(key, std::to_string(value));
}

double EvalReport::get(const std::string& key) const {
    for (const auto& [k, v] : lines)
        if (k == key) return std::stod(v);
    throw std::invalid_argument("EvalReport: no key '" + key + "'");
}

bool EvalReport::has(const std::string& key) const {
    for (const auto& [k, v] : lines)
        if (k == key) return true;
    return false;
}

std::string EvalReport::to_string() const {
    std::string out;
    for (const auto& [k, v] : lines) out += k + "=" + v + "\n";
    return out;
}

void EvalReport::write(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("EvalReport: cannot write " + path);
    f << to_string();
}

EvalReport run_eval(const MoonModel& model, const Dataset& data, const EvalOptions& opts) {
    auto t0 = std::chrono::steady_clock::now();
    EvalReport rep;

    // Candidate pool: positives and negatives of the test triplets in
    // encounter order, deduplicated, capped by opts.pool; queries are the
    // triplets consumed while filling it.
    std::vector<int> cand_records;           // universe indices
    std::map<int, int> cand_pos;             // universe index -> pool index
    std::vector<const Triplet*> query_trips;
    std::vector<int> gold;
    for (const Triplet& t : data.triplets) {
        if (static_cast<int>(cand_records.size()) >= opts.pool) break;
        for (int idx : {t.positive, t.negative}) {
            if (!cand_pos.count(idx) && static_cast<int>(cand_records.size()) < opts.pool) {
                cand_pos[idx] = static_cast<int>(cand_records.size());
                cand_records.push_back(idx);
            }
        }
        if (!cand_pos.count(t.positive)) continue;  // pool filled before its gold fit
        query_trips.push_back(&t);
        gold.push_back(cand_pos[t.positive]);
    }
    if (query_trips.empty()) throw std::runtime_error("eval: no usable queries (pool too small?)");

    std::vector<const ProductRecord*> cands;
    for (int idx : cand_records) cands.push_back(&data.universe[idx]);
    std::vector<const ProductRecord*> queries;
    for (const Triplet* t : query_trips) queries.push_back(&t->query);

    if (opts.tasks.count("retrieval")) {
        auto cand_mm = embed_corpus(model, cands, Modality::kMultimodal, opts.threads);
        auto cand_t = embed_corpus(model, cands, Modality::kText, opts.threads);
        auto cand_i = embed_corpus(model, cands, Modality::kImage, opts.threads);
        auto q_i = embed_corpus(model, queries, Modality::kImage, opts.threads);
        auto q_t = embed_corpus(model, queries, Modality::kText, opts.threads);
        auto q_mm = embed_corpus(model, queries, Modality::kMultimodal, opts.threads);

        struct Direction {
            const char* name;
            const std::vector<Tensor>* q;
            const std::vector<Tensor>* c;
        };
        const Direction dirs[] = {{"i2mm", &q_i, &cand_mm},
                                  {"t2mm", &q_t, &cand_mm},
                                  {"mm2mm", &q_mm, &cand_mm},
                                  {"i2t", &q_i, &cand_t},
                                  {"t2i", &q_t, &cand_i}};
        for (const auto& d : dirs) {
            auto rk = recall_at_k(*d.q, *d.c, gold, opts.ks);
            for (int k : opts.ks)
                rep.add("retrieval." + std::string(d.name) + ".r" + std::to_string(k), rk[k]);
        }
    }

    // Classification corpus: the pooled candidate records, multimodal view.
    if (opts.tasks.count("classify") || opts.tasks.count("attr")) {
        auto prod_mm = embed_corpus(model, cands, Modality::kMultimodal, opts.threads);

        auto text_only_record = [&data](const std::string& value) {
            ProductRecord r;
            r.id = "label:" + value;
            r.title_tokens = {data.vocab.id(value)};
            return r;
        };

        if (opts.tasks.count("classify")) {
            const auto& cat_values = data.schema.keys[0].values;
            std::vector<ProductRecord> label_recs;
            label_recs.reserve(cat_values.size());
            for (const auto& v : cat_values) label_recs.push_back(text_only_record(v));
            std::vector<const ProductRecord*> label_ptrs;
            for (const auto& r : label_recs) label_ptrs.push_back(&r);
            auto label_emb = embed_corpus(model, label_ptrs, Modality::kText, opts.threads);

            std::vector<int> gold_cat;
            for (const auto* r : cands) gold_cat.push_back(r->category);
            auto pred = nearest_label(prod_mm, label_emb);
            ClsMetrics m = classification_metrics(pred, gold_cat, static_cast<int>(cat_values.size()));
            rep.add("classification.accuracy", m.accuracy);
            rep.add("classification.precision", m.precision);
            rep.add("classification.recall", m.recall);
            rep.add("classification.f1", m.f1);
        }

        if (opts.tasks.count("attr")) {
            double sum_acc = 0, sum_p = 0, sum_r = 0, sum_f1 = 0;
            int n_keys = 0;
            for (const auto& key : data.schema.keys) {
                std::vector<ProductRecord> value_recs;
                for (const auto& v : key.values) value_recs.push_back(text_only_record(v));
                std::vector<const ProductRecord*> value_ptrs;
                for (const auto& r : value_recs) value_ptrs.push_back(&r);
                auto value_emb = embed_corpus(model, value_ptrs, Modality::kText, opts.threads);

                std::vector<Tensor> items;
                std::vector<int> gold_val;
                for (std::size_t i = 0; i < cands.size(); ++i) {
                    const auto* vs = cands[i]->attrs_mm.find(key.name);
                    if (!vs || vs->empty()) continue;
                    int vi = data.schema.value_index(data.schema.key_index(key.name), (*vs)[0]);
                    if (vi < 0) continue;
                    items.push_back(prod_mm[i]);
                    gold_val.push_back(vi);
                }
                if (items.empty()) continue;
                auto pred = nearest_label(items, value_emb);
                ClsMetrics m =
                    classification_metrics(pred, gold_val, static_cast<int>(key.values.size()));
                rep.add("attribute." + key.name + ".accuracy", m.accuracy);
                sum_acc += m.accuracy;
                sum_p += m.precision;
                sum_r += m.recall;
                sum_f1 += m.f1;
                ++n_keys;
            }
            if (n_keys == 0) throw std::runtime_error("eval: no attribute key usable");
            rep.add("attribute.avg.accuracy", sum_acc / n_keys);
            rep.add("attribute.avg.precision", sum_p / n_keys);
            rep.add("attribute.avg.recall", sum_r / n_keys);
            rep.add("attribute.avg.f1", sum_f1 / n_keys);
        }
    }

    rep.add_count("counts.queries", static_cast<long>(query_trips.size()));
    rep.add_count("counts.candidates", static_cast<long>(cands.size()));
    rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

}  // namespace moonlite
