// Copyright 2026 moonlite authors
// SPDX-License-Identifier: Apache-2.0
//
// The structured-rationale language: ordered attribute maps, their token
// grammar (<think> key : v , v ; key : v </think> <|emb|>), and a strict
// parser whose failure classes drive the format reward.

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "moonlite/vocab.hpp"

namespace moonlite {

struct AttributeMap {
    // Ordered (key, values) pairs; keys unique, value lists nonempty.
    std::vector<std::pair<std::string, std::vector<std::string>>> items;

    bool empty() const { return items.empty(); }
    const std::vector<std::string>* find(const std::string& key) const;
    // Appends or extends; repeated values under one key are deduplicated.
    void put(const std::string& key, const std::string& value);
    // Total number of (key, value) combinations.
    int pair_count() const;

    bool operator==(const AttributeMap&) const = default;

    // Compact text form "Key=V1|V2;Key2=V3"; empty map reads "-".
    std::string to_text() const;
    static AttributeMap from_text(const std::string& text);
};

// Key-wise union, value lists deduplicated order-preserving; key order is
// a's keys first, then b's new keys.
AttributeMap union_maps(const AttributeMap& a, const AttributeMap& b);

struct Schema {
    struct KeyDef {
        std::string name;
        std::vector<std::string> values;
    };
    std::vector<KeyDef> keys;

    static Schema default_schema();
    static Schema load(const std::string& path);
    void save(const std::string& path) const;
    static Schema parse_lines(const std::vector<std::string>& lines);
    std::vector<std::string> to_lines() const;

    int key_index(const std::string& name) const;  // -1 if absent
    int value_index(int key, const std::string& value) const;
    int total_values() const;
    // Flat index of (key, value) over the schema, used for one-hot coding.
    int flat_value_index(int key, int value) const;

    // Tokens a matching Vocab carries after the specials: separators
    // (":" "," ";"), then key names, then value strings (schema order,
    // duplicates across keys collapsed by the Vocab being a set).
    std::vector<std::string> vocab_tail() const;
};

enum class ParseFailure { kNone, kMissingClose, kDuplicateKey, kTruncation, kStrayToken };

const char* parse_failure_name(ParseFailure f);

struct ParseResult {
    bool ok = false;
    ParseFailure failure = ParseFailure::kNone;
    AttributeMap map;     // valid iff ok
    std::string detail;   // human-readable failure context
};

// Token grammar over a (Vocab, Schema) pair.
class AttrCodec {
public:
    AttrCodec(const Vocab& vocab, const Schema& schema);

    // [<think>, k, :, v (, v)* (; pair)*, </think>, <|emb|>]
    // Throws on an empty map or out-of-vocabulary key/value.
    std::vector<int> serialize(const AttributeMap& m) const;

    // Strict grammar check; never throws on malformed input.
    ParseResult parse(const std::vector<int>& tokens) const;

    int colon_id() const { return colon_; }
    int comma_id() const { return comma_; }
    int sep_id() const { return sep_; }
    bool is_key(int id) const;
    bool is_value(int id) const;

private:
    const Vocab& vocab_;
    const Schema& schema_;
    int colon_, comma_, sep_;
    std::vector<bool> key_ids_, value_ids_;
};

}  // namespace moonlite
