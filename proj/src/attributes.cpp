// Copyright 2026 moonlite authors
// SPDX-License-Identifier: Apache-2.0

#include "moonlite/attributes.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace moonlite {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(s);
    while (std::getline(is, cur, sep)) out.push_back(cur);
    return out;
}

}  // namespace

const std::vector<std::string>* AttributeMap::find(const std::string& key) const {
    for (const auto& [k, vs] : items)
        if (k == key) return &vs;
    return nullptr;
}

void AttributeMap::put(const std::string& key, const std::string& value) {
    for (auto& [k, vs] : items) {
        if (k == key) {
            if (std::find(vs.begin(), vs.end(), value) == vs.end()) vs.push_back(value);
            return;
        }
    }
    items.push_back({key, {value}});
}

int AttributeMap::pair_count() const {
    int n = 0;
    for (const auto& [k, vs] : items) n += static_cast<int>(vs.size());
    return n;
}

std::string AttributeMap::to_text() const {
    if (items.empty()) return "-";
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out += ";";
        out += items[i].first + "=";
        for (std::size_t j = 0; j < items[i].second.size(); ++j) {
            if (j) out += "|";
            out += items[i].second[j];
        }
    }
    return out;
}

AttributeMap AttributeMap::from_text(const std::string& text) {
    AttributeMap m;
    std::string t = trim(text);
    if (t.empty() || t == "-") return m;
    for (const auto& pair_text : split(t, ';')) {
        auto eq = pair_text.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("AttributeMap: bad pair '" + pair_text + "'");
        std::string key = trim(pair_text.substr(0, eq));
        for (const auto& v : split(pair_text.substr(eq + 1), '|')) m.put(key, trim(v));
    }
    return m;
}

AttributeMap union_maps(const AttributeMap& a, const AttributeMap& b) {
    AttributeMap out;
    for (const auto& [k, vs] : a.items)
        for (const auto& v : vs) out.put(k, v);
    for (const auto& [k, vs] : b.items)
        for (const auto& v : vs) out.put(k, v);
    return out;
}

Schema Schema::default_schema() {
    Schema s;
    s.keys = {
        {"Category",
         {"Sweater", "Jacket", "Dress", "Skirt", "Hoodie", "Coat", "Shirt", "Jeans", "Blazer",
          "Cardigan", "Tunic", "Vest"}},
        {"Color",
         {"Red", "Blue", "Green", "Black", "White", "Beige", "Brown", "Navy", "Pink", "Gray",
          "Yellow", "Purple"}},
        {"Material",
         {"Wool", "Cotton", "Silk", "Linen", "Denim", "Leather", "Cashmere", "Polyester", "Velvet",
          "Tweed"}},
        {"Style",
         {"Casual", "Formal", "Vintage", "Sporty", "Bohemian", "Minimalist", "Preppy", "Grunge",
          "Chic", "Classic"}},
        {"DesignElements",
         {"LaceCollar", "Bowknot", "Embroidery", "Sequins", "Pleats", "Ruffles", "Fringe",
          "Buttons", "Zipper", "Pockets", "Stripes", "FloralPrint"}},
    };
    return s;
}

Schema Schema::parse_lines(const std::vector<std::string>& lines) {
    Schema s;
    for (const auto& raw : lines) {
        std::string line = trim(raw);
        if (line.empty() || line[0] == '#') continue;
        auto colon = line.find(':');
        if (colon == std::string::npos)
            throw std::invalid_argument("Schema: missing ':' in line '" + line + "'");
        KeyDef def;
        def.name = trim(line.substr(0, colon));
        for (const auto& v : split(line.substr(colon + 1), ',')) {
            std::string val = trim(v);
            if (!val.empty()) def.values.push_back(val);
        }
        if (def.name.empty() || def.values.empty())
            throw std::invalid_argument("Schema: empty key or value list in '" + line + "'");
        s.keys.push_back(std::move(def));
    }
    if (s.keys.empty()) throw std::invalid_argument("Schema: no keys defined");
    return s;
}

std::vector<std::string> Schema::to_lines() const {
    std::vector<std::string> lines;
    for (const auto& k : keys) {
        std::string line = k.name + ": ";
        for (std::size_t i = 0; i < k.values.size(); ++i) {
            if (i) line += ", ";
            line += k.values[i];
        }
        lines.push_back(line);
    }
    return lines;
}

Schema Schema::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("Schema: cannot open " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(f, line)) lines.push_back(line);
    return parse_lines(lines);
}

void Schema::save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("Schema: cannot write " + path);
    for (const auto& l : to_lines()) f << l << "\n";
}

int Schema::key_index(const std::string& name) const {
    for (std::size_t i = 0; i < keys.size(); ++i)
        if (keys[i].name == name) return static_cast<int>(i);
    return -1;
}

int Schema::value_index(int key, const std::string& value) const {
    const auto& vs = keys[key].values;
    for (std::size_t i = 0; i < vs.size(); ++i)
        if (vs[i] == value) return static_cast<int>(i);
    return -1;
}

int Schema::total_values() const {
    int n = 0;
    for (const auto& k : keys) n += static_cast<int>(k.values.size());
    return n;
}

int Schema::flat_value_index(int key, int value) const {
    int off = 0;
    for (int i = 0; i < key; ++i) off += static_cast<int>(keys[i].values.size());
    return off + value;
}

std::vector<std::string> Schema::vocab_tail() const {
    std::vector<std::string> tail = {":", ",", ";"};
    auto push_unique = [&tail](const std::string& t) {
        if (std::find(tail.begin(), tail.end(), t) == tail.end()) tail.push_back(t);
    };
    for (const auto& k : keys) push_unique(k.name);
    for (const auto& k : keys)
        for (const auto& v : k.values) push_unique(v);
    return tail;
}

const char* parse_failure_name(ParseFailure f) {
    switch (f) {
        case ParseFailure::kNone: return "none";
        case ParseFailure::kMissingClose: return "missing-close";
        case ParseFailure::kDuplicateKey: return "duplicate-key";
        case ParseFailure::kTruncation: return "truncation";
        case ParseFailure::kStrayToken: return "stray-token";
    }
    return "unknown";
}

AttrCodec::AttrCodec(const Vocab& vocab, const Schema& schema) : vocab_(vocab), schema_(schema) {
    colon_ = vocab.id(":");
    comma_ = vocab.id(",");
    sep_ = vocab.id(";");
    key_ids_.assign(vocab.size(), false);
    value_ids_.assign(vocab.size(), false);
    for (const auto& k : schema.keys) {
        key_ids_[vocab.id(k.name)] = true;
        for (const auto& v : k.values) value_ids_[vocab.id(v)] = true;
    }
    for (int i = 0; i < vocab.size(); ++i)
        if (key_ids_[i] && value_ids_[i])
            throw std::invalid_argument("AttrCodec: token '" + vocab.token(i) +
                                        "' is both a key and a value; roles must be disjoint");
}

bool AttrCodec::is_key(int id) const { return id >= 0 && id < static_cast<int>(key_ids_.size()) && key_ids_[id]; }
bool AttrCodec::is_value(int id) const {
    return id >= 0 && id < static_cast<int>(value_ids_.size()) && value_ids_[id];
}

std::vector<int> AttrCodec::serialize(const AttributeMap& m) const {
    if (m.empty()) throw std::invalid_argument("serialize: empty attribute map");
    std::vector<int> out;
    out.push_back(kThinkOpen);
    for (std::size_t i = 0; i < m.items.size(); ++i) {
        const auto& [key, values] = m.items[i];
        if (i) out.push_back(sep_);
        if (schema_.key_index(key) < 0)
            throw std::invalid_argument("serialize: unknown attribute key '" + key + "'");
        out.push_back(vocab_.id(key));
        out.push_back(colon_);
        if (values.empty()) throw std::invalid_argument("serialize: empty value list for '" + key + "'");
        for (std::size_t j = 0; j < values.size(); ++j) {
            if (j) out.push_back(comma_);
            if (!vocab_.contains(values[j]) || !is_value(vocab_.id(values[j])))
                throw std::invalid_argument("serialize: unknown attribute value '" + values[j] + "'");
            out.push_back(vocab_.id(values[j]));
        }
    }
    out.push_back(kThinkClose);
    out.push_back(kEmb);
    return out;
}

ParseResult AttrCodec::parse(const std::vector<int>& tokens) const {
    ParseResult res;
    auto fail = [&res](ParseFailure f, const std::string& detail) {
        res.ok = false;
        res.failure = f;
        res.detail = detail;
        res.map = AttributeMap{};
        return res;
    };
    std::size_t n = tokens.size();
    std::size_t i = 0;
    if (n == 0) return fail(ParseFailure::kTruncation, "empty sequence");
    if (tokens[0] != kThinkOpen) return fail(ParseFailure::kStrayToken, "sequence must start with <think>");
    i = 1;
    AttributeMap map;
    for (;;) {  // one attribute pair per iteration
        if (i >= n) return fail(ParseFailure::kTruncation, "ended while expecting attribute key");
        if (tokens[i] == kEmb) return fail(ParseFailure::kMissingClose, "<|emb|> before </think>");
        if (!is_key(tokens[i]))
            return fail(ParseFailure::kStrayToken,
                        "expected attribute key, got '" + vocab_.token(tokens[i]) + "'");
        std::string key = vocab_.token(tokens[i]);
        if (map.find(key)) return fail(ParseFailure::kDuplicateKey, "duplicate key '" + key + "'");
        ++i;
        if (i >= n) return fail(ParseFailure::kTruncation, "ended while expecting ':'");
        if (tokens[i] == kEmb) return fail(ParseFailure::kMissingClose, "<|emb|> before </think>");
        if (tokens[i] != colon_)
            return fail(ParseFailure::kStrayToken, "expected ':' after key '" + key + "'");
        ++i;
        bool closed = false;
        for (;;) {  // one value plus its trailing separator per iteration
            if (i >= n) return fail(ParseFailure::kTruncation, "ended while expecting value");
            if (tokens[i] == kEmb) return fail(ParseFailure::kMissingClose, "<|emb|> before </think>");
            if (!is_value(tokens[i]))
                return fail(ParseFailure::kStrayToken,
                            "expected attribute value, got '" + vocab_.token(tokens[i]) + "'");
            map.put(key, vocab_.token(tokens[i]));
            ++i;
            if (i >= n) return fail(ParseFailure::kTruncation, "ended inside attribute pair");
            if (tokens[i] == comma_) {
                ++i;
                continue;
            }
            if (tokens[i] == sep_) {
                ++i;
                break;
            }
            if (tokens[i] == kThinkClose) {
                ++i;
                closed = true;
                break;
            }
            if (tokens[i] == kEmb) return fail(ParseFailure::kMissingClose, "<|emb|> before </think>");
            return fail(ParseFailure::kStrayToken,
                        "expected ',', ';' or </think>, got '" + vocab_.token(tokens[i]) + "'");
        }
        if (closed) break;
    }
    if (i >= n) return fail(ParseFailure::kTruncation, "ended while expecting <|emb|>");
    if (tokens[i] != kEmb)
        return fail(ParseFailure::kStrayToken,
                    "expected <|emb|> after </think>, got '" + vocab_.token(tokens[i]) + "'");
    ++i;
    if (i != n) return fail(ParseFailure::kStrayToken, "tokens after <|emb|>");
    res.ok = true;
    res.failure = ParseFailure::kNone;
    res.map = std::move(map);
    return res;
}

}  // namespace moonlite
