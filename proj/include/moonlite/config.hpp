// Copyright 2026 moonlite authors
// SPDX-License-Identifier: Apache-2.0
//
// Flat key=value run configuration with a closed key registry: unknown
// keys are rejected, every key has a documented default, and the
// effective configuration can be echoed verbatim for reproducibility.

#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

namespace moonlite {

class Config {
public:
    Config();  // all keys at defaults

    void load_file(const std::string& path);
    void set(const std::string& key, const std::string& value);  // throws on unknown key
    void set_kv(const std::string& assignment);                  // "key=value"

    const std::string& get(const std::string& key) const;
    double get_double(const std::string& key) const;
    int get_int(const std::string& key) const;
    bool get_bool(const std::string& key) const;

    // Registry order, as "key = value" lines.
    std::vector<std::string> echo_lines() const;
    void write_echo(const std::string& path) const;

    static const std::vector<std::pair<std::string, std::string>>& defaults();

private:
    std::map<std::string, std::string> values_;
    std::vector<std::string> order_;
};

}  // namespace moonlite
