// Copyright 2026 moonlite authors
// SPDX-License-Identifier: Apache-2.0

#include "moonlite/config.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

namespace moonlite {

const std::vector<std::pair<std::string, std::string>>& Config::defaults() {
    static const std::vector<std::pair<std::string, std::string>> kDefaults = {
        {"seed", "7"},
        {"threads", "0"},  // 0 = hardware concurrency

        {"model.d_model", "64"},
        {"model.n_layers", "6"},
        {"model.ffn_hidden", "128"},
        {"model.max_len", "160"},
        {"model.patch_count", "8"},
        {"model.patch_dim", "12"},
        {"model.vision_layers", "4"},
        {"model.vision_width", "32"},

        {"reasoning.enabled", "true"},

        {"fire.enabled", "true"},
        {"fire.injection_pairs", "2:1,3:2"},  // vision map -> decoder layer
        {"fire.early_layer", "1"},
        {"fire.deep_layer", "5"},

        {"fusion.enabled", "true"},
        {"fusion.heads", "4"},
        {"fusion.dim", "256"},

        {"sft.w_img", "1"},
        {"sft.w_txt", "0.3"},
        {"sft.w_mm", "0.1"},
        {"sft.w_ntp", "0.01"},
        {"sft.temperature", "0.07"},
        {"sft.batch_size", "8"},
        {"sft.lr", "0.0015"},
        {"sft.steps", "1500"},
        {"sft.grad_clip", "1"},

        {"rl.G", "8"},
        {"rl.clip", "0.2"},
        {"rl.lmax", "96"},
        {"rl.w1", "0.5"},
        {"rl.w2", "0.3"},
        {"rl.w3", "1"},
        {"rl.w4", "1"},
        {"rl.alpha_q", "0.2"},
        {"rl.tau_q", "4"},
        {"rl.lambda1", "0.1"},
        {"rl.lambda2", "1"},
        {"rl.lr", "0.0002"},
        {"rl.steps", "200"},
        {"rl.batch_size", "2"},
        {"rl.temperature", "1"},
        {"rl.scorer", "f1"},  // f1 | external:<path>

        {"eval.pool", "64"},
    };
    return kDefaults;
}

Config::Config() {
    for (const auto& [k, v] : defaults()) {
        values_[k] = v;
        order_.push_back(k);
    }
}

void Config::set(const std::string& key, const std::string& value) {
    auto it = values_.find(key);
    if (it == values_.end()) throw std::invalid_argument("config: unknown key '" + key + "'");
    it->second = value;
}

void Config::set_kv(const std::string& assignment) {
    auto eq = assignment.find('=');
    if (eq == std::string::npos)
        throw std::invalid_argument("config: expected key=value, got '" + assignment + "'");
    auto trim = [](std::string s) {
        std::size_t a = s.find_first_not_of(" \t");
        std::size_t b = s.find_last_not_of(" \t");
        return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void Config::load_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("config: cannot open " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        std::size_t a = line.find_first_not_of(" \t");
        if (a == std::string::npos) continue;
        try {
            set_kv(line);
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument(std::string(e.what()) + " at " + path + ":" +
                                        std::to_string(lineno));
        }
    }
}

const std::string& Config::get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw std::invalid_argument("config: unknown key '" + key + "'");
    return it->second;
}

double Config::get_double(const std::string& key) const {
    const std::string& v = get(key);
    std::size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos != v.size())
        throw std::invalid_argument("config: key '" + key + "' is not a number: '" + v + "'");
    return d;
}

int Config::get_int(const std::string& key) const {
    const std::string& v = get(key);
    std::size_t pos = 0;
    int i = std::stoi(v, &pos);
    if (pos != v.size())
        throw std::invalid_argument("config: key '" + key + "' is not an integer: '" + v + "'");
    return i;
}

bool Config::get_bool(const std::string& key) const {
    const std::string& v = get(key);
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw std::invalid_argument("config: key '" + key + "' is not a boolean: '" + v + "'");
}

std::vector<std::string> Config::echo_lines() const {
    std::vector<std::string> out;
    out.reserve(order_.size());
    for (const auto& k : order_) out.push_back(k + " = " + values_.at(k));
    return out;
}

void Config::write_echo(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("config: cannot write " + path);
    for (const auto& l : echo_lines()) f << l << "\n";
}

}  // namespace moonlite
