// Copyright 2026 moonlite authors
// SPDX-License-Identifier: Apache-2.0

#include "moonlite/adam.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_map>

namespace moonlite {

Adam::Adam(ParamStore& store, double lr, double beta1, double beta2, double eps)
    : store_(store), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (int i = 0; i < store.size(); ++i) {
        m_.push_back(Tensor::zeros(store.at(i).value.shape));
        v_.push_back(Tensor::zeros(store.at(i).value.shape));
    }
}

void Adam::clip_grad_norm(double max_norm) {
    if (max_norm <= 0.0) return;
    double total = 0.0;
    for (int i = 0; i < store_.size(); ++i)
        for (double g : store_.at(i).grad.data) total += g * g;
    total = std::sqrt(total);
    if (total <= max_norm) return;
    double s = max_norm / total;
    for (int i = 0; i < store_.size(); ++i)
        for (double& g : store_.at(i).grad.data) g *= s;
}

void Adam::step() {
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, t_);
    double bc2 = 1.0 - std::pow(beta2_, t_);
    for (int i = 0; i < store_.size(); ++i) {
        Param& p = store_.at(i);
        Tensor& m = m_[i];
        Tensor& v = v_[i];
        for (std::size_t j = 0; j < p.value.data.size(); ++j) {
            double g = p.grad.data[j];
            m.data[j] = beta1_ * m.data[j] + (1.0 - beta1_) * g;
            v.data[j] = beta2_ * v.data[j] + (1.0 - beta2_) * g * g;
            double mhat = m.data[j] / bc1;
            double vhat = v.data[j] / bc2;
            p.value.data[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

std::vector<NamedTensor> Adam::state_entries() const {
    std::vector<NamedTensor> out;
    for (int i = 0; i < store_.size(); ++i) {
        out.push_back({"opt.m." + store_.at(i).name, m_[i]});
        out.push_back({"opt.v." + store_.at(i).name, v_[i]});
    }
    out.push_back({"opt.step", Tensor::scalar(static_cast<double>(t_))});
    return out;
}

void Adam::load_state(const std::vector<NamedTensor>& entries) {
    std::unordered_map<std::string, const Tensor*> by_name;
    for (const auto& e : entries) by_name[e.name] = &e.tensor;
    for (int i = 0; i < store_.size(); ++i) {
        auto mi = by_name.find("opt.m." + store_.at(i).name);
        auto vi = by_name.find("opt.v." + store_.at(i).name);
        if (mi == by_name.end() || vi == by_name.end())
            throw std::runtime_error("Adam: checkpoint lacks optimizer state for " +
                                     store_.at(i).name);
        m_[i] = *mi->second;
        v_[i] = *vi->second;
    }
    auto st = by_name.find("opt.step");
    if (st == by_name.end()) throw std::runtime_error("Adam: checkpoint lacks opt.step");
    t_ = static_cast<int>(st->second->data[0]);
}

}  // namespace moonlite
