#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "shakg/tensor.hpp"

namespace shakg {

// Ordered, named collection of trainable tensors. Iteration order is the
// construction order, which makes init and checkpoints deterministic.
class ParameterStore {
public:
    explicit ParameterStore(std::uint64_t seed) : rng_seed_(seed), rng_(seed) {}

    // Weight init: uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)); fan_in defaults
    // to the column count.
    TensorPtr add(const std::string& name, std::size_t rows, std::size_t cols,
                  std::size_t fan_in = 0) {
        if (fan_in == 0) fan_in = cols;
        auto t = tensor(rows, cols);
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (auto& v : t->data) v = dist(rng_);
        return insert(name, std::move(t));
    }

    TensorPtr add_zeros(const std::string& name, std::size_t rows, std::size_t cols) {
        return insert(name, tensor(rows, cols));
    }

    TensorPtr get(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end())
            throw std::out_of_range("ParameterStore: no parameter named '" + name + "'");
        return items_[it->second].second;
    }

    bool has(const std::string& name) const { return index_.count(name) != 0; }

    void zero_grad() {
        for (auto& [name, t] : items_) t->zero_grad();
    }

    const std::vector<std::pair<std::string, TensorPtr>>& items() const { return items_; }
    std::size_t size() const { return items_.size(); }
    std::uint64_t rng_seed() const { return rng_seed_; }

    // name -> gradient snapshot for the current accumulated grads.
    std::unordered_map<std::string, std::vector<double>> gradients() const {
        std::unordered_map<std::string, std::vector<double>> out;
        for (const auto& [name, t] : items_) out.emplace(name, t->grad);
        return out;
    }

private:
    TensorPtr insert(const std::string& name, TensorPtr t) {
        if (index_.count(name))
            throw std::invalid_argument("ParameterStore: duplicate parameter '" + name + "'");
        t->make_param();
        index_.emplace(name, items_.size());
        items_.emplace_back(name, t);
        return items_.back().second;
    }

    std::vector<std::pair<std::string, TensorPtr>> items_;
    std::unordered_map<std::string, std::size_t> index_;
    std::uint64_t rng_seed_;
    std::mt19937_64 rng_;
};

struct AdamState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    long t = 0;
};

// Standard Adam with bias correction, applied in place from the grads held in
// the store's tensors. Caller serializes updates (exclusive access).
inline void adam_step(ParameterStore& params, AdamState& state, double lr = 0.003,
                      double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
    const auto& items = params.items();
    if (state.m.empty()) {
        state.m.resize(items.size());
        state.v.resize(items.size());
        for (std::size_t i = 0; i < items.size(); ++i) {
            state.m[i].assign(items[i].second->size(), 0.0);
            state.v[i].assign(items[i].second->size(), 0.0);
        }
    }
    if (state.m.size() != items.size())
        throw std::invalid_argument("adam_step: state for " + std::to_string(state.m.size()) +
                                    " params, store has " + std::to_string(items.size()));
    state.t += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < items.size(); ++i) {
        Tensor& p = *items[i].second;
        if (state.m[i].size() != p.size())
            throw std::invalid_argument("adam_step: shape mismatch for '" + items[i].first + "'");
        for (std::size_t j = 0; j < p.size(); ++j) {
            const double g = p.grad[j];
            state.m[i][j] = beta1 * state.m[i][j] + (1.0 - beta1) * g;
            state.v[i][j] = beta2 * state.v[i][j] + (1.0 - beta2) * g * g;
            const double mhat = state.m[i][j] / bc1;
            const double vhat = state.v[i][j] / bc2;
            p.data[j] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

}  // namespace shakg
