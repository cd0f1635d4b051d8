#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <vector>

#include "shakg/params.hpp"
#include "shakg/tensor.hpp"

namespace shakg {

// Central-difference check of the analytic gradients for a deterministic
// scalar-loss builder. Returns max over probed entries of
// |analytic - fd| / max(1, |fd|).
//
// probes_per_param = 0 probes every entry. A nonzero budget draws that many
// entries per parameter (seeded, without replacement) — used where an
// exhaustive sweep over a full model is too slow.
inline double grad_check(ParameterStore& params, const std::function<TensorPtr()>& build,
                         double eps = 1e-5, std::size_t probes_per_param = 0,
                         std::uint64_t probe_seed = 0) {
    auto eval = [&]() -> double {
        auto loss = build();
        if (loss->rows != 1 || loss->cols != 1)
            throw std::invalid_argument("grad_check: build must produce a 1x1 loss");
        return loss->data[0];
    };

    params.zero_grad();
    auto loss = build();
    if (loss->rows != 1 || loss->cols != 1)
        throw std::invalid_argument("grad_check: build must produce a 1x1 loss");
    const double base = loss->data[0];
    backward(loss);
    loss.reset();
    if (eval() != base)
        throw std::runtime_error("grad_check: build is not deterministic");

    std::mt19937_64 rng(probe_seed);
    double max_rel = 0.0;
    for (const auto& [name, p] : params.items()) {
        std::vector<std::size_t> entries;
        if (probes_per_param == 0 || probes_per_param >= p->size()) {
            entries.resize(p->size());
            for (std::size_t i = 0; i < p->size(); ++i) entries[i] = i;
        } else {
            std::vector<std::size_t> all(p->size());
            for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
            for (std::size_t i = 0; i < probes_per_param; ++i) {
                std::uniform_int_distribution<std::size_t> dist(i, all.size() - 1);
                std::swap(all[i], all[dist(rng)]);
            }
            entries.assign(all.begin(), all.begin() + probes_per_param);
        }
        for (std::size_t idx : entries) {
            const double orig = p->data[idx];
            p->data[idx] = orig + eps;
            const double lp = eval();
            p->data[idx] = orig - eps;
            const double lm = eval();
            p->data[idx] = orig;
            const double fd = (lp - lm) / (2.0 * eps);
            const double rel = std::abs(p->grad[idx] - fd) / std::max(1.0, std::abs(fd));
            max_rel = std::max(max_rel, rel);
        }
    }
    return max_rel;
}

}  // namespace shakg
