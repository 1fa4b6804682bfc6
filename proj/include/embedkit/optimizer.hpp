#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "embedkit/model.hpp"

namespace embedkit {

// Adam moment accumulators, allocated lazily against the parameter shape.
struct OptimizerState {
    std::vector<double> m;
    std::vector<double> v;
    std::uint64_t step = 0;

    static OptimizerState for_params(const ModelParams& params) {
        OptimizerState state;
        state.m.assign(params.embedding.size(), 0.0);
        state.v.assign(params.embedding.size(), 0.0);
        return state;
    }
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEpsilon = 1e-8;

// Sparse Adam step: only rows touched by the gradient are updated, so
// parameters never visited by training tokens keep their exact values.
inline void optimizer_step(ModelParams& params, const GradBuffer& grads, OptimizerState& state,
                           double lr) {
    if (state.m.size() != params.embedding.size())
        throw std::runtime_error("optimizer state shape mismatch");
    if (grads.dim() != params.dim) throw std::runtime_error("gradient dimension mismatch");
    if (lr <= 0.0) throw std::runtime_error("learning rate must be > 0");

    state.step += 1;
    const double bias1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(state.step));
    const double bias2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(state.step));

    for (std::uint32_t row_id : grads.sorted_touched()) {
        const auto g = grads.row(row_id);
        for (std::uint32_t k = 0; k < params.dim; ++k) {
            if (!std::isfinite(g[k])) throw std::runtime_error("gradient overflow");
        }
        const std::size_t base = static_cast<std::size_t>(row_id) * params.dim;
        for (std::uint32_t k = 0; k < params.dim; ++k) {
            double& m = state.m[base + k];
            double& v = state.v[base + k];
            m = kAdamBeta1 * m + (1.0 - kAdamBeta1) * g[k];
            v = kAdamBeta2 * v + (1.0 - kAdamBeta2) * g[k] * g[k];
            const double m_hat = m / bias1;
            const double v_hat = v / bias2;
            params.embedding[base + k] -= lr * m_hat / (std::sqrt(v_hat) + kAdamEpsilon);
        }
    }
}

}  // namespace embedkit
