#include "fdi/optimizer.hpp"

#include <cmath>

#include "fdi/errors.hpp"

namespace fdi::nn {

void optimizer_step(OptimizerState& state, std::span<Parameter> params) {
    if (!(state.learning_rate > 0.0)) throw ArgumentError("learning rate must be positive");
    if (!(state.l2 >= 0.0)) throw ArgumentError("L2 coefficient must be non-negative");
    if (state.first_moment.empty()) {
        for (const auto& p : params) {
            state.first_moment.emplace_back(p.tensor.size(), 0.0);
            state.second_moment.emplace_back(p.tensor.size(), 0.0);
        }
    }
    if (state.first_moment.size() != params.size())
        throw ArgumentError("optimizer state tracks " + std::to_string(state.first_moment.size()) +
                            " tensors, got " + std::to_string(params.size()));

    std::vector<std::vector<double>> grads;
    grads.reserve(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (state.first_moment[i].size() != params[i].tensor.size())
            throw ArgumentError("moment shape mismatch for " + params[i].name);
        grads.push_back(params[i].tensor.grad());
        for (double g : grads.back())
            if (!std::isfinite(g)) throw NumericError("non-finite gradient in parameter " + params[i].name);
    }

    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(state.beta1, t);
    const double c2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto w = params[i].tensor.mutable_values();
        auto& m = state.first_moment[i];
        auto& v = state.second_moment[i];
        const double l2 = params[i].l2 ? state.l2 : 0.0;
        for (std::size_t j = 0; j < w.size(); ++j) {
            const double g = grads[i][j] + l2 * w[j];
            m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g;
            v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g * g;
            w[j] -= state.learning_rate * (m[j] / c1) / (std::sqrt(v[j] / c2) + state.epsilon);
        }
    }
}

}  // namespace fdi::nn
