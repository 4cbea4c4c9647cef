#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fdi/layers.hpp"

namespace fdi::nn {

/// Adaptive-moment (Adam) state. Moments are allocated on the first step
/// to match the parameter shapes.
struct OptimizerState {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    /// L2 coefficient added to the gradient of every parameter flagged `l2`.
    double l2 = 0.0;
    std::uint64_t step = 0;
    std::vector<std::vector<double>> first_moment;
    std::vector<std::vector<double>> second_moment;
};

/// One Adam update from the gradients currently held by `params`.
/// Throws NumericError naming the tensor when a gradient is non-finite;
/// no parameter is modified in that case.
void optimizer_step(OptimizerState& state, std::span<Parameter> params);

}  // namespace fdi::nn
