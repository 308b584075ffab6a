#pragma once

#include <span>
#include <vector>

#include "turbohoi/parameters.hpp"

namespace turbohoi {

struct SgdSettings {
  double learning_rate = 1e-3;
  double momentum = 0.9;
  double weight_decay = 1e-4;
};

// Momentum buffers, one per parameter in ParameterSet order, zero at start.
struct OptimizerState {
  SgdSettings settings;
  std::vector<std::vector<double>> velocity;
};

OptimizerState make_optimizer_state(const ParameterSet& params, const SgdSettings& settings);

// v <- momentum * v + grad + weight_decay * param; param <- param - lr * v.
void sgd_step(std::span<double> param, std::span<const double> grad,
              std::span<double> velocity, const SgdSettings& settings);

// Applies sgd_step to every parameter using its accumulated gradient (absent
// gradients count as zero). Throws NumericError, leaving everything
// untouched, if any gradient holds NaN/Inf.
void sgd_update(ParameterSet& params, OptimizerState& state);

// Rescales all gradients so their joint L2 norm is at most max_norm
// (max_norm <= 0 disables). Returns the norm before clipping.
double clip_grad_norm(ParameterSet& params, double max_norm);

}  // namespace turbohoi
