#include "turbohoi/optimizer.hpp"

#include <cmath>
#include <string>

#include "turbohoi/error.hpp"

namespace turbohoi {

OptimizerState make_optimizer_state(const ParameterSet& params, const SgdSettings& settings) {
  OptimizerState state;
  state.settings = settings;
  for (const auto& e : params.entries()) state.velocity.emplace_back(e.tensor.numel(), 0.0);
  return state;
}

void sgd_step(std::span<double> param, std::span<const double> grad,
              std::span<double> velocity, const SgdSettings& s) {
  if (param.size() != velocity.size() || (!grad.empty() && grad.size() != param.size())) {
    throw ShapeError("sgd_step: parameter, gradient and momentum sizes differ");
  }
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad.empty() ? 0.0 : grad[i];
    velocity[i] = s.momentum * velocity[i] + g + s.weight_decay * param[i];
    param[i] -= s.learning_rate * velocity[i];
  }
}

void sgd_update(ParameterSet& params, OptimizerState& state) {
  const auto& entries = params.entries();
  if (state.velocity.size() != entries.size()) {
    throw ShapeError("sgd_update: optimizer state holds " + std::to_string(state.velocity.size()) +
                     " buffers for " + std::to_string(entries.size()) + " parameters");
  }
  for (const auto& e : entries) {
    for (double g : e.tensor.grad()) {
      if (!std::isfinite(g)) throw NumericError("sgd_update: non-finite gradient in " + e.name);
    }
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    ad::Tensor t = entries[i].tensor;
    sgd_step(t.mutable_values(), t.grad(), state.velocity[i], state.settings);
  }
}

double clip_grad_norm(ParameterSet& params, double max_norm) {
  double sq = 0.0;
  for (const auto& e : params.entries()) {
    for (double g : e.tensor.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (const auto& e : params.entries()) {
      ad::Tensor t = e.tensor;
      if (!t.has_grad()) continue;
      for (double& g : t.mutable_grad()) g *= scale;
    }
  }
  return norm;
}

}  // namespace turbohoi
