#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "turbohoi/tensor.hpp"

namespace turbohoi::ad {

// Builds a scalar loss from the given leaves. Called repeatedly with the
// leaves perturbed in place.
using GraphBuilder = std::function<Tensor(std::span<const Tensor>)>;

struct GradCheckOptions {
  double eps = 1e-5;
  // 0 probes every entry; otherwise a seeded sample of this many per input.
  std::size_t max_entries_per_input = 0;
  std::uint64_t sample_seed = 0;
  // Lower bound on the relative error's denominator.
  double denominator_floor = 1e-8;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_entry = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t entries_checked = 0;
  // Probes next to a relu, smooth-L1 or argmax switch point, estimated
  // one-sided.
  std::size_t one_sided = 0;
};

// Compares reverse-mode gradients against central differences. The error of
// one entry is |analytic - numeric| / max(floor, |analytic| + |numeric|).
// Probes whose perturbation would cross a relu or smooth-L1 switch point, or
// change the winning cell of a soft-argmax peak, use a one-sided second-order
// stencil instead.
// Throws NumericError naming the entry if a probe evaluates non-finite.
GradCheckResult check_gradients(const GraphBuilder& build, std::vector<Tensor> inputs,
                                const GradCheckOptions& options);

double check_gradients(const GraphBuilder& build, std::vector<Tensor> inputs, double eps);

}  // namespace turbohoi::ad
