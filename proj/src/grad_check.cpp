#include "turbohoi/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "turbohoi/error.hpp"
#include "turbohoi/rng.hpp"

namespace turbohoi::ad {

namespace {

struct Probe {
  double value = 0.0;
  // Which side of each relu and smooth-L1 switch point every input sits on.
  std::vector<std::size_t> branches;
};

std::vector<std::size_t> branch_pattern(const Tensor& loss) {
  std::vector<std::size_t> out;
  for (const Node* n : Graph::collect(loss).order) {
    if (n->kind == Primitive::kRelu) {
      for (double v : n->inputs[0]->values) out.push_back(v > 0.0);
    } else if (n->kind == Primitive::kSmoothL1) {
      for (double v : n->inputs[0]->values) out.push_back(v < -1.0 ? 0 : (v < 1.0 ? 1 : 2));
    } else if (n->kind == Primitive::kSoftArgmax2d) {
      out.insert(out.end(), n->saved_index.begin(), n->saved_index.end());
    }
  }
  return out;
}

Probe evaluate(const GraphBuilder& build, std::span<const Tensor> inputs, std::size_t input,
               std::size_t entry) {
  const Tensor loss = build(inputs);
  const double v = loss.item();
  if (!std::isfinite(v)) {
    throw NumericError("check_gradients: non-finite loss while probing input " +
                       std::to_string(input) + " entry " + std::to_string(entry));
  }
  return {v, branch_pattern(loss)};
}

struct Estimate {
  double value = 0.0;
  bool one_sided = false;
};

// Central difference when [x - eps, x + eps] lies on one smooth piece,
// otherwise a second-order one-sided stencil on the side that does, with eps
// shrunk when neither side qualifies.
Estimate numeric_derivative(const GraphBuilder& build, std::vector<Tensor>& inputs, std::size_t i,
                            std::size_t e, const Probe& base, double eps) {
  auto values = inputs[i].mutable_values();
  const double saved = values[e];
  auto at = [&](double offset) {
    values[e] = saved + offset;
    Probe p = evaluate(build, inputs, i, e);
    values[e] = saved;
    return p;
  };
  for (int attempt = 0;; ++attempt) {
    const Probe fp = at(eps);
    const Probe fm = at(-eps);
    const bool plus_ok = fp.branches == base.branches;
    const bool minus_ok = fm.branches == base.branches;
    const bool last = attempt == 3;
    if ((plus_ok && minus_ok) || (last && !plus_ok && !minus_ok)) {
      return {(fp.value - fm.value) / (2.0 * eps), false};
    }
    if (plus_ok) {
      const Probe half = at(eps / 2.0);
      if (half.branches == base.branches || last) {
        return {(-3.0 * base.value + 4.0 * half.value - fp.value) / eps, true};
      }
    }
    if (minus_ok) {
      const Probe half = at(-eps / 2.0);
      if (half.branches == base.branches || last) {
        return {(3.0 * base.value - 4.0 * half.value + fm.value) / eps, true};
      }
    }
    eps /= 10.0;
  }
}

}  // namespace

GradCheckResult check_gradients(const GraphBuilder& build, std::vector<Tensor> inputs,
                                const GradCheckOptions& options) {
  if (!(options.eps > 0.0)) throw ConfigError("check_gradients: eps must be positive");
  for (auto& t : inputs) {
    for (double v : t.values()) {
      if (!std::isfinite(v)) throw NumericError("check_gradients: non-finite input value");
    }
    t.set_requires_grad(true);
    t.zero_grad();
  }

  const Tensor loss = build(inputs);
  const Probe base{loss.item(), branch_pattern(loss)};
  backward(loss);
  std::vector<std::vector<double>> analytic;
  analytic.reserve(inputs.size());
  for (const auto& t : inputs) analytic.push_back(t.grad_or_zero());

  GradCheckResult result;
  Rng rng(options.sample_seed);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    std::vector<std::size_t> entries(inputs[i].numel());
    std::iota(entries.begin(), entries.end(), 0u);
    if (options.max_entries_per_input > 0 && entries.size() > options.max_entries_per_input) {
      std::shuffle(entries.begin(), entries.end(), rng);
      entries.resize(options.max_entries_per_input);
      std::sort(entries.begin(), entries.end());
    }
    for (std::size_t e : entries) {
      const Estimate est = numeric_derivative(build, inputs, i, e, base, options.eps);
      const double numeric = est.value;
      const double a = analytic[i][e];
      const double err =
          std::abs(a - numeric) / std::max(options.denominator_floor, std::abs(a) + std::abs(numeric));
      ++result.entries_checked;
      if (est.one_sided) ++result.one_sided;
      if (err > result.max_relative_error) {
        result.max_relative_error = err;
        result.worst_input = i;
        result.worst_entry = e;
        result.worst_analytic = a;
        result.worst_numeric = numeric;
      }
    }
  }
  for (auto& t : inputs) t.zero_grad();
  return result;
}

double check_gradients(const GraphBuilder& build, std::vector<Tensor> inputs, double eps) {
  GradCheckOptions options;
  options.eps = eps;
  return check_gradients(build, std::move(inputs), options).max_relative_error;
}

}  // namespace turbohoi::ad
