#pragma once

// Randomised gradient-check instances, one family per primitive. Shared by
// the unit suite and the acceptance binary.

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "turbohoi/grad_check.hpp"
#include "turbohoi/ops.hpp"
#include "turbohoi/rng.hpp"

namespace turbohoi::testing {

using ad::Shape;
using ad::Tensor;
namespace ops = ad::ops;

// Central-difference step for the primitive checks. Smaller steps let
// cancellation dominate on entries whose gradient is near 1e-7.
inline constexpr double kPrimitiveEps = 1e-4;

struct GradCase {
  std::string name;
  ad::GraphBuilder build;
  std::vector<Tensor> inputs;
};

inline Tensor random_tensor(Rng& rng, Shape shape, double lo, double hi, bool grad = true) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(ad::numel(shape));
  for (auto& x : v) x = d(rng);
  return Tensor::from(std::move(shape), std::move(v), grad);
}

// Values in [lo, hi] with a random sign; keeps piecewise primitives off
// their kinks.
inline Tensor random_signed_tensor(Rng& rng, Shape shape, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::bernoulli_distribution sign(0.5);
  std::vector<double> v(ad::numel(shape));
  for (auto& x : v) x = sign(rng) ? d(rng) : -d(rng);
  return Tensor::from(std::move(shape), std::move(v), true);
}

// Contracts an arbitrary output with fixed random weights so every output
// entry carries a generic, non-zero cotangent.
inline std::function<Tensor(const Tensor&)> random_readout(Rng& rng, const Shape& shape) {
  Tensor w = random_tensor(rng, shape, -1.0, 1.0, false);
  return [w](const Tensor& out) { return ops::reduce_sum(ops::mul(out, w)); };
}

inline std::vector<GradCase> primitive_cases(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<GradCase> cases;
  auto unary = [&](std::string name, Tensor x, std::function<Tensor(const Tensor&)> f) {
    const Shape out_shape = f(x).shape();
    auto read = random_readout(rng, out_shape);
    cases.push_back({std::move(name), [f, read](std::span<const Tensor> in) { return read(f(in[0])); }, {x}});
  };
  auto binary = [&](std::string name, Tensor a, Tensor b,
                    std::function<Tensor(const Tensor&, const Tensor&)> f) {
    const Shape out_shape = f(a, b).shape();
    auto read = random_readout(rng, out_shape);
    cases.push_back({std::move(name),
                     [f, read](std::span<const Tensor> in) { return read(f(in[0], in[1])); },
                     {a, b}});
  };

  binary("matmul", random_tensor(rng, {3, 4}, -1, 1), random_tensor(rng, {4, 2}, -1, 1), ops::matmul);
  binary("add", random_tensor(rng, {3, 4}, -1, 1), random_tensor(rng, {3, 4}, -1, 1), ops::add);
  binary("add_broadcast", random_tensor(rng, {3, 4}, -1, 1), random_tensor(rng, {4}, -1, 1), ops::add);
  binary("add_row_broadcast", random_tensor(rng, {3, 4}, -1, 1), random_tensor(rng, {3, 1}, -1, 1), ops::add);
  binary("sub", random_tensor(rng, {2, 3}, -1, 1), random_tensor(rng, {2, 3}, -1, 1), ops::sub);
  binary("elementwise_mul", random_tensor(rng, {2, 3}, -1, 1), random_tensor(rng, {2, 3}, -1, 1), ops::mul);
  binary("elementwise_mul_mask", random_tensor(rng, {3, 4, 4}, -1, 1), random_tensor(rng, {1, 4, 4}, 0.05, 0.95), ops::mul);
  binary("concat_axis0", random_tensor(rng, {2, 3}, -1, 1), random_tensor(rng, {1, 3}, -1, 1),
         [](const Tensor& a, const Tensor& b) { return ops::concat({a, b}, 0); });
  binary("concat_axis1", random_tensor(rng, {2, 3}, -1, 1), random_tensor(rng, {2, 2}, -1, 1),
         [](const Tensor& a, const Tensor& b) { return ops::concat({a, b}, 1); });
  unary("slice", random_tensor(rng, {3, 5}, -1, 1), [](const Tensor& x) { return ops::slice(x, 1, 1, 4); });
  unary("reshape", random_tensor(rng, {2, 6}, -1, 1), [](const Tensor& x) { return ops::reshape(x, {3, 4}); });
  unary("sigmoid", random_tensor(rng, {6}, -3, 3), ops::sigmoid);
  unary("relu", random_signed_tensor(rng, {8}, 0.1, 1.0), ops::relu);
  {
    Tensor x = random_tensor(rng, {2, 5, 5}, -1, 1);
    Tensor w = random_tensor(rng, {3, 2, 3, 3}, -1, 1);
    Tensor b = random_tensor(rng, {3}, -1, 1);
    auto read = random_readout(rng, {3, 5, 5});
    cases.push_back({"conv2d",
                     [read](std::span<const Tensor> in) { return read(ops::conv2d(in[0], in[1], in[2])); },
                     {x, w, b}});
  }
  unary("nearest_upsample", random_tensor(rng, {2, 3, 3}, -1, 1), ops::nearest_upsample);
  {
    std::uniform_real_distribution<double> d(0.0, 1.0);
    const std::array<double, 4> box{0.5 + 2.0 * d(rng), 0.5 + 2.0 * d(rng), 3.0 + 3.0 * d(rng), 3.0 + 3.0 * d(rng)};
    unary("crop_resize", random_tensor(rng, {2, 8, 8}, -1, 1),
          [box](const Tensor& x) { return ops::crop_resize(x, box, 4); });
  }
  unary("softmax_over_last_axis", random_tensor(rng, {3, 5}, -2, 2), ops::softmax);
  unary("smooth_l1_inner", random_signed_tensor(rng, {6}, 0.05, 0.95), ops::smooth_l1);
  unary("smooth_l1_outer", random_signed_tensor(rng, {6}, 1.05, 3.0), ops::smooth_l1);
  {
    std::bernoulli_distribution coin(0.5);
    std::vector<double> labels(6);
    for (auto& l : labels) l = coin(rng) ? 1.0 : 0.0;
    Tensor y = Tensor::from({6}, labels);
    unary("sigmoid_cross_entropy", random_tensor(rng, {6}, -3, 3),
          [y](const Tensor& x) { return ops::sigmoid_cross_entropy(x, y); });
  }
  {
    std::uniform_int_distribution<std::size_t> cls(0, 6);
    std::vector<std::size_t> targets{cls(rng), cls(rng), cls(rng)};
    unary("softmax_cross_entropy_one_hot", random_tensor(rng, {3, 7}, -2, 2),
          [targets](const Tensor& x) { return ops::softmax_cross_entropy_one_hot(x, targets); });
  }
  unary("soft_argmax_2d", random_tensor(rng, {2, 8, 8}, -1, 1), ops::soft_argmax_2d);
  unary("reduce_sum", random_tensor(rng, {2, 3}, -1, 1), ops::reduce_sum);
  unary("reduce_mean", random_tensor(rng, {2, 3}, -1, 1), ops::reduce_mean);
  unary("scalar_mul", random_tensor(rng, {4}, -1, 1), [](const Tensor& x) { return ops::scalar_mul(x, -1.7); });
  return cases;
}

}  // namespace turbohoi::testing
