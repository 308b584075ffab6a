#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "turbohoi/rng.hpp"
#include "turbohoi/tensor.hpp"

namespace turbohoi {

struct NamedTensor {
  std::string name;
  ad::Tensor tensor;
};

// Ordered registry of trainable leaves. Order is registration order and is
// what the optimizer and checkpoints iterate over.
class ParameterSet {
 public:
  // Zero-initialised, requires_grad. Throws ConfigError on a duplicate name.
  ad::Tensor add(std::string name, ad::Shape shape);

  bool contains(std::string_view name) const;
  const ad::Tensor& at(std::string_view name) const;

  const std::vector<NamedTensor>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t total_values() const;

  void zero_grad();

 private:
  std::vector<NamedTensor> entries_;
};

// Uniform(-bound, bound) with bound = sqrt(gain / fan_in).
void init_fan_in_uniform(ad::Tensor& t, std::size_t fan_in, double gain, Rng& rng);

}  // namespace turbohoi
