#include "turbohoi/parameters.hpp"

#include <algorithm>
#include <cmath>

#include "turbohoi/error.hpp"

namespace turbohoi {

ad::Tensor ParameterSet::add(std::string name, ad::Shape shape) {
  if (contains(name)) throw ConfigError("duplicate parameter name: " + name);
  auto t = ad::Tensor::zeros(std::move(shape), true);
  entries_.push_back({std::move(name), t});
  return t;
}

bool ParameterSet::contains(std::string_view name) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const NamedTensor& e) { return e.name == name; });
}

const ad::Tensor& ParameterSet::at(std::string_view name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e.tensor;
  }
  throw ConfigError("unknown parameter: " + std::string(name));
}

std::size_t ParameterSet::total_values() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor.numel();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

void init_fan_in_uniform(ad::Tensor& t, std::size_t fan_in, double gain, Rng& rng) {
  const double bound = std::sqrt(gain / static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : t.mutable_values()) v = dist(rng);
}

}  // namespace turbohoi
