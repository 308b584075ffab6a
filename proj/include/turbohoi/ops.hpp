#pragma once

#include <array>
#include <initializer_list>
#include <vector>

#include "turbohoi/tensor.hpp"

// Thin named wrappers over apply_primitive.
namespace turbohoi::ad::ops {

Tensor matmul(const Tensor& a, const Tensor& b);
// b broadcasts into a (trailing-aligned; each extent 1 or equal).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end);
Tensor reshape(const Tensor& x, Shape shape);
Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias);
Tensor nearest_upsample(const Tensor& x);
Tensor crop_resize(const Tensor& x, const std::array<double, 4>& box, std::size_t out_size);
Tensor softmax(const Tensor& x);
Tensor smooth_l1(const Tensor& x);
Tensor sigmoid_cross_entropy(const Tensor& logits, const Tensor& labels);
Tensor softmax_cross_entropy_one_hot(const Tensor& logits, std::vector<std::size_t> targets);
Tensor soft_argmax_2d(const Tensor& logits);
Tensor reduce_sum(const Tensor& x);
Tensor reduce_mean(const Tensor& x);
Tensor scalar_mul(const Tensor& x, double c);

}  // namespace turbohoi::ad::ops
