#include "turbohoi/ops.hpp"

namespace turbohoi::ad::ops {

namespace {

Tensor unary(Primitive kind, const Tensor& x, const Attrs& attrs = {}) {
  const Tensor in[] = {x};
  return apply_primitive(kind, in, attrs);
}

Tensor binary(Primitive kind, const Tensor& a, const Tensor& b) {
  const Tensor in[] = {a, b};
  return apply_primitive(kind, in);
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) { return binary(Primitive::kMatmul, a, b); }
Tensor add(const Tensor& a, const Tensor& b) { return binary(Primitive::kAdd, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(Primitive::kSub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(Primitive::kElementwiseMul, a, b); }

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  Attrs attrs;
  attrs.axis = axis;
  return apply_primitive(Primitive::kConcat, parts, attrs);
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
  Attrs attrs;
  attrs.axis = axis;
  attrs.begin = begin;
  attrs.end = end;
  return unary(Primitive::kSlice, x, attrs);
}

Tensor reshape(const Tensor& x, Shape shape) {
  Attrs attrs;
  attrs.shape = std::move(shape);
  return unary(Primitive::kReshape, x, attrs);
}

Tensor sigmoid(const Tensor& x) { return unary(Primitive::kSigmoid, x); }
Tensor relu(const Tensor& x) { return unary(Primitive::kRelu, x); }

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  const Tensor in[] = {x, weight, bias};
  return apply_primitive(Primitive::kConv2d, in);
}

Tensor nearest_upsample(const Tensor& x) { return unary(Primitive::kNearestUpsample, x); }

Tensor crop_resize(const Tensor& x, const std::array<double, 4>& box, std::size_t out_size) {
  Attrs attrs;
  attrs.box = box;
  attrs.out_size = out_size;
  return unary(Primitive::kCropResize, x, attrs);
}

Tensor softmax(const Tensor& x) { return unary(Primitive::kSoftmax, x); }
Tensor smooth_l1(const Tensor& x) { return unary(Primitive::kSmoothL1, x); }

Tensor sigmoid_cross_entropy(const Tensor& logits, const Tensor& labels) {
  return binary(Primitive::kSigmoidCrossEntropy, logits, labels);
}

Tensor softmax_cross_entropy_one_hot(const Tensor& logits, std::vector<std::size_t> targets) {
  Attrs attrs;
  attrs.indices = std::move(targets);
  return unary(Primitive::kSoftmaxCrossEntropyOneHot, logits, attrs);
}

Tensor soft_argmax_2d(const Tensor& logits) { return unary(Primitive::kSoftArgmax2d, logits); }
Tensor reduce_sum(const Tensor& x) { return unary(Primitive::kReduceSum, x); }
Tensor reduce_mean(const Tensor& x) { return unary(Primitive::kReduceMean, x); }

Tensor scalar_mul(const Tensor& x, double c) {
  Attrs attrs;
  attrs.scalar = c;
  return unary(Primitive::kScalarMul, x, attrs);
}

}  // namespace turbohoi::ad::ops
