#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace turbohoi::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

// The closed set of differentiable primitives. Network code composes these
// and nothing else, so the gradient checker covers every path.
enum class Primitive : std::uint8_t {
  kMatmul,
  kAdd,
  kSub,
  kConcat,
  kSlice,
  kReshape,
  kSigmoid,
  kRelu,
  kConv2d,
  kNearestUpsample,
  kElementwiseMul,
  kCropResize,
  kSoftmax,
  kSmoothL1,
  kSigmoidCrossEntropy,
  kSoftmaxCrossEntropyOneHot,
  kSoftArgmax2d,
  kReduceSum,
  kReduceMean,
  kScalarMul,
};

inline constexpr std::size_t kNumPrimitives = 20;

const char* primitive_name(Primitive kind);

struct Attrs {
  std::size_t axis = 0;
  std::size_t begin = 0;
  std::size_t end = 0;
  Shape shape;
  double scalar = 1.0;
  // crop_resize source region (x, y, w, h) in input pixel units; pixel k
  // spans [k, k + 1).
  std::array<double, 4> box{};
  std::size_t out_size = 0;
  // softmax_cross_entropy_one_hot target index per row.
  std::vector<std::size_t> indices;
};

struct Node;

struct TensorImpl {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until something accumulates into it
  bool requires_grad = false;
  std::shared_ptr<Node> node;  // null for leaves
};

struct Node {
  Primitive kind{};
  std::uint64_t id = 0;  // creation order; inputs always have smaller ids
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  Attrs attrs;
  std::vector<double> saved;
  std::vector<std::size_t> saved_index;
  TensorImpl* output = nullptr;
};

// Handle to a value in the computation graph. Copies share storage.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t numel() const;
  std::span<const double> values() const;
  // Direct write access; only valid for leaves (parameters, inputs).
  std::span<double> mutable_values();
  double item() const;
  double at(std::size_t flat_index) const { return values()[flat_index]; }

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  // Gradient, or zeros when nothing has been accumulated.
  std::vector<double> grad_or_zero() const;
  void zero_grad();

  bool is_leaf() const;
  const Node* node() const;
  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

  // Same storage identity.
  bool same(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  friend Tensor make_tensor(std::shared_ptr<TensorImpl>);

  std::shared_ptr<TensorImpl> impl_;
};

Tensor make_tensor(std::shared_ptr<TensorImpl> impl);

// Nodes reachable from a root through inputs that require grad, in
// topological order (every input precedes its consumers).
struct Graph {
  std::vector<const Node*> order;

  static Graph collect(const Tensor& root);
};

// Runs the forward kernel, validates shapes, and records a graph node when
// any input requires grad. Throws ShapeError on non-conforming shapes and
// std::invalid_argument for an unknown kind.
Tensor apply_primitive(Primitive kind, std::span<const Tensor> inputs,
                       const Attrs& attrs = {});

// Reverse-mode sweep from a scalar loss. Leaf gradients accumulate across
// calls; intermediate gradients are reset at the start of every call.
void backward(const Graph& graph, const Tensor& loss);
void backward(const Tensor& loss);

}  // namespace turbohoi::ad
