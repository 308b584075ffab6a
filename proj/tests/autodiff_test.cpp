#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "support/primitive_cases.hpp"
#include "turbohoi/checkpoint.hpp"
#include "turbohoi/error.hpp"
#include "turbohoi/grad_check.hpp"
#include "turbohoi/ops.hpp"
#include "turbohoi/optimizer.hpp"

namespace turbohoi {
namespace {

using ad::Shape;
using ad::Tensor;
namespace ops = ad::ops;

TEST(Primitives, SigmoidOfZeroIsHalf) {
  const Tensor y = ops::sigmoid(Tensor::zeros({4}));
  for (double v : y.values()) EXPECT_EQ(v, 0.5);
}

TEST(Primitives, ConcatJoinsAlongAxis) {
  const Tensor y = ops::concat({Tensor::from({2}, {1, 2}), Tensor::from({3}, {3, 4, 5})}, 0);
  EXPECT_EQ(y.shape(), (Shape{5}));
  EXPECT_EQ(std::vector<double>(y.values().begin(), y.values().end()),
            (std::vector<double>{1, 2, 3, 4, 5}));
}

TEST(Primitives, SmoothL1Piecewise) {
  const Tensor y = ops::smooth_l1(Tensor::from({2}, {0.5, 2.0}));
  EXPECT_DOUBLE_EQ(y.at(0), 0.125);
  EXPECT_DOUBLE_EQ(y.at(1), 1.5);
}

TEST(Primitives, ShapeMismatchNamesKindAndShapes) {
  try {
    ops::matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3}));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("matmul"), std::string::npos);
    EXPECT_NE(msg.find("[2,3]"), std::string::npos);
  }
  EXPECT_THROW(ops::add(Tensor::zeros({2, 3}), Tensor::zeros({2})), ShapeError);
  EXPECT_THROW(ops::conv2d(Tensor::zeros({2, 4, 4}), Tensor::zeros({1, 3, 3, 3}), Tensor::zeros({1})),
               ShapeError);
  EXPECT_THROW(ops::reshape(Tensor::zeros({2, 3}), {4}), ShapeError);
}

TEST(Primitives, UnknownKindRejected) {
  const Tensor in[] = {Tensor::zeros({1})};
  EXPECT_THROW(ad::apply_primitive(static_cast<ad::Primitive>(200), in), std::invalid_argument);
}

TEST(Primitives, NoGraphWithoutGradInputs) {
  const Tensor y = ops::sigmoid(Tensor::zeros({3}));
  EXPECT_TRUE(y.is_leaf());
  EXPECT_FALSE(y.requires_grad());
  const Tensor z = ops::sigmoid(Tensor::zeros({3}, true));
  EXPECT_FALSE(z.is_leaf());
}

TEST(Primitives, SoftmaxRowsAreDistributions) {
  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor x = testing::random_tensor(rng, {4, 9}, -30.0, 30.0, false);
    const Tensor y = ops::softmax(x);
    for (std::size_t r = 0; r < 4; ++r) {
      double sum = 0.0;
      for (std::size_t j = 0; j < 9; ++j) {
        EXPECT_GE(y.at(r * 9 + j), 0.0);
        sum += y.at(r * 9 + j);
      }
      EXPECT_NEAR(sum, 1.0, 1e-12);
    }
  }
}

TEST(Primitives, ConcatThenSliceIsBitExact) {
  Rng rng(11);
  std::uniform_int_distribution<std::size_t> ext(1, 4);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t rows = ext(rng), a = ext(rng), b = ext(rng), c = ext(rng);
    const Tensor x = testing::random_tensor(rng, {rows, a}, -1e6, 1e6, false);
    const Tensor y = testing::random_tensor(rng, {rows, b}, -1e6, 1e6, false);
    const Tensor z = testing::random_tensor(rng, {rows, c}, -1e6, 1e6, false);
    const Tensor joined = ops::concat({x, y, z}, 1);
    const Tensor parts[] = {ops::slice(joined, 1, 0, a), ops::slice(joined, 1, a, a + b),
                            ops::slice(joined, 1, a + b, a + b + c)};
    const Tensor originals[] = {x, y, z};
    for (int p = 0; p < 3; ++p) {
      ASSERT_EQ(parts[p].shape(), originals[p].shape());
      for (std::size_t i = 0; i < parts[p].numel(); ++i) {
        EXPECT_EQ(std::bit_cast<std::uint64_t>(parts[p].at(i)),
                  std::bit_cast<std::uint64_t>(originals[p].at(i)));
      }
    }
  }
}

TEST(Primitives, CropResizeOfFullExtentIsIdentity) {
  Rng rng(3);
  const Tensor x = testing::random_tensor(rng, {2, 6, 6}, -1, 1, false);
  const Tensor y = ops::crop_resize(x, {0.0, 0.0, 6.0, 6.0}, 6);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_DOUBLE_EQ(y.at(i), x.at(i));
}

TEST(Primitives, SoftArgmaxOfPeakedLogitsFindsTheCell) {
  std::vector<double> logits(16, 0.0);
  logits[1 * 4 + 2] = 50.0;  // row 1, column 2
  const Tensor out = ops::soft_argmax_2d(Tensor::from({1, 4, 4}, logits));
  EXPECT_NEAR(out.at(0), 2.5 / 4.0, 1e-12);
  EXPECT_NEAR(out.at(1), 1.5 / 4.0, 1e-12);
  EXPECT_NEAR(out.at(2), 1.0, 1e-12);
}

TEST(Backward, SumGivesOnes) {
  Tensor x = Tensor::from({3}, {1, 2, 3}, true);
  ad::backward(ops::reduce_sum(x));
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, ProductRule) {
  Tensor a = Tensor::from({3}, {1, 2, 3}, true);
  Tensor b = Tensor::from({3}, {-4, 5, 0.5}, true);
  ad::backward(ops::reduce_sum(ops::mul(a, b)));
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(a.grad()[i], b.at(i));
    EXPECT_EQ(b.grad()[i], a.at(i));
  }
}

TEST(Backward, SigmoidCrossEntropyAtZeroLogit) {
  Tensor logit = Tensor::from({1}, {0.0}, true);
  ad::backward(ops::reduce_sum(ops::sigmoid_cross_entropy(logit, Tensor::from({1}, {1.0}))));
  EXPECT_DOUBLE_EQ(logit.grad()[0], -0.5);
}

TEST(Backward, NonScalarLossRejected) {
  Tensor x = Tensor::from({2}, {1, 2}, true);
  EXPECT_THROW(ad::backward(ops::sigmoid(x)), ShapeError);
}

TEST(Backward, RepeatedCallsAccumulate) {
  Tensor x = Tensor::from({2}, {1, 2}, true);
  const Tensor loss = ops::reduce_sum(ops::scalar_mul(x, 3.0));
  ad::backward(loss);
  ad::backward(loss);
  EXPECT_EQ(x.grad()[0], 6.0);
  EXPECT_EQ(x.grad()[1], 6.0);
}

TEST(Backward, UnusedParameterGetsExactZero) {
  Tensor used = Tensor::from({2}, {1, 2}, true);
  Tensor unused = Tensor::from({2}, {3, 4}, true);
  ad::backward(ops::reduce_sum(ops::sigmoid(used)));
  for (double g : unused.grad_or_zero()) EXPECT_EQ(g, 0.0);
}

TEST(Backward, ConstantsNeverAccumulate) {
  Tensor w = Tensor::from({2}, {1, 2}, true);
  Tensor c = Tensor::from({2}, {3, 4}, false);
  ad::backward(ops::reduce_sum(ops::mul(w, c)));
  EXPECT_FALSE(c.has_grad());
}

TEST(Backward, GraphIsTopologicallyOrdered) {
  Tensor x = Tensor::from({2}, {1, 2}, true);
  Tensor y = ops::sigmoid(x);
  const Tensor loss = ops::reduce_sum(ops::add(ops::mul(y, y), y));
  const auto graph = ad::Graph::collect(loss);
  ASSERT_EQ(graph.order.size(), 4u);
  for (std::size_t i = 0; i < graph.order.size(); ++i) {
    for (const auto& in : graph.order[i]->inputs) {
      if (!in->node) continue;
      const auto pos = std::find(graph.order.begin(), graph.order.end(), in->node.get());
      EXPECT_LT(static_cast<std::size_t>(pos - graph.order.begin()), i);
    }
  }
  // Shared subexpression y visited once: d/dx = (2y + 1) y (1 - y).
  ad::backward(graph, loss);
  for (std::size_t i = 0; i < 2; ++i) {
    const double yv = y.at(i);
    EXPECT_NEAR(x.grad()[i], (2 * yv + 1) * yv * (1 - yv), 1e-15);
  }
}

TEST(GradCheck, MatmulExample) {
  Rng rng(1);
  std::vector<Tensor> in{testing::random_tensor(rng, {3, 4}, -1, 1), testing::random_tensor(rng, {4, 2}, -1, 1)};
  auto read = testing::random_readout(rng, {3, 2});
  const double err = ad::check_gradients(
      [read](std::span<const Tensor> t) { return read(ops::matmul(t[0], t[1])); }, in, 1e-5);
  EXPECT_LT(err, 1e-6);
}

TEST(GradCheck, Conv2dExample) {
  Rng rng(2);
  std::vector<Tensor> in{testing::random_tensor(rng, {1, 5, 5}, -1, 1),
                         testing::random_tensor(rng, {1, 1, 3, 3}, -1, 1),
                         testing::random_tensor(rng, {1}, -1, 1)};
  auto read = testing::random_readout(rng, {1, 5, 5});
  const double err = ad::check_gradients(
      [read](std::span<const Tensor> t) { return read(ops::conv2d(t[0], t[1], t[2])); }, in, 1e-5);
  EXPECT_LT(err, 1e-6);
}

TEST(GradCheck, SoftArgmaxExample) {
  Rng rng(3);
  std::vector<Tensor> in{testing::random_tensor(rng, {1, 8, 8}, -1, 1)};
  auto read = testing::random_readout(rng, {1, 3});
  const double err = ad::check_gradients(
      [read](std::span<const Tensor> t) { return read(ops::soft_argmax_2d(t[0])); }, in, 1e-5);
  EXPECT_LT(err, 1e-5);
}

TEST(GradCheck, EveryPrimitiveAcrossSeeds) {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    for (auto& c : testing::primitive_cases(seed)) {
      const double err = ad::check_gradients(c.build, c.inputs, testing::kPrimitiveEps);
      EXPECT_LT(err, 1e-5) << c.name << " seed " << seed;
    }
  }
}

TEST(GradCheck, CoversEveryPrimitiveKind) {
  std::set<std::string> seen;
  for (auto& c : testing::primitive_cases(0)) {
    auto loss = c.build(c.inputs);
    for (const auto* n : ad::Graph::collect(loss).order) seen.insert(ad::primitive_name(n->kind));
  }
  for (std::size_t k = 0; k < ad::kNumPrimitives; ++k) {
    EXPECT_TRUE(seen.count(ad::primitive_name(static_cast<ad::Primitive>(k))))
        << ad::primitive_name(static_cast<ad::Primitive>(k));
  }
}

TEST(GradCheck, NonFiniteProbeReportsEntry) {
  Tensor x = Tensor::from({2}, {1.0, 1.0}, true);
  auto build = [](std::span<const Tensor> t) {
    const double v = t[0].at(1);
    return ops::scalar_mul(ops::reduce_sum(t[0]), v > 1.0 ? std::nan("") : 1.0);
  };
  try {
    ad::check_gradients(build, {x}, 1e-3);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("entry 1"), std::string::npos);
  }
}

TEST(Sgd, PlainStep) {
  std::vector<double> p{1.0}, g{1.0}, v{0.0};
  sgd_step(p, g, v, {0.1, 0.0, 0.0});
  EXPECT_DOUBLE_EQ(p[0], 0.9);
}

TEST(Sgd, MomentumTwoSteps) {
  std::vector<double> p{0.0}, g{1.0}, v{0.0};
  const SgdSettings s{0.1, 0.9, 0.0};
  sgd_step(p, g, v, s);
  EXPECT_DOUBLE_EQ(v[0], 1.0);
  EXPECT_DOUBLE_EQ(p[0], -0.1);
  sgd_step(p, g, v, s);
  EXPECT_DOUBLE_EQ(v[0], 1.9);
  EXPECT_NEAR(p[0], -0.29, 1e-15);
}

TEST(Sgd, ZeroLearningRateLeavesParams) {
  std::vector<double> p{0.3, -2.0}, g{5.0, -7.0}, v{0.0, 0.0};
  sgd_step(p, g, v, {0.0, 0.9, 1e-4});
  EXPECT_EQ(p[0], 0.3);
  EXPECT_EQ(p[1], -2.0);
}

TEST(Sgd, WeightDecayEntersGradient) {
  std::vector<double> p{2.0}, g{0.0}, v{0.0};
  sgd_step(p, g, v, {0.5, 0.0, 0.1});
  EXPECT_DOUBLE_EQ(p[0], 2.0 - 0.5 * 0.2);
}

TEST(Sgd, NanGradientRejectsWholeStep) {
  ParameterSet params;
  Tensor a = params.add("a", {2});
  Tensor b = params.add("b", {1});
  a.mutable_grad()[0] = 1.0;
  b.mutable_grad()[0] = std::nan("");
  auto state = make_optimizer_state(params, {0.1, 0.9, 0.0});
  EXPECT_THROW(sgd_update(params, state), NumericError);
  EXPECT_EQ(a.at(0), 0.0);
  EXPECT_EQ(state.velocity[0][0], 0.0);
}

class CheckpointTest : public ::testing::Test {
 protected:
  std::filesystem::path path_ = std::filesystem::temp_directory_path() / "turbohoi_ckpt_test.bin";
  void TearDown() override { std::filesystem::remove(path_); }
};

TEST_F(CheckpointTest, RoundTripsParametersMomentumAndMeta) {
  ParameterSet params;
  Rng rng(5);
  Tensor w = params.add("layer/w", {2, 3});
  Tensor b = params.add("layer/b", {3});
  init_fan_in_uniform(w, 2, 6.0, rng);
  init_fan_in_uniform(b, 2, 6.0, rng);
  auto state = make_optimizer_state(params, {});
  state.velocity[0][4] = -0.125;
  const auto ckpt = snapshot(params, &state, {{"iteration", 42}});
  write_checkpoint(path_, ckpt);
  const auto back = read_checkpoint(path_);
  EXPECT_EQ(back, ckpt);
  EXPECT_EQ(back.meta("iteration", -1), 42);

  ParameterSet other;
  other.add("layer/w", {2, 3});
  other.add("layer/b", {3});
  auto other_state = make_optimizer_state(other, {});
  restore(back, other, &other_state);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(other.at("layer/w").at(i), w.at(i));
  EXPECT_EQ(other_state.velocity[0][4], -0.125);
}

TEST_F(CheckpointTest, ShapeMismatchListsDiff) {
  ParameterSet params;
  params.add("w", {2, 3});
  write_checkpoint(path_, snapshot(params, nullptr, {}));
  ParameterSet other;
  other.add("w", {3, 2});
  try {
    restore(read_checkpoint(path_), other, nullptr);
    FAIL();
  } catch (const CompatibilityError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2,3]"), std::string::npos);
    EXPECT_NE(msg.find("[3,2]"), std::string::npos);
  }
}

TEST_F(CheckpointTest, PayloadIsLittleEndianAfterManifest) {
  ParameterSet params;
  Tensor w = params.add("w", {1});
  w.mutable_values()[0] = 1.0;  // 0x3FF0000000000000
  write_checkpoint(path_, snapshot(params, nullptr, {}));
  std::ifstream is(path_, std::ios::binary);
  const std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  EXPECT_EQ(bytes.substr(0, bytes.size() - 8), "TURBOHOI-CKPT 1\n1\nw 1 1 0\nDATA\n");
  EXPECT_EQ(static_cast<unsigned char>(bytes[bytes.size() - 1]), 0x3F);
  EXPECT_EQ(static_cast<unsigned char>(bytes[bytes.size() - 2]), 0xF0);
}

TEST_F(CheckpointTest, TruncatedPayloadRejected) {
  ParameterSet params;
  params.add("w", {4});
  write_checkpoint(path_, snapshot(params, nullptr, {}));
  std::filesystem::resize_file(path_, std::filesystem::file_size(path_) - 3);
  EXPECT_THROW(read_checkpoint(path_), FormatError);
}

}  // namespace
}  // namespace turbohoi
