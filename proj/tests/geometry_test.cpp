#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "turbohoi/error.hpp"
#include "turbohoi/geometry.hpp"
#include "turbohoi/rng.hpp"

namespace turbohoi::geometry {
namespace {

Box random_box(Rng& rng) {
  std::uniform_real_distribution<double> pos(-50.0, 50.0);
  std::uniform_real_distribution<double> ext(0.5, 40.0);
  return {pos(rng), pos(rng), ext(rng), ext(rng)};
}

void expect_enc(const RelEncoding& e, double dx, double dy, double dw, double dh) {
  EXPECT_NEAR(e.dx, dx, 1e-12);
  EXPECT_NEAR(e.dy, dy, 1e-12);
  EXPECT_NEAR(e.dw, dw, 1e-12);
  EXPECT_NEAR(e.dh, dh, 1e-12);
}

TEST(Encode, IdenticalBoxesGiveZero) {
  const Box b{3, 4, 10, 20};
  expect_enc(encode_box_relative(b, b), 0, 0, 0, 0);
}

TEST(Encode, HorizontalShift) {
  expect_enc(encode_box_relative({5, 0, 10, 10}, {0, 0, 10, 10}), 0.5, 0, 0, 0);
}

TEST(Encode, DoubledWidth) {
  expect_enc(encode_box_relative({0, 0, 20, 10}, {0, 0, 10, 10}), 0, 0, std::log(2.0), 0);
  EXPECT_NEAR(std::log(2.0), 0.6931, 1e-4);
}

TEST(Decode, InvertsExamples) {
  EXPECT_EQ(decode_box_relative({0, 0, 0, 0}, {0, 0, 10, 10}), (Box{0, 0, 10, 10}));
  const Box b = decode_box_relative({0.5, 0, 0, 0}, {0, 0, 10, 10});
  EXPECT_NEAR(b.x, 5, 1e-12);
  EXPECT_NEAR(b.w, 10, 1e-12);
}

TEST(Decode, RoundTripOnRandomPairs) {
  Rng rng(17);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Box h = random_box(rng), o = random_box(rng);
    const Box back = decode_box_relative(encode_box_relative(o, h), h);
    worst = std::max({worst, std::abs(back.x - o.x), std::abs(back.y - o.y), std::abs(back.w - o.w),
                      std::abs(back.h - o.h)});
  }
  EXPECT_LT(worst, 1e-9);
}

TEST(Score, KernelValues) {
  const RelEncoding mu{0.1, -0.2, 0.3, 0.0};
  EXPECT_EQ(localization_score(mu, mu, 0.3), 1.0);
  const RelEncoding d03{0.1 + 0.3, -0.2, 0.3, 0.0};
  const RelEncoding d06{0.1, -0.2, 0.3, 0.6};
  EXPECT_NEAR(localization_score(d03, mu, 0.3), std::exp(-0.5), 1e-12);
  EXPECT_NEAR(localization_score(d06, mu, 0.3), std::exp(-2.0), 1e-12);
  EXPECT_NEAR(std::exp(-0.5), 0.60653, 1e-5);
  EXPECT_NEAR(std::exp(-2.0), 0.13534, 1e-5);
}

TEST(Score, RejectsNonPositiveSigma) {
  EXPECT_THROW(localization_score({}, {}, 0.0), ConfigError);
  EXPECT_THROW(localization_score({}, {}, -1.0), ConfigError);
}

TEST(Score, RangeAndStrictMonotonicity) {
  Rng rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int i = 0; i < 500; ++i) {
    const RelEncoding mu{n(rng), n(rng), n(rng), n(rng)};
    const RelEncoding dir{n(rng), n(rng), n(rng), n(rng)};
    const double norm = std::sqrt(squared_distance(dir, {}));
    double prev = 2.0;
    for (double t : {0.0, 0.05, 0.2, 0.5, 1.0}) {
      const RelEncoding c{mu.dx + t * dir.dx / norm, mu.dy + t * dir.dy / norm,
                          mu.dw + t * dir.dw / norm, mu.dh + t * dir.dh / norm};
      const double g = localization_score(c, mu);
      EXPECT_GT(g, 0.0);
      EXPECT_LE(g, 1.0);
      if (t > 0) EXPECT_LT(g, 1.0);
      EXPECT_LT(g, prev);
      prev = g;
    }
  }
}

TEST(Select, EmptyGivesNothing) {
  EXPECT_FALSE(select_target({}, {}, {0, 0, 10, 10}).has_value());
}

TEST(Select, SingleCandidateAnySigma) {
  const Candidate c[] = {{7, {100, 100, 3, 3}, 0.4}};
  for (double sigma : {0.1, 0.3, 1.0, 10.0}) {
    const auto sel = select_target(c, {}, {0, 0, 10, 10}, sigma);
    ASSERT_TRUE(sel);
    EXPECT_EQ(sel->id, 7u);
    EXPECT_EQ(sel->detection_score, 0.4);
  }
}

TEST(Select, NearerEncodingWins) {
  const Box human{0, 0, 10, 10};
  // Encoded distances 0.1 and 0.4 from mu = 0 along dx.
  const Candidate c[] = {{0, {1, 0, 10, 10}, 1.0}, {1, {4, 0, 10, 10}, 1.0}};
  for (double sigma : {0.3, 1.0}) {
    const auto sel = select_target(c, {}, human, sigma);
    ASSERT_TRUE(sel);
    EXPECT_EQ(sel->id, 0u);
    EXPECT_NEAR(sel->score, std::exp(-0.01 / (2 * sigma * sigma)), 1e-12);
  }
}

TEST(Select, TiesGoToLowestId) {
  const Candidate c[] = {{5, {2, 0, 10, 10}, 1.0}, {3, {-2, 0, 10, 10}, 1.0}};
  EXPECT_EQ(select_target(c, {}, {0, 0, 10, 10})->id, 3u);
}

TEST(Select, ArgmaxInvariantToSigma) {
  Rng rng(23);
  std::uniform_int_distribution<int> count(1, 6);
  for (int trial = 0; trial < 300; ++trial) {
    const Box human = random_box(rng);
    std::vector<Candidate> cands;
    const int n = count(rng);
    for (int i = 0; i < n; ++i) cands.push_back({static_cast<std::size_t>(i), random_box(rng), 1.0});
    const RelEncoding mu = encode_box_relative(random_box(rng), human);
    const auto ref = select_target(cands, mu, human, 0.1);
    ASSERT_TRUE(ref);
    for (double sigma : {0.3, 1.0, 10.0}) {
      EXPECT_EQ(select_target(cands, mu, human, sigma)->id, ref->id);
    }
  }
}

TEST(Iou, Examples) {
  const Box a{0, 0, 10, 10};
  EXPECT_EQ(iou(a, a), 1.0);
  EXPECT_EQ(iou(a, {20, 20, 5, 5}), 0.0);
  EXPECT_NEAR(iou(a, {5, 0, 10, 10}), 50.0 / 150.0, 1e-12);
}

TEST(Iou, SymmetricAndBounded) {
  Rng rng(29);
  for (int i = 0; i < 1000; ++i) {
    const Box a = random_box(rng), b = random_box(rng);
    const double v = iou(a, b);
    EXPECT_EQ(v, iou(b, a));
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
    EXPECT_NEAR(iou(a, a), 1.0, 1e-12);
  }
}

}  // namespace
}  // namespace turbohoi::geometry
