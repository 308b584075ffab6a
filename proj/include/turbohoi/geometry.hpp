#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>

namespace turbohoi::geometry {

// Axis-aligned box: top-left corner and extent in continuous pixel units.
struct Box {
  double x = 0.0;
  double y = 0.0;
  double w = 1.0;
  double h = 1.0;

  bool valid() const { return w > 0.0 && h > 0.0; }
  double area() const { return w * h; }
  std::array<double, 4> as_array() const { return {x, y, w, h}; }

  bool operator==(const Box&) const = default;
};

// Object box relative to a human box: (dx, dy) offsets in human extents and
// (dw, dh) log size ratios.
struct RelEncoding {
  double dx = 0.0;
  double dy = 0.0;
  double dw = 0.0;
  double dh = 0.0;

  std::array<double, 4> as_array() const { return {dx, dy, dw, dh}; }
  static RelEncoding from(std::span<const double> v) { return {v[0], v[1], v[2], v[3]}; }

  bool operator==(const RelEncoding&) const = default;
};

inline constexpr double kDefaultSigma = 0.3;

RelEncoding encode_box_relative(const Box& object, const Box& human);
Box decode_box_relative(const RelEncoding& enc, const Box& human);

double squared_distance(const RelEncoding& a, const RelEncoding& b);

// exp(-|candidate - mu|^2 / (2 sigma^2)). Throws ConfigError for sigma <= 0.
double localization_score(const RelEncoding& candidate, const RelEncoding& mu,
                          double sigma = kDefaultSigma);

struct Candidate {
  std::size_t id = 0;
  Box box;
  double detection_score = 1.0;
};

struct Selection {
  std::size_t id = 0;
  double score = 0.0;  // localization score g of the winner
  double detection_score = 1.0;
  Box box;
};

// Argmax of the localization score over candidates; ties go to the lowest id.
// Empty input yields no selection.
std::optional<Selection> select_target(std::span<const Candidate> candidates,
                                       const RelEncoding& mu, const Box& human,
                                       double sigma = kDefaultSigma);

double iou(const Box& a, const Box& b);

}  // namespace turbohoi::geometry
