#include "turbohoi/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "turbohoi/error.hpp"

namespace turbohoi::geometry {

RelEncoding encode_box_relative(const Box& object, const Box& human) {
  return {(object.x - human.x) / human.w, (object.y - human.y) / human.h,
          std::log(object.w / human.w), std::log(object.h / human.h)};
}

Box decode_box_relative(const RelEncoding& enc, const Box& human) {
  return {human.x + enc.dx * human.w, human.y + enc.dy * human.h, human.w * std::exp(enc.dw),
          human.h * std::exp(enc.dh)};
}

double squared_distance(const RelEncoding& a, const RelEncoding& b) {
  const double dx = a.dx - b.dx, dy = a.dy - b.dy, dw = a.dw - b.dw, dh = a.dh - b.dh;
  return dx * dx + dy * dy + dw * dw + dh * dh;
}

double localization_score(const RelEncoding& candidate, const RelEncoding& mu, double sigma) {
  if (!(sigma > 0.0)) throw ConfigError("localization_score: sigma must be positive");
  return std::exp(-squared_distance(candidate, mu) / (2.0 * sigma * sigma));
}

std::optional<Selection> select_target(std::span<const Candidate> candidates,
                                       const RelEncoding& mu, const Box& human, double sigma) {
  std::optional<Selection> best;
  double best_d2 = 0.0;
  for (const auto& c : candidates) {
    // Compare squared distances: the score is monotone in them, and
    // exp underflow would otherwise tie distant candidates at zero.
    const RelEncoding enc = encode_box_relative(c.box, human);
    const double d2 = squared_distance(enc, mu);
    if (!best || d2 < best_d2 || (d2 == best_d2 && c.id < best->id)) {
      best = Selection{c.id, localization_score(enc, mu, sigma), c.detection_score, c.box};
      best_d2 = d2;
    }
  }
  return best;
}

double iou(const Box& a, const Box& b) {
  const double ix = std::max(0.0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
  const double iy = std::max(0.0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
  const double inter = ix * iy;
  if (inter <= 0.0) return 0.0;
  return inter / (a.area() + b.area() - inter);
}

}  // namespace turbohoi::geometry
