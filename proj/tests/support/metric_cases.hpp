#pragma once

// Small random matching instances for comparing the greedy matcher with the
// exhaustive one. Shared by the eval suite and the acceptance binary.

#include <cmath>
#include <random>
#include <vector>

#include "turbohoi/eval.hpp"

namespace turbohoi::testing {

inline const std::vector<bool> kSynthHasObject{false, false, true, true, true, true};

inline synth::Human metric_human(const geometry::Box& box, std::size_t action, std::optional<std::size_t> target) {
  synth::Human h;
  h.box = box;
  h.actions.assign(6, 0);
  h.targets.assign(6, std::nullopt);
  h.actions[action] = 1;
  h.targets[action] = target;
  for (int k = 0; k < 5; ++k) h.keypoints.push_back({box.x + 1.0 + k, box.y + 2.0 * k, true});
  return h;
}

struct MatchingInstance {
  std::vector<synth::Scene> scenes;
  std::vector<eval::TripletPrediction> predictions;
};

// At most four ground-truth humans and six predictions, clustered so boxes
// overlap and assignments compete. Scores are coarse so ties occur.
inline MatchingInstance random_matching_instance(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> pos(0.0, 12.0), size(8.0, 14.0), score(0.0, 1.0);
  MatchingInstance inst;
  inst.scenes.resize(1 + rng() % 2);
  const std::size_t humans_total = 1 + rng() % 4;
  const std::size_t preds_total = rng() % 7;
  for (std::size_t si = 0; si < inst.scenes.size(); ++si) {
    auto& s = inst.scenes[si];
    s.width = 64;
    s.height = 64;
    const std::size_t objects = 1 + rng() % 3;
    for (std::size_t o = 0; o < objects; ++o) s.objects.push_back({{pos(rng), pos(rng), size(rng), size(rng)}, 0});
  }
  for (std::size_t i = 0; i < humans_total; ++i) {
    auto& s = inst.scenes[i % inst.scenes.size()];
    const std::size_t action = 2 + rng() % 2;
    synth::Human h = metric_human({pos(rng), pos(rng), size(rng), size(rng)}, action, rng() % s.objects.size());
    if (rng() % 3 == 0) h.actions[1] = 1;
    s.humans.push_back(h);
  }
  for (std::size_t p = 0; p < preds_total; ++p) {
    const std::size_t si = rng() % inst.scenes.size();
    const auto& s = inst.scenes[si];
    const geometry::Box near = s.humans.empty() ? geometry::Box{pos(rng), pos(rng), size(rng), size(rng)}
                                                : s.humans[rng() % s.humans.size()].box;
    const geometry::Box hb{near.x + pos(rng) / 4 - 1.5, near.y + pos(rng) / 4 - 1.5, near.w, near.h};
    const auto& obj = s.objects[rng() % s.objects.size()].box;
    const geometry::Box ob{obj.x + pos(rng) / 4 - 1.5, obj.y + pos(rng) / 4 - 1.5, obj.w, obj.h};
    inst.predictions.push_back({si, hb, 1 + rng() % 3, std::round(score(rng) * 4) / 4, ob});
  }
  return inst;
}

}  // namespace turbohoi::testing
