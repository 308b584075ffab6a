#pragma once

// Hand-built scenes and per-proposal losses for the loss-gating checks.
// Shared by the trainer suite and the acceptance binary.

#include <string>
#include <vector>

#include "full_stack_case.hpp"

namespace turbohoi::testing {

inline constexpr std::size_t kHoldAction = 2;

// One human at (10, 10, 16, 30) and one object; the human performs the given
// actions and every object action targets the object.
inline synth::Scene gating_scene(const std::vector<std::size_t>& actions, bool visible = true) {
  synth::Scene s;
  s.seed = 77;
  s.width = 64;
  s.height = 64;
  synth::Human h;
  h.box = {10, 10, 16, 30};
  h.actions.assign(6, 0);
  h.targets.assign(6, std::nullopt);
  for (std::size_t a : actions) {
    h.actions[a] = 1;
    if (a >= kHoldAction) h.targets[a] = 0;
  }
  const double tmpl[5][2] = {{0.5, 0.1}, {0.15, 0.5}, {0.85, 0.5}, {0.3, 0.95}, {0.7, 0.95}};
  for (const auto& t : tmpl) h.keypoints.push_back({h.box.x + t[0] * h.box.w, h.box.y + t[1] * h.box.h, visible});
  s.humans.push_back(h);
  s.objects.push_back({{30, 20, 8, 8}, 0});
  s.image = synth::rasterize(s, 4);
  return s;
}

inline train::TrainConfig toy_train_config(int stages) {
  train::TrainConfig c;
  c.model = toy_model_config(stages);
  return c;
}

// Proposal terms plus the detection term over the object and one background
// candidate.
inline train::LossBreakdown proposal_loss(const net::Model& model, const synth::Scene& scene,
                                          const geometry::Box& proposal, const train::TrainConfig& config) {
  const ad::Tensor image = net::image_tensor(scene.image, scene.width, scene.height);
  const auto u = train::unroll_forward(image, proposal, model, nullptr);
  const std::vector<geometry::Box> boxes{scene.objects[0].box, {50, 50, 6, 6}};
  const auto det = net::detection_forward(image, boxes, model.det, model.config());
  return train::total_loss(&u, scene, proposal, det,
                           train::detection_targets(boxes, scene, model.config().C, config.det_positive_iou),
                           config);
}

inline bool all_zero_grad(const ad::Tensor& t) {
  for (double v : t.grad_or_zero()) {
    if (v != 0.0) return false;
  }
  return true;
}

// Parameters whose name contains one of the fragments and whose gradient is
// not exactly zero.
inline std::vector<std::string> nonzero_grads(const net::Model& model, const std::vector<std::string>& fragments) {
  std::vector<std::string> out;
  for (const auto& p : model.params().entries()) {
    for (const auto& f : fragments) {
      if (p.name.find(f) != std::string::npos && !all_zero_grad(p.tensor)) {
        out.push_back(p.name);
        break;
      }
    }
  }
  return out;
}

// Gradient of one proposal's loss, left in the model's parameters.
inline train::LossBreakdown backprop_proposal(net::Model& model, const synth::Scene& scene,
                                              const geometry::Box& proposal, const train::TrainConfig& config) {
  model.params().zero_grad();
  auto loss = proposal_loss(model, scene, proposal, config);
  ad::backward(loss.total);
  return loss;
}

}  // namespace turbohoi::testing
