#include "turbohoi/serialization.hpp"

#include <initializer_list>
#include <string>

#include "turbohoi/error.hpp"

namespace turbohoi {

namespace {

using nlohmann::json;

template <typename T>
void read_if(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string(key) + ": " + e.what());
  }
}

void reject_unknown(const json& j, std::initializer_list<const char*> known, const char* what) {
  if (!j.is_object()) throw ConfigError(std::string(what) + " must be a JSON object");
  for (const auto& item : j.items()) {
    bool found = false;
    for (const char* k : known) found = found || item.key() == k;
    if (!found) throw ConfigError(std::string(what) + ": unknown key '" + item.key() + "'");
  }
}

json action_to_json(const synth::ActionDef& a) {
  return {{"name", a.name},
          {"has_object", a.has_object},
          {"category_weights", a.category_weights},
          {"mean_offset", a.mean_offset.as_array()},
          {"offset_noise", a.offset_noise},
          {"keypoint_template", a.keypoint_template},
          {"template_noise", a.template_noise},
          {"visibility_dropout", a.visibility_dropout},
          {"contact_keypoint", a.contact_keypoint},
          {"compatible", a.compatible}};
}

synth::ActionDef action_from_json(const json& j) {
  synth::ActionDef a;
  read_if(j, "name", a.name);
  read_if(j, "has_object", a.has_object);
  read_if(j, "category_weights", a.category_weights);
  if (j.contains("mean_offset")) {
    const auto v = j.at("mean_offset").get<std::array<double, 4>>();
    a.mean_offset = synth::RelEncoding::from(v);
  }
  read_if(j, "offset_noise", a.offset_noise);
  read_if(j, "keypoint_template", a.keypoint_template);
  read_if(j, "template_noise", a.template_noise);
  read_if(j, "visibility_dropout", a.visibility_dropout);
  read_if(j, "contact_keypoint", a.contact_keypoint);
  read_if(j, "compatible", a.compatible);
  return a;
}

}  // namespace

json world_to_json(const synth::WorldSpec& s) {
  json actions = json::array();
  for (const auto& a : s.actions) actions.push_back(action_to_json(a));
  return {{"image_width", s.image_width},
          {"image_height", s.image_height},
          {"num_categories", s.num_categories},
          {"num_keypoints", s.num_keypoints},
          {"actions", actions},
          {"min_humans", s.min_humans},
          {"max_humans", s.max_humans},
          {"human_width", s.human_width},
          {"human_height", s.human_height},
          {"distractor_size", s.distractor_size},
          {"max_distractors", s.max_distractors},
          {"distractor_rate", s.distractor_rate},
          {"secondary_action_rate", s.secondary_action_rate}};
}

synth::WorldSpec world_from_json(const json& j, synth::WorldSpec s) {
  if (!j.is_object()) throw ConfigError("world must be a JSON object");
  read_if(j, "image_width", s.image_width);
  read_if(j, "image_height", s.image_height);
  read_if(j, "num_categories", s.num_categories);
  read_if(j, "num_keypoints", s.num_keypoints);
  if (j.contains("actions")) {
    s.actions.clear();
    for (const auto& a : j.at("actions")) s.actions.push_back(action_from_json(a));
  }
  read_if(j, "min_humans", s.min_humans);
  read_if(j, "max_humans", s.max_humans);
  read_if(j, "human_width", s.human_width);
  read_if(j, "human_height", s.human_height);
  read_if(j, "distractor_size", s.distractor_size);
  read_if(j, "max_distractors", s.max_distractors);
  read_if(j, "distractor_rate", s.distractor_rate);
  read_if(j, "secondary_action_rate", s.secondary_action_rate);
  return s;
}

json model_to_json(const net::ModelConfig& c) {
  return {{"A", c.A},
          {"C", c.C},
          {"K", c.K},
          {"s", c.s},
          {"m", c.m},
          {"crop_size", c.crop_size},
          {"c_stem_hidden", c.c_stem_hidden},
          {"c_stem", c.c_stem},
          {"c_pose", c.c_pose},
          {"d_fc", c.d_fc},
          {"N", c.N},
          {"sigma", c.sigma},
          {"dropout", c.dropout},
          {"lambda_pose", c.lambda_pose},
          {"lambda_hoi", c.lambda_hoi},
          {"lambda_pose_bootstrap", c.lambda_pose_bootstrap},
          {"det_crop", c.det_crop},
          {"det_channels", c.det_channels},
          {"det_pool", c.det_pool},
          {"det_fc", c.det_fc},
          {"branches", net::branches_name(c.branches)}};
}

net::ModelConfig model_from_json(const json& j, net::ModelConfig c) {
  reject_unknown(j,
                 {"A", "C", "K", "s", "m", "crop_size", "c_stem_hidden", "c_stem", "c_pose", "d_fc", "N",
                  "sigma", "dropout", "lambda_pose", "lambda_hoi", "lambda_pose_bootstrap", "det_crop",
                  "det_channels", "det_pool", "det_fc", "branches"},
                 "model");
  read_if(j, "A", c.A);
  read_if(j, "C", c.C);
  read_if(j, "K", c.K);
  read_if(j, "s", c.s);
  read_if(j, "m", c.m);
  read_if(j, "crop_size", c.crop_size);
  read_if(j, "c_stem_hidden", c.c_stem_hidden);
  read_if(j, "c_stem", c.c_stem);
  read_if(j, "c_pose", c.c_pose);
  read_if(j, "d_fc", c.d_fc);
  read_if(j, "N", c.N);
  read_if(j, "sigma", c.sigma);
  read_if(j, "dropout", c.dropout);
  read_if(j, "lambda_pose", c.lambda_pose);
  read_if(j, "lambda_hoi", c.lambda_hoi);
  read_if(j, "lambda_pose_bootstrap", c.lambda_pose_bootstrap);
  read_if(j, "det_crop", c.det_crop);
  read_if(j, "det_channels", c.det_channels);
  read_if(j, "det_pool", c.det_pool);
  read_if(j, "det_fc", c.det_fc);
  std::string branches = net::branches_name(c.branches);
  read_if(j, "branches", branches);
  c.branches = net::branches_from_name(branches);
  return c;
}

json train_to_json(const train::TrainConfig& c) {
  json schedule = json::array();
  for (const auto& p : c.schedule) schedule.push_back({{"iterations", p.iterations}, {"lr", p.learning_rate}});
  return {{"model", model_to_json(c.model)},
          {"schedule", schedule},
          {"momentum", c.momentum},
          {"weight_decay", c.weight_decay},
          {"grad_clip", c.grad_clip},
          {"batch_size", c.batch_size},
          {"proposal_jitter", c.proposal_jitter},
          {"negative_proposals", c.negative_proposals},
          {"gate_iou", c.gate_iou},
          {"det_positive_iou", c.det_positive_iou},
          {"det_jitter", c.det_jitter},
          {"det_negatives", c.det_negatives},
          {"fixed_negatives", c.fixed_negatives},
          {"variant", c.variant},
          {"seed", c.seed}};
}

train::TrainConfig train_from_json(const json& j, train::TrainConfig c) {
  reject_unknown(j,
                 {"model", "schedule", "momentum", "weight_decay", "grad_clip", "batch_size",
                  "proposal_jitter", "negative_proposals", "gate_iou", "det_positive_iou", "det_jitter",
                  "det_negatives", "fixed_negatives", "variant", "seed"},
                 "train");
  if (j.contains("model")) c.model = model_from_json(j.at("model"), c.model);
  if (j.contains("schedule")) {
    const auto& s = j.at("schedule");
    if (!s.is_array()) throw ConfigError("schedule must be an array");
    c.schedule.clear();
    for (const auto& p : s) {
      reject_unknown(p, {"iterations", "lr"}, "schedule");
      train::LrPhase phase;
      read_if(p, "iterations", phase.iterations);
      read_if(p, "lr", phase.learning_rate);
      c.schedule.push_back(phase);
    }
  }
  read_if(j, "momentum", c.momentum);
  read_if(j, "weight_decay", c.weight_decay);
  read_if(j, "grad_clip", c.grad_clip);
  read_if(j, "batch_size", c.batch_size);
  read_if(j, "proposal_jitter", c.proposal_jitter);
  read_if(j, "negative_proposals", c.negative_proposals);
  read_if(j, "gate_iou", c.gate_iou);
  read_if(j, "det_positive_iou", c.det_positive_iou);
  read_if(j, "det_jitter", c.det_jitter);
  read_if(j, "det_negatives", c.det_negatives);
  read_if(j, "fixed_negatives", c.fixed_negatives);
  read_if(j, "variant", c.variant);
  read_if(j, "seed", c.seed);
  return c;
}

}  // namespace turbohoi
