#include "turbohoi/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <regex>

#include "json.hpp"
#include "turbohoi/error.hpp"
#include "turbohoi/ops.hpp"

namespace turbohoi::train {

namespace ops = ad::ops;
using net::ModelConfig;

namespace {

constexpr std::uint64_t kFixedNegativeStream = 0x6e6567;

std::size_t sz(int v) { return static_cast<std::size_t>(v); }

Box jitter(const Box& b, double sigma, Rng& rng) {
  if (sigma <= 0.0) return b;
  std::normal_distribution<double> n(0.0, sigma);
  Box out;
  out.x = b.x + b.w * n(rng);
  out.y = b.y + b.h * n(rng);
  out.w = b.w * std::exp(n(rng));
  out.h = b.h * std::exp(n(rng));
  return out;
}

Box random_box(const synth::Scene& scene, double lo, double hi, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Box b;
  b.w = lo + (hi - lo) * u(rng);
  b.h = lo + (hi - lo) * u(rng);
  b.x = (scene.width - b.w) * u(rng);
  b.y = (scene.height - b.h) * u(rng);
  return b;
}

Tensor sum_terms(const std::vector<Tensor>& terms) {
  if (terms.empty()) return Tensor::zeros({1});
  if (terms.size() == 1) return ops::reduce_sum(terms[0]);
  return ops::reduce_sum(ops::concat(terms, 0));
}

// Adds one proposal's gated pose and HOI terms, each scaled by `scale`.
void add_proposal_terms(const Unroll& u, const synth::Scene& scene, const Box& proposal,
                        const ModelConfig& model, double gate_iou, double scale, LossBreakdown& acc,
                        std::vector<Tensor>& terms) {
  const ProposalMatch match = match_proposal(proposal, scene);
  if (!match.human || match.iou < gate_iou) return;
  const synth::Human& gt = scene.humans[*match.human];
  if (u.bootstrap) {
    const Tensor l = pose_loss(*u.bootstrap, gt, proposal, model.m);
    acc.pose_bootstrap += scale * l.item();
    terms.push_back(ops::scalar_mul(l, scale * model.lambda_pose_bootstrap));
  }
  for (std::size_t i = 0; i < u.stages.size(); ++i) {
    const auto& st = u.stages[i];
    if (st.hoi) {
      const Tensor l = hoi_loss(*st.hoi, gt, scene, proposal);
      acc.hoi[i] += scale * l.item();
      terms.push_back(ops::scalar_mul(l, scale * model.lambda_hoi_at(static_cast<int>(i))));
    }
    if (st.pose) {
      const Tensor l = pose_loss(*st.pose, gt, proposal, model.m);
      acc.pose[i] += scale * l.item();
      terms.push_back(ops::scalar_mul(l, scale * model.lambda_pose_at(static_cast<int>(i))));
    }
  }
}

LossBreakdown empty_breakdown(const ModelConfig& cfg) {
  LossBreakdown b;
  b.hoi.assign(sz(cfg.N), 0.0);
  b.pose.assign(sz(cfg.N), 0.0);
  return b;
}

}  // namespace

std::string AblationVariant::name() const {
  switch (tag) {
    case Tag::kFull: return "full";
    case Tag::kNoPose: return "no_pose";
    case Tag::kMultiTask: return "multi_task";
    case Tag::kNoHoi: return "no_hoi";
    case Tag::kStages: return "stages(" + std::to_string(stages) + ")";
  }
  return "full";
}

AblationVariant AblationVariant::parse(const std::string& text) {
  if (text == "full") return {Tag::kFull, 0};
  if (text == "no_pose") return {Tag::kNoPose, 0};
  if (text == "multi_task") return {Tag::kMultiTask, 0};
  if (text == "no_hoi") return {Tag::kNoHoi, 0};
  static const std::regex stages_re(R"(stages\((-?\d+)\))");
  std::smatch m;
  if (std::regex_match(text, m, stages_re)) {
    const int n = std::stoi(m[1].str());
    if (n < 1) throw ConfigError("train.variant: stages(n) needs n >= 1");
    return {Tag::kStages, n};
  }
  throw ConfigError("train.variant: unknown variant '" + text + "'");
}

ModelConfig apply_variant(const AblationVariant& variant, ModelConfig base) {
  if (base.branches != net::Branches::kFull) {
    throw ConfigError(std::string("variant ") + variant.name() + " cannot be applied to a model whose branches are already '" +
                      net::branches_name(base.branches) + "'");
  }
  switch (variant.tag) {
    case AblationVariant::Tag::kFull: break;
    case AblationVariant::Tag::kNoPose:
      base.branches = net::Branches::kNoPose;
      base.N = 1;
      break;
    case AblationVariant::Tag::kMultiTask:
      base.branches = net::Branches::kMultiTask;
      base.N = 1;
      break;
    case AblationVariant::Tag::kNoHoi:
      base.branches = net::Branches::kNoHoi;
      base.N = 1;
      break;
    case AblationVariant::Tag::kStages:
      if (variant.stages < 1) throw ConfigError("variant stages(n) needs n >= 1");
      base.N = variant.stages;
      break;
  }
  if (base.N == 1) {
    if (base.lambda_pose.size() > 1) base.lambda_pose.resize(1);
    if (base.lambda_hoi.size() > 1) base.lambda_hoi.resize(1);
  }
  if (variant.tag == AblationVariant::Tag::kStages) {
    for (auto* list : {&base.lambda_pose, &base.lambda_hoi}) {
      if (list->size() > 1 && list->size() != sz(base.N)) {
        throw ConfigError("variant " + variant.name() + " conflicts with the per-stage lambda list length");
      }
    }
  }
  base.validate();
  return base;
}

int TrainConfig::total_iterations() const {
  int total = 0;
  for (const auto& p : schedule) total += p.iterations;
  return total;
}

double TrainConfig::learning_rate_at(int iteration) const {
  int end = 0;
  for (const auto& p : schedule) {
    end += p.iterations;
    if (iteration < end) return p.learning_rate;
  }
  return schedule.empty() ? 0.0 : schedule.back().learning_rate;
}

ModelConfig TrainConfig::effective_model() const { return apply_variant(AblationVariant::parse(variant), model); }

void TrainConfig::validate() const {
  if (schedule.empty()) throw ConfigError("train.schedule must not be empty");
  for (const auto& p : schedule) {
    if (p.iterations < 0) throw ConfigError("train.schedule iterations must be >= 0");
    if (!(p.learning_rate >= 0.0) || !std::isfinite(p.learning_rate)) {
      throw ConfigError("train.schedule learning rates must be finite and >= 0");
    }
  }
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("train.momentum must lie in [0,1)");
  if (weight_decay < 0.0) throw ConfigError("train.weight_decay must be >= 0");
  if (!(grad_clip >= 0.0)) throw ConfigError("train.grad_clip must be >= 0");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (proposal_jitter < 0.0) throw ConfigError("train.proposal_jitter must be >= 0");
  if (negative_proposals < 0) throw ConfigError("train.negative_proposals must be >= 0");
  if (!(gate_iou > 0.0 && gate_iou < 1.0)) throw ConfigError("train.gate_iou must lie in (0,1)");
  if (!(det_positive_iou > 0.0 && det_positive_iou < 1.0)) throw ConfigError("train.det_positive_iou must lie in (0,1)");
  if (det_jitter < 0.0) throw ConfigError("train.det_jitter must be >= 0");
  if (det_negatives < 0) throw ConfigError("train.det_negatives must be >= 0");
  effective_model();
}

net::StageOutput run_stage(const net::FeatureBundle& prev, const net::StageParams& params,
                           const ModelConfig& cfg, Rng* dropout_rng) {
  net::StageOutput out;
  if (params.hoi) {
    if (!prev.hoi) throw ShapeError("stage: HOI module needs previous HOI features");
    const net::PoseFeatures* pose = nullptr;
    if (cfg.hoi_sees_pose()) {
      if (!prev.pose) throw ShapeError("stage: HOI module needs previous pose features");
      pose = &*prev.pose;
    }
    out.hoi = net::hoi_module_forward(prev.F, pose, *prev.hoi, *params.hoi, cfg, dropout_rng);
  }
  if (params.pose) {
    if (!prev.pose) throw ShapeError("stage: pose module needs previous pose features");
    out.mask = params.mask && out.hoi ? net::attention_mask(out.hoi->features, *params.mask, cfg) : net::ones_mask(cfg);
    out.pose = net::pose_module_forward(prev.pose->P_mid, out.mask, *params.pose, cfg);
  }
  out.bundle.F = prev.F;
  out.bundle.pose = out.pose ? std::optional(out.pose->features) : prev.pose;
  out.bundle.hoi = out.hoi ? std::optional(out.hoi->features) : prev.hoi;
  return out;
}

Unroll unroll_forward(const Tensor& image, const Box& proposal, const net::Model& model, Rng* dropout_rng) {
  const ModelConfig& cfg = model.config();
  if (cfg.N < 1) throw ConfigError("model.N must be >= 1");
  Unroll u;
  u.F = net::stem_forward(net::crop_proposal(image, proposal, cfg.crop_size), model.stem, cfg);
  net::FeatureBundle bundle;
  bundle.F = u.F;
  if (model.bootstrap) {
    u.bootstrap = net::bootstrap_pose(u.F, *model.bootstrap, cfg);
    bundle.pose = u.bootstrap->features;
  }
  if (cfg.has_hoi()) bundle.hoi = net::zero_hoi_features(cfg);
  for (const auto& sp : model.stages) {
    u.stages.push_back(run_stage(bundle, sp, cfg, dropout_rng));
    bundle = u.stages.back().bundle;
  }
  return u;
}

ProposalMatch match_proposal(const Box& proposal, const synth::Scene& scene) {
  ProposalMatch best;
  for (std::size_t i = 0; i < scene.humans.size(); ++i) {
    const double v = geometry::iou(proposal, scene.humans[i].box);
    if (!best.human || v > best.iou) {
      best.human = i;
      best.iou = v;
    }
  }
  return best;
}

std::optional<std::size_t> keypoint_cell(const synth::Keypoint& kp, const Box& proposal, int m) {
  const double u = (kp.x - proposal.x) / proposal.w;
  const double v = (kp.y - proposal.y) / proposal.h;
  if (u < 0.0 || u > 1.0 || v < 0.0 || v > 1.0) return std::nullopt;
  const auto col = std::min(sz(m - 1), static_cast<std::size_t>(u * m));
  const auto row = std::min(sz(m - 1), static_cast<std::size_t>(v * m));
  return row * sz(m) + col;
}

double LossBreakdown::weighted_sum(const ModelConfig& cfg) const {
  double t = det;
  if (cfg.has_pose()) t += cfg.lambda_pose_bootstrap * pose_bootstrap;
  for (std::size_t i = 0; i < hoi.size(); ++i) {
    t += cfg.lambda_hoi_at(static_cast<int>(i)) * hoi[i];
    t += cfg.lambda_pose_at(static_cast<int>(i)) * pose[i];
  }
  return t;
}

Tensor hoi_loss(const net::HoiOutput& out, const synth::Human& gt, const synth::Scene& scene,
                const Box& proposal) {
  const std::size_t A = gt.actions.size();
  if (out.logits.numel() != A || gt.targets.size() != A) {
    throw ShapeError("hoi_loss: ground truth does not cover the " + std::to_string(out.logits.numel()) + " actions");
  }
  std::vector<double> labels(A), target(4 * A, 0.0), weight(4 * A, 0.0);
  bool any_offset = false;
  for (std::size_t a = 0; a < A; ++a) {
    labels[a] = gt.performs(a) ? 1.0 : 0.0;
    if (!gt.performs(a) || !gt.targets[a]) continue;
    if (*gt.targets[a] >= scene.objects.size()) throw ShapeError("hoi_loss: target object missing from the scene");
    const auto enc = geometry::encode_box_relative(scene.objects[*gt.targets[a]].box, proposal).as_array();
    for (std::size_t d = 0; d < 4; ++d) {
      target[4 * a + d] = enc[d];
      weight[4 * a + d] = 1.0;
    }
    any_offset = true;
  }
  Tensor loss = ops::reduce_mean(ops::sigmoid_cross_entropy(out.logits, Tensor::from({1, A}, labels)));
  if (any_offset) {
    const Tensor diff = ops::sub(out.mu, Tensor::from({1, 4 * A}, target));
    loss = ops::add(loss, ops::reduce_sum(ops::mul(ops::smooth_l1(diff), Tensor::from({1, 4 * A}, weight))));
  }
  return loss;
}

Tensor pose_loss(const net::PoseOutput& out, const synth::Human& gt, const Box& proposal, int m) {
  const std::size_t K = out.logits.shape()[0];
  if (gt.keypoints.size() != K) throw ShapeError("pose_loss: ground truth has the wrong keypoint count");
  std::vector<std::size_t> cells(K, 0);
  std::vector<double> weight(K, 0.0);
  std::size_t used = 0;
  for (std::size_t k = 0; k < K; ++k) {
    if (!gt.keypoints[k].visible) continue;
    const auto cell = keypoint_cell(gt.keypoints[k], proposal, m);
    if (!cell) continue;
    cells[k] = *cell;
    weight[k] = 1.0;
    ++used;
  }
  if (used == 0) return Tensor::zeros({1});
  for (double& w : weight) w /= static_cast<double>(used);
  const Tensor ce = ops::softmax_cross_entropy_one_hot(out.logits, cells);
  return ops::reduce_sum(ops::mul(ce, Tensor::from({K}, weight)));
}

DetTargets detection_targets(const std::vector<Box>& candidates, const synth::Scene& scene, int C,
                             double positive_iou) {
  DetTargets t;
  for (const Box& c : candidates) {
    std::optional<std::size_t> best;
    double best_iou = 0.0;
    for (std::size_t o = 0; o < scene.objects.size(); ++o) {
      const double v = geometry::iou(c, scene.objects[o].box);
      if (v > best_iou) {
        best = o;
        best_iou = v;
      }
    }
    if (best && best_iou >= positive_iou) {
      t.labels.push_back(static_cast<std::size_t>(scene.objects[*best].category));
      t.offsets.push_back(geometry::encode_box_relative(scene.objects[*best].box, c));
    } else {
      t.labels.push_back(sz(C));
      t.offsets.push_back(std::nullopt);
    }
  }
  return t;
}

Tensor detection_loss(const net::DetOutput& out, const DetTargets& targets) {
  const std::size_t R = targets.labels.size();
  Tensor loss = ops::reduce_mean(ops::softmax_cross_entropy_one_hot(out.class_logits, targets.labels));
  std::vector<double> target(4 * R, 0.0), weight(4 * R, 0.0);
  std::size_t positives = 0;
  for (std::size_t r = 0; r < R; ++r) {
    if (!targets.offsets[r]) continue;
    const auto enc = targets.offsets[r]->as_array();
    for (std::size_t d = 0; d < 4; ++d) {
      target[4 * r + d] = enc[d];
      weight[4 * r + d] = 1.0;
    }
    ++positives;
  }
  if (positives > 0) {
    for (double& w : weight) w /= static_cast<double>(positives);
    const Tensor diff = ops::sub(out.offsets, Tensor::from({R, 4}, target));
    loss = ops::add(loss, ops::reduce_sum(ops::mul(ops::smooth_l1(diff), Tensor::from({R, 4}, weight))));
  }
  return loss;
}

LossBreakdown total_loss(const Unroll* unroll, const synth::Scene& scene, const Box& proposal,
                         const net::DetOutput& det, const DetTargets& det_targets,
                         const TrainConfig& config) {
  const ModelConfig model = config.effective_model();
  LossBreakdown b = empty_breakdown(model);
  const Tensor det_loss = detection_loss(det, det_targets);
  b.det = det_loss.item();
  std::vector<Tensor> terms{det_loss};
  if (unroll != nullptr) add_proposal_terms(*unroll, scene, proposal, model, config.gate_iou, 1.0, b, terms);
  b.total = sum_terms(terms);
  return b;
}

std::string log_record_json(const LogRecord& r) {
  nlohmann::json j = {{"iteration", r.iteration}, {"lr", r.learning_rate}, {"total", r.total},
                      {"L_det", r.det},           {"L_pose_0", r.pose_bootstrap}, {"L_HOI", r.hoi},
                      {"L_pose", r.pose}};
  return j.dump();
}

SceneSamples sample_training_boxes(const synth::Scene& scene, const TrainConfig& config, Rng& rng) {
  SceneSamples s;
  for (const auto& h : scene.humans) s.proposals.push_back(jitter(h.box, config.proposal_jitter, rng));
  for (const auto& o : scene.objects) s.candidates.push_back(jitter(o.box, config.det_jitter, rng));
  Rng fixed(derive_seed(scene.seed, kFixedNegativeStream));
  Rng& neg = config.fixed_negatives ? fixed : rng;
  for (int i = 0; i < config.negative_proposals; ++i) s.proposals.push_back(random_box(scene, 10.0, 34.0, neg));
  for (int i = 0; i < config.det_negatives; ++i) s.candidates.push_back(random_box(scene, 4.0, 24.0, neg));
  return s;
}

LossBreakdown batch_loss(const net::Model& model, const std::vector<const synth::Scene*>& scenes,
                         const std::vector<SceneSamples>& samples, const TrainConfig& config,
                         Rng* dropout_rng) {
  const ModelConfig& cfg = model.config();
  LossBreakdown b = empty_breakdown(cfg);
  std::vector<Tensor> terms;
  const double scale = 1.0 / static_cast<double>(scenes.size());
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const synth::Scene& scene = *scenes[i];
    const Tensor image = net::image_tensor(scene.image, scene.width, scene.height);
    if (!samples[i].candidates.empty()) {
      const auto det = net::detection_forward(image, samples[i].candidates, model.det, cfg);
      const Tensor l = detection_loss(det, detection_targets(samples[i].candidates, scene, cfg.C, config.det_positive_iou));
      b.det += scale * l.item();
      terms.push_back(ops::scalar_mul(l, scale));
    }
    std::vector<const Box*> kept;
    for (const Box& proposal : samples[i].proposals) {
      const ProposalMatch match = match_proposal(proposal, scene);
      if (match.human && match.iou >= config.gate_iou) kept.push_back(&proposal);
    }
    for (const Box* proposal : kept) {
      const Unroll u = unroll_forward(image, *proposal, model, dropout_rng);
      const double share = scale / static_cast<double>(kept.size());
      add_proposal_terms(u, scene, *proposal, cfg, config.gate_iou, share, b, terms);
    }
  }
  b.total = sum_terms(terms);
  return b;
}

TrainState fresh_state(const net::Model& model, const TrainConfig& config) {
  TrainState s;
  s.optimizer = make_optimizer_state(model.params(), {config.learning_rate_at(0), config.momentum, config.weight_decay});
  return s;
}

std::vector<LogRecord> train(const TrainConfig& config, net::Model& model, TrainState& state,
                             const synth::Dataset& data, const TrainOptions& options) {
  config.validate();
  if (data.scenes.empty()) throw ConfigError("train: the training dataset is empty");
  if (!(model.config() == config.effective_model())) {
    throw CompatibilityError("train: model was built for a different configuration");
  }
  const int total = config.total_iterations();
  const int end = options.stop_after >= 0 ? std::min(total, options.stop_after) : total;
  std::vector<LogRecord> log;
  std::uniform_int_distribution<std::size_t> pick(0, data.scenes.size() - 1);
  for (int it = state.next_iteration; it < end; ++it) {
    Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(it)));
    std::vector<const synth::Scene*> batch;
    std::vector<SceneSamples> samples;
    for (int b = 0; b < config.batch_size; ++b) {
      const synth::Scene* scene = &data.scenes[pick(rng)];
      batch.push_back(scene);
      samples.push_back(sample_training_boxes(*scene, config, rng));
    }
    LossBreakdown loss = batch_loss(model, batch, samples, config, &rng);
    if (!std::isfinite(loss.total_value())) {
      throw NumericError("train: loss diverged at iteration " + std::to_string(it) +
                         "; last finite iteration " + std::to_string(it - 1));
    }
    model.params().zero_grad();
    ad::backward(loss.total);
    state.optimizer.settings.learning_rate = config.learning_rate_at(it);
    state.optimizer.settings.momentum = config.momentum;
    state.optimizer.settings.weight_decay = config.weight_decay;
    try {
      clip_grad_norm(model.params(), config.grad_clip);
      sgd_update(model.params(), state.optimizer);
    } catch (const NumericError& e) {
      throw NumericError("train: " + std::string(e.what()) + " at iteration " + std::to_string(it) +
                         "; last finite iteration " + std::to_string(it - 1));
    }

    LogRecord r{it, state.optimizer.settings.learning_rate, loss.total_value(), loss.det, loss.pose_bootstrap,
                loss.hoi, loss.pose};
    log.push_back(r);
    if (options.on_record) options.on_record(r);
    state.next_iteration = it + 1;
  }
  model.params().zero_grad();
  return log;
}

LossBreakdown inference_loss(const net::Model& model, const synth::Scene& scene, const TrainConfig& config) {
  SceneSamples s;
  for (const auto& h : scene.humans) s.proposals.push_back(h.box);
  for (const auto& o : scene.objects) s.candidates.push_back(o.box);
  Rng fixed(derive_seed(scene.seed, kFixedNegativeStream));
  for (int i = 0; i < config.negative_proposals; ++i) s.proposals.push_back(random_box(scene, 10.0, 34.0, fixed));
  for (int i = 0; i < config.det_negatives; ++i) s.candidates.push_back(random_box(scene, 4.0, 24.0, fixed));
  return batch_loss(model, {&scene}, {s}, config, nullptr);
}

}  // namespace turbohoi::train
