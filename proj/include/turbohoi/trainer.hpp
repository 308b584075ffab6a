#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "turbohoi/network.hpp"
#include "turbohoi/optimizer.hpp"
#include "turbohoi/synth_world.hpp"

namespace turbohoi::train {

using ad::Tensor;
using geometry::Box;

struct AblationVariant {
  enum class Tag { kFull, kNoPose, kMultiTask, kNoHoi, kStages };
  Tag tag = Tag::kFull;
  int stages = 0;  // only for kStages

  // "full", "no_pose", "multi_task", "no_hoi" or "stages(n)".
  std::string name() const;
  static AblationVariant parse(const std::string& text);

  bool operator==(const AblationVariant&) const = default;
};

// The model config a variant trains. The input must describe the full model;
// anything else (or stages(n) with n < 1) is rejected as contradictory.
net::ModelConfig apply_variant(const AblationVariant& variant, net::ModelConfig base);

struct LrPhase {
  int iterations = 0;
  double learning_rate = 0.0;

  bool operator==(const LrPhase&) const = default;
};

struct TrainConfig {
  net::ModelConfig model;
  std::vector<LrPhase> schedule{{2000, 1e-3}, {600, 1e-4}};
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double grad_clip = 0.0;  // global gradient norm limit, 0 disables
  int batch_size = 4;
  double proposal_jitter = 0.1;  // std-dev as a fraction of the box extent
  int negative_proposals = 1;    // random human proposals per scene
  double gate_iou = 0.5;
  double det_positive_iou = 0.5;
  double det_jitter = 0.1;
  int det_negatives = 2;
  // Draw the negative proposals and candidates from the scene seed instead of
  // the iteration, so every visit of a scene sees the same boxes.
  bool fixed_negatives = false;
  std::string variant = "full";
  std::uint64_t seed = 0;

  int total_iterations() const;
  double learning_rate_at(int iteration) const;
  // Model config after the variant is applied.
  net::ModelConfig effective_model() const;
  void validate() const;

  bool operator==(const TrainConfig&) const = default;
};

// Everything the stages produce for one human proposal.
struct Unroll {
  Tensor F;
  std::optional<net::PoseOutput> bootstrap;
  std::vector<net::StageOutput> stages;
};

// One stage: consumes exactly (F, previous pose features, previous HOI
// features) and emits the next bundle.
net::StageOutput run_stage(const net::FeatureBundle& prev, const net::StageParams& params,
                           const net::ModelConfig& cfg, Rng* dropout_rng);

Unroll unroll_forward(const Tensor& image, const Box& proposal, const net::Model& model,
                      Rng* dropout_rng);

// Best-overlapping ground-truth human; nullopt when the scene has none.
struct ProposalMatch {
  std::optional<std::size_t> human;
  double iou = 0.0;
};
ProposalMatch match_proposal(const Box& proposal, const synth::Scene& scene);

// Heatmap cell of a keypoint inside the proposal, row-major over m x m;
// nullopt when the keypoint lies outside the proposal.
std::optional<std::size_t> keypoint_cell(const synth::Keypoint& kp, const Box& proposal, int m);

// Per-term values of one loss evaluation. hoi[i] and pose[i] are the raw
// stage-i terms; total weighs them with the per-stage lambdas.
struct LossBreakdown {
  Tensor total;
  double det = 0.0;
  double pose_bootstrap = 0.0;
  std::vector<double> hoi;
  std::vector<double> pose;

  double total_value() const { return total.item(); }
  // Recomputes the weighted sum from the logged terms.
  double weighted_sum(const net::ModelConfig& cfg) const;
};

Tensor hoi_loss(const net::HoiOutput& out, const synth::Human& gt, const synth::Scene& scene,
                const Box& proposal);
Tensor pose_loss(const net::PoseOutput& out, const synth::Human& gt, const Box& proposal, int m);

struct DetTargets {
  std::vector<std::size_t> labels;  // category, or C for background
  std::vector<std::optional<geometry::RelEncoding>> offsets;  // positives only
};
DetTargets detection_targets(const std::vector<Box>& candidates, const synth::Scene& scene, int C,
                             double positive_iou);
Tensor detection_loss(const net::DetOutput& out, const DetTargets& targets);

// Loss for one proposal plus the scene's detection term. The proposal terms
// are dropped entirely when its IoU with the best human is below the gate.
LossBreakdown total_loss(const Unroll* unroll, const synth::Scene& scene, const Box& proposal,
                         const net::DetOutput& det, const DetTargets& det_targets,
                         const TrainConfig& config);

struct LogRecord {
  int iteration = 0;
  double learning_rate = 0.0;
  double total = 0.0;
  double det = 0.0;
  double pose_bootstrap = 0.0;
  std::vector<double> hoi;
  std::vector<double> pose;

  bool operator==(const LogRecord&) const = default;
};
std::string log_record_json(const LogRecord& r);

// The human proposals and detection candidates a training iteration uses.
struct SceneSamples {
  std::vector<Box> proposals;
  std::vector<Box> candidates;
};
SceneSamples sample_training_boxes(const synth::Scene& scene, const TrainConfig& config, Rng& rng);

// Batch-mean loss of the given scenes; dropout_rng null means inference mode.
// Proposals whose IoU is below the gate skip the forward pass.
LossBreakdown batch_loss(const net::Model& model, const std::vector<const synth::Scene*>& scenes,
                         const std::vector<SceneSamples>& samples, const TrainConfig& config,
                         Rng* dropout_rng);

struct TrainOptions {
  // Stop after this many iterations in total (for interrupt tests); -1 runs
  // the whole schedule.
  int stop_after = -1;
  // Called after every iteration with its log record.
  std::function<void(const LogRecord&)> on_record;
};

struct TrainState {
  OptimizerState optimizer;
  int next_iteration = 0;
};

TrainState fresh_state(const net::Model& model, const TrainConfig& config);

// SGD with momentum over the schedule starting at state.next_iteration.
// Every iteration draws its randomness from derive_seed(seed, iteration), so
// a resumed run matches an uninterrupted one. Throws NumericError naming the
// last finite iteration if the loss diverges.
std::vector<LogRecord> train(const TrainConfig& config, net::Model& model, TrainState& state,
                             const synth::Dataset& data, const TrainOptions& options = {});

// Loss of the scene with noiseless proposals (the ground-truth humans) in
// inference mode.
LossBreakdown inference_loss(const net::Model& model, const synth::Scene& scene,
                             const TrainConfig& config);

}  // namespace turbohoi::train
