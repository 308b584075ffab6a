#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "turbohoi/network.hpp"
#include "turbohoi/synth_world.hpp"

namespace turbohoi::eval {

using geometry::Box;

struct TripletPrediction {
  std::size_t scene = 0;
  Box human;
  std::size_t action = 0;
  double score = 0.0;
  std::optional<Box> role;
};

struct PosePrediction {
  std::size_t scene = 0;
  Box human;
  std::vector<synth::Keypoint> keypoints;
  double score = 0.0;
};

struct ScoredMatch {
  double score = 0.0;
  bool tp = false;
};

// All-points interpolated AP. Sorted by descending score, ties keep input
// order. Zero when there is no ground truth.
double average_precision(std::vector<ScoredMatch> matches, std::size_t num_gt);

// Per-action AP; nullopt for actions without ground truth (or excluded ones),
// and the mean over the defined entries.
struct ActionAp {
  std::vector<std::optional<double>> per_action;
  std::optional<double> mean;
  std::size_t predictions = 0;
  std::size_t ground_truths = 0;
};

// Greedy matching per action in descending score order: a prediction takes
// the unmatched ground-truth human with the highest IoU >= 0.5 that performs
// the action (ties to the lower index).
ActionAp eval_agent(const std::vector<TripletPrediction>& predictions,
                    const std::vector<synth::Scene>& scenes, std::size_t num_actions);

// As eval_agent, and the role box must also reach IoU >= 0.5 with the matched
// human's target. Actions without objects are left out.
ActionAp eval_role(const std::vector<TripletPrediction>& predictions,
                   const std::vector<synth::Scene>& scenes, const std::vector<bool>& has_object);

inline constexpr double kOksKappa = 0.1;

// Mean over the ground truth's visible keypoints of exp(-d^2 / (2 area kappa^2))
// with area the ground-truth box area; nullopt when none is visible.
std::optional<double> oks(const std::vector<synth::Keypoint>& predicted, const synth::Human& gt,
                          double kappa = kOksKappa);

struct KeypointAp {
  double ap = 0.0;
  std::size_t predictions = 0;
  std::size_t ground_truths = 0;
};

// Humans without visible keypoints are not counted as ground truth.
KeypointAp eval_keypoints(const std::vector<PosePrediction>& predictions,
                          const std::vector<synth::Scene>& scenes, double oks_threshold = 0.5);

// Exhaustive reference for the agent and role matching: enumerates every
// one-to-one assignment and keeps the lexicographically best one in score
// order. Exponential; for small instances only.
ActionAp brute_force_agent(const std::vector<TripletPrediction>& predictions,
                           const std::vector<synth::Scene>& scenes, std::size_t num_actions);
ActionAp brute_force_role(const std::vector<TripletPrediction>& predictions,
                          const std::vector<synth::Scene>& scenes, const std::vector<bool>& has_object);

struct EvalOptions {
  bool ground_truth_oracle = false;
  double candidate_jitter = 0.1;
  int random_candidates = 3;
  double object_threshold = 0.5;
  std::uint64_t seed = 0;
};

struct StageReport {
  int stage = 0;
  std::string variant;
  std::optional<ActionAp> agent;
  std::optional<ActionAp> role;
  std::optional<KeypointAp> keypoints;
  std::string dataset_fingerprint;
  std::string config_fingerprint;
};

// Hard argmax of each heatmap (ties to the lowest cell) mapped back into the
// box, and the mean peak probability as the score.
PosePrediction decode_pose(const net::PoseOutput& pose, const Box& human, int m, std::size_t scene);

struct SceneDetections {
  std::vector<geometry::Candidate> candidates;
};
// Candidate boxes (the ground-truth objects jittered plus random boxes) run
// through the detection head; those whose object probability reaches the
// threshold are kept with their refined box and best class probability.
SceneDetections detect_objects(const net::Model& model, const synth::Scene& scene,
                               const EvalOptions& options, std::size_t scene_index);

// One report per stage. Ground-truth human boxes serve as the proposals.
std::vector<StageReport> run_report(const net::Model& model, const synth::Dataset& data,
                                    const std::string& variant, const std::vector<bool>& has_object,
                                    const EvalOptions& options = {});

std::string dataset_fingerprint(const synth::Dataset& data);
std::string fingerprint(const std::string& text);

}  // namespace turbohoi::eval
