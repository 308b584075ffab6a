#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "turbohoi/geometry.hpp"
#include "turbohoi/parameters.hpp"
#include "turbohoi/rng.hpp"
#include "turbohoi/tensor.hpp"

namespace turbohoi::net {

using ad::Tensor;
using geometry::Box;

// Which branches exist and how they are wired.
enum class Branches {
  kFull,       // pose-aware HOI module plus HOI-guided pose module
  kNoPose,     // HOI module only, no keypoint input
  kMultiTask,  // both branches; pose features are not fed to the HOI module
  kNoHoi,      // pose module only, mask fixed to ones
};

const char* branches_name(Branches b);
Branches branches_from_name(const std::string& name);

struct ModelConfig {
  int A = 6;   // action classes
  int C = 4;   // object categories
  int K = 5;   // keypoints
  int s = 7;   // ROI feature size
  int m = 14;  // heatmap size
  int crop_size = 14;  // stem input resolution
  int c_stem_hidden = 8;
  int c_stem = 16;
  int c_pose = 16;
  int d_fc = 64;
  int N = 3;
  double sigma = 0.3;
  double dropout = 0.5;
  // Per-stage loss weights; an empty list means 1 for every stage, a single
  // value is broadcast.
  std::vector<double> lambda_pose;
  std::vector<double> lambda_hoi;
  double lambda_pose_bootstrap = 1.0;
  // Detection head.
  int det_crop = 8;
  int det_channels = 8;
  int det_pool = 4;
  int det_fc = 32;
  Branches branches = Branches::kFull;

  bool has_hoi() const { return branches != Branches::kNoHoi; }
  bool has_pose() const { return branches != Branches::kNoPose; }
  bool hoi_sees_pose() const { return branches == Branches::kFull; }
  bool uses_mask() const { return branches == Branches::kFull || branches == Branches::kMultiTask; }
  double lambda_pose_at(int stage) const;
  double lambda_hoi_at(int stage) const;
  // Width of the concatenated HOI module input.
  int hoi_input_width() const;

  // Throws ConfigError naming the field.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

struct StemParams {
  Tensor w1, b1, w2, b2;
};

struct HoiParams {
  Tensor fc_w, fc_b, act_w, act_b, off_w, off_b;
};

struct MaskParams {
  Tensor w, b;
};

struct PoseParams {
  Tensor w1, b1, w2, b2, kp_w, kp_b;
};

struct BootstrapParams {
  Tensor proj_w, proj_b;
  PoseParams pose;
};

struct DetParams {
  Tensor conv_w, conv_b, fc_w, fc_b, cls_w, cls_b, box_w, box_b;
};

struct StageParams {
  std::optional<HoiParams> hoi;
  std::optional<MaskParams> mask;
  std::optional<PoseParams> pose;
};

// Keypoint-branch features handed from one stage to the next.
struct PoseFeatures {
  Tensor P_mid;  // [c_pose, s, s]
  Tensor P_out;  // [1, 3K]: soft-argmax x, y and peak probability per keypoint
};

// HOI-branch features handed from one stage to the next.
struct HoiFeatures {
  Tensor H_mid;  // [1, d_fc]
  Tensor H_out;  // [1, 5A]: action scores then offsets
};

struct HoiOutput {
  Tensor logits;  // [1, A]
  Tensor s_a;     // [1, A]
  Tensor mu;      // [1, 4A]
  HoiFeatures features;
};

struct PoseOutput {
  Tensor logits;    // [K, m*m]
  Tensor heatmaps;  // [K, m*m], rows sum to one
  PoseFeatures features;
};

struct DetOutput {
  Tensor class_logits;  // [R, C+1], background is index C
  Tensor offsets;       // [R, 4], relative encoding of the object w.r.t. the candidate
};

struct FeatureBundle {
  Tensor F;
  std::optional<PoseFeatures> pose;
  std::optional<HoiFeatures> hoi;
};

struct StageOutput {
  std::optional<HoiOutput> hoi;
  Tensor mask;  // [1, s, s]; empty when there is no pose branch
  std::optional<PoseOutput> pose;
  FeatureBundle bundle;
};

// All learnable weights of one model, registered in a ParameterSet under
// stable names ("stem/conv1/w", "stage2/hoi/fc/w", ...).
class Model {
 public:
  // Weights use fan-in scaled uniform init seeded by init_seed; biases zero.
  Model(const ModelConfig& config, std::uint64_t init_seed);

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return config_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  StemParams stem;
  std::optional<BootstrapParams> bootstrap;
  std::vector<StageParams> stages;
  DetParams det;

 private:
  ModelConfig config_;
  ParameterSet params_;
};

// Image tensor [3, H, W] from a scene's pixel buffer.
Tensor image_tensor(const std::vector<double>& pixels, int width, int height);
// Bilinear crop of the proposal to [3, crop_size, crop_size].
Tensor crop_proposal(const Tensor& image, const Box& box, int crop_size);

// Two conv+relu layers and a resize to [c_stem, s, s].
Tensor stem_forward(const Tensor& crop, const StemParams& p, const ModelConfig& cfg);

// Fully connected layer on the concatenation [P_mid, P_out, F, H_mid, H_out]
// (pose parts omitted when pose is null), relu, dropout, then the action and
// offset heads. dropout_rng null means inference.
HoiOutput hoi_module_forward(const Tensor& F, const PoseFeatures* pose, const HoiFeatures& prev,
                             const HoiParams& p, const ModelConfig& cfg, Rng* dropout_rng);

// sigmoid(linear([H_mid, H_out])) reshaped to [1, s, s].
Tensor attention_mask(const HoiFeatures& f, const MaskParams& p, const ModelConfig& cfg);

// Modulates P_mid by the mask, two conv+relu layers, nearest upsampling to m,
// a 3x3 projection to K maps and a softmax over each map.
PoseOutput pose_module_forward(const Tensor& P_mid_prev, const Tensor& mask, const PoseParams& p,
                               const ModelConfig& cfg);

// Initial pose features: the pose module with mask = 1 on a conv projection of F.
PoseOutput bootstrap_pose(const Tensor& F, const BootstrapParams& p, const ModelConfig& cfg);

Tensor ones_mask(const ModelConfig& cfg);
HoiFeatures zero_hoi_features(const ModelConfig& cfg);

// One row of class logits and offsets per candidate box.
DetOutput detection_forward(const Tensor& image, const std::vector<Box>& candidates,
                            const DetParams& p, const ModelConfig& cfg);

}  // namespace turbohoi::net
