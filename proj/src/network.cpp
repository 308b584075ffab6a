#include "turbohoi/network.hpp"

#include <cmath>

#include "turbohoi/error.hpp"
#include "turbohoi/ops.hpp"

namespace turbohoi::net {

namespace ops = ad::ops;
using ad::Shape;

namespace {

constexpr double kReluGain = 6.0;
constexpr double kLinearGain = 3.0;

std::size_t sz(int v) { return static_cast<std::size_t>(v); }

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) { return ops::add(ops::matmul(x, w), b); }

Tensor flatten_row(const Tensor& x) { return ops::reshape(x, {1, x.numel()}); }

Tensor dropout(const Tensor& x, double rate, Rng* rng) {
  if (rng == nullptr || rate <= 0.0) return x;
  std::bernoulli_distribution keep(1.0 - rate);
  std::vector<double> mask(x.numel());
  for (double& v : mask) v = keep(*rng) ? 1.0 / (1.0 - rate) : 0.0;
  return ops::mul(x, Tensor::from(x.shape(), std::move(mask)));
}

bool power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

class Builder {
 public:
  Builder(ParameterSet& params, std::uint64_t seed) : params_(params), rng_(seed) {}

  Tensor weight(const std::string& name, Shape shape, std::size_t fan_in, double gain) {
    Tensor t = params_.add(name, std::move(shape));
    init_fan_in_uniform(t, fan_in, gain, rng_);
    return t;
  }
  Tensor bias(const std::string& name, Shape shape) { return params_.add(name, std::move(shape)); }

  void conv(const std::string& prefix, std::size_t ci, std::size_t co, Tensor& w, Tensor& b) {
    w = weight(prefix + "/w", {co, ci, 3, 3}, ci * 9, kReluGain);
    b = bias(prefix + "/b", {co});
  }
  void fc(const std::string& prefix, std::size_t in, std::size_t out, double gain, Tensor& w, Tensor& b) {
    w = weight(prefix + "/w", {in, out}, in, gain);
    b = bias(prefix + "/b", {out});
  }

  PoseParams pose(const std::string& prefix, const ModelConfig& cfg) {
    PoseParams p;
    conv(prefix + "/conv1", sz(cfg.c_pose), sz(cfg.c_pose), p.w1, p.b1);
    conv(prefix + "/conv2", sz(cfg.c_pose), sz(cfg.c_pose), p.w2, p.b2);
    p.kp_w = weight(prefix + "/keypoints/w", {sz(cfg.K), sz(cfg.c_pose), 3, 3}, sz(cfg.c_pose) * 9, kLinearGain);
    p.kp_b = bias(prefix + "/keypoints/b", {sz(cfg.K)});
    return p;
  }

 private:
  ParameterSet& params_;
  Rng rng_;
};

}  // namespace

const char* branches_name(Branches b) {
  switch (b) {
    case Branches::kFull: return "full";
    case Branches::kNoPose: return "no_pose";
    case Branches::kMultiTask: return "multi_task";
    case Branches::kNoHoi: return "no_hoi";
  }
  return "full";
}

Branches branches_from_name(const std::string& name) {
  for (Branches b : {Branches::kFull, Branches::kNoPose, Branches::kMultiTask, Branches::kNoHoi}) {
    if (name == branches_name(b)) return b;
  }
  throw ConfigError("model.branches: unknown value '" + name + "'");
}

double ModelConfig::lambda_pose_at(int stage) const {
  if (lambda_pose.empty()) return 1.0;
  return lambda_pose.size() == 1 ? lambda_pose[0] : lambda_pose.at(sz(stage));
}

double ModelConfig::lambda_hoi_at(int stage) const {
  if (lambda_hoi.empty()) return 1.0;
  return lambda_hoi.size() == 1 ? lambda_hoi[0] : lambda_hoi.at(sz(stage));
}

int ModelConfig::hoi_input_width() const {
  int w = c_stem * s * s + d_fc + 5 * A;
  if (hoi_sees_pose()) w += c_pose * s * s + 3 * K;
  return w;
}

void ModelConfig::validate() const {
  auto positive = [](int v, const char* field) {
    if (v <= 0) throw ConfigError(std::string("model.") + field + " must be positive");
  };
  positive(A, "A");
  positive(C, "C");
  positive(K, "K");
  positive(s, "s");
  positive(m, "m");
  positive(crop_size, "crop_size");
  positive(c_stem_hidden, "c_stem_hidden");
  positive(c_stem, "c_stem");
  positive(c_pose, "c_pose");
  positive(d_fc, "d_fc");
  positive(N, "N");
  positive(det_crop, "det_crop");
  positive(det_channels, "det_channels");
  positive(det_pool, "det_pool");
  positive(det_fc, "det_fc");
  if (m % s != 0 || !power_of_two(m / s)) {
    throw ConfigError("model.m must be s times a power of two (nearest upsampling doubles)");
  }
  if (!(sigma > 0.0)) throw ConfigError("model.sigma must be positive");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("model.dropout must lie in [0,1)");
  for (const auto* list : {&lambda_pose, &lambda_hoi}) {
    const char* field = list == &lambda_pose ? "lambda_pose" : "lambda_hoi";
    if (list->size() > 1 && list->size() != sz(N)) {
      throw ConfigError(std::string("model.") + field + " needs 1 or N entries");
    }
    for (double v : *list) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError(std::string("model.") + field + " must be finite and >= 0");
    }
  }
  if (!(lambda_pose_bootstrap >= 0.0)) throw ConfigError("model.lambda_pose_bootstrap must be >= 0");
  if (branches != Branches::kFull && N != 1) {
    throw ConfigError(std::string("model.N must be 1 for the ") + branches_name(branches) + " branches");
  }
}

Model::Model(const ModelConfig& config, std::uint64_t init_seed) : config_(config) {
  config_.validate();
  const ModelConfig& c = config_;
  Builder b(params_, init_seed);

  b.conv("stem/conv1", 3, sz(c.c_stem_hidden), stem.w1, stem.b1);
  b.conv("stem/conv2", sz(c.c_stem_hidden), sz(c.c_stem), stem.w2, stem.b2);

  if (c.has_pose()) {
    BootstrapParams bp;
    b.conv("bootstrap/proj", sz(c.c_stem), sz(c.c_pose), bp.proj_w, bp.proj_b);
    bp.pose = b.pose("bootstrap/pose", c);
    bootstrap = bp;
  }

  const std::size_t fa_width = sz(c.d_fc + 5 * c.A);
  for (int n = 0; n < c.N; ++n) {
    const std::string prefix = "stage" + std::to_string(n + 1);
    StageParams sp;
    if (c.has_hoi()) {
      HoiParams h;
      h.fc_w = b.weight(prefix + "/hoi/fc/w", {sz(c.hoi_input_width()), sz(c.d_fc)}, 1, kReluGain);
      h.fc_b = b.bias(prefix + "/hoi/fc/b", {sz(c.d_fc)});
      b.fc(prefix + "/hoi/action", sz(c.d_fc), sz(c.A), kLinearGain, h.act_w, h.act_b);
      b.fc(prefix + "/hoi/offset", sz(c.d_fc), sz(4 * c.A), kLinearGain, h.off_w, h.off_b);
      sp.hoi = h;
    }
    if (c.uses_mask()) {
      MaskParams mp;
      b.fc(prefix + "/mask", fa_width, sz(c.s * c.s), kLinearGain, mp.w, mp.b);
      sp.mask = mp;
    }
    if (c.has_pose()) sp.pose = b.pose(prefix + "/pose", c);
    stages.push_back(std::move(sp));
  }

  b.conv("det/conv", 3, sz(c.det_channels), det.conv_w, det.conv_b);
  b.fc("det/fc", sz(c.det_channels * c.det_pool * c.det_pool), sz(c.det_fc), kReluGain, det.fc_w, det.fc_b);
  b.fc("det/class", sz(c.det_fc), sz(c.C + 1), kLinearGain, det.cls_w, det.cls_b);
  b.fc("det/box", sz(c.det_fc), 4, kLinearGain, det.box_w, det.box_b);
}

Tensor image_tensor(const std::vector<double>& pixels, int width, int height) {
  return Tensor::from({3, sz(height), sz(width)}, pixels);
}

Tensor crop_proposal(const Tensor& image, const Box& box, int crop_size) {
  return ops::crop_resize(image, box.as_array(), sz(crop_size));
}

Tensor stem_forward(const Tensor& crop, const StemParams& p, const ModelConfig& cfg) {
  const Shape want{3, sz(cfg.crop_size), sz(cfg.crop_size)};
  if (crop.shape() != want) {
    throw ShapeError("stem: crop must be " + ad::to_string(want) + ", got " + ad::to_string(crop.shape()));
  }
  Tensor x = ops::relu(ops::conv2d(crop, p.w1, p.b1));
  x = ops::relu(ops::conv2d(x, p.w2, p.b2));
  const double c = cfg.crop_size;
  return ops::crop_resize(x, {0.0, 0.0, c, c}, sz(cfg.s));
}

HoiOutput hoi_module_forward(const Tensor& F, const PoseFeatures* pose, const HoiFeatures& prev,
                             const HoiParams& p, const ModelConfig& cfg, Rng* dropout_rng) {
  std::vector<Tensor> parts;
  if (pose != nullptr) {
    parts.push_back(flatten_row(pose->P_mid));
    parts.push_back(pose->P_out);
  }
  parts.push_back(flatten_row(F));
  parts.push_back(prev.H_mid);
  parts.push_back(prev.H_out);
  const Tensor h = ops::concat(parts, 1);

  HoiOutput out;
  Tensor hidden = ops::relu(linear(ops::scalar_mul(h, 1.0 / std::sqrt(static_cast<double>(h.numel()))), p.fc_w, p.fc_b));
  hidden = dropout(hidden, cfg.dropout, dropout_rng);
  out.logits = linear(hidden, p.act_w, p.act_b);
  out.s_a = ops::sigmoid(out.logits);
  out.mu = linear(hidden, p.off_w, p.off_b);
  out.features.H_mid = hidden;
  out.features.H_out = ops::concat({out.s_a, out.mu}, 1);
  return out;
}

Tensor attention_mask(const HoiFeatures& f, const MaskParams& p, const ModelConfig& cfg) {
  const Tensor in = ops::concat({f.H_mid, f.H_out}, 1);
  return ops::reshape(ops::sigmoid(linear(in, p.w, p.b)), {1, sz(cfg.s), sz(cfg.s)});
}

PoseOutput pose_module_forward(const Tensor& P_mid_prev, const Tensor& mask, const PoseParams& p,
                               const ModelConfig& cfg) {
  const Tensor modulated = ops::mul(P_mid_prev, mask);
  Tensor x = ops::relu(ops::conv2d(modulated, p.w1, p.b1));
  x = ops::relu(ops::conv2d(x, p.w2, p.b2));
  const Tensor P_mid = x;
  for (int size = cfg.s; size < cfg.m; size *= 2) x = ops::nearest_upsample(x);
  // A 3x3 projection rather than 1x1: after nearest upsampling only the
  // neighbourhood tells the pixels of one 2x2 block apart.
  const Tensor maps = ops::conv2d(x, p.kp_w, p.kp_b);

  PoseOutput out;
  out.logits = ops::reshape(maps, {sz(cfg.K), sz(cfg.m * cfg.m)});
  out.heatmaps = ops::softmax(out.logits);
  const Tensor summary = ops::soft_argmax_2d(maps);
  out.features.P_mid = P_mid;
  out.features.P_out = ops::reshape(summary, {1, sz(3 * cfg.K)});
  return out;
}

PoseOutput bootstrap_pose(const Tensor& F, const BootstrapParams& p, const ModelConfig& cfg) {
  const Tensor projected = ops::relu(ops::conv2d(F, p.proj_w, p.proj_b));
  return pose_module_forward(projected, ones_mask(cfg), p.pose, cfg);
}

Tensor ones_mask(const ModelConfig& cfg) { return Tensor::full({1, sz(cfg.s), sz(cfg.s)}, 1.0); }

HoiFeatures zero_hoi_features(const ModelConfig& cfg) {
  return {Tensor::zeros({1, sz(cfg.d_fc)}), Tensor::zeros({1, sz(5 * cfg.A)})};
}

DetOutput detection_forward(const Tensor& image, const std::vector<Box>& candidates,
                            const DetParams& p, const ModelConfig& cfg) {
  if (candidates.empty()) throw ShapeError("detection: needs at least one candidate");
  std::vector<Tensor> rows;
  rows.reserve(candidates.size());
  const double c = cfg.det_crop;
  for (const Box& box : candidates) {
    const Tensor crop = ops::crop_resize(image, box.as_array(), sz(cfg.det_crop));
    const Tensor x = ops::relu(ops::conv2d(crop, p.conv_w, p.conv_b));
    const Tensor pooled = ops::crop_resize(x, {0.0, 0.0, c, c}, sz(cfg.det_pool));
    rows.push_back(ops::relu(linear(flatten_row(pooled), p.fc_w, p.fc_b)));
  }
  const Tensor hidden = rows.size() == 1 ? rows[0] : ops::concat(rows, 0);
  return {linear(hidden, p.cls_w, p.cls_b), linear(hidden, p.box_w, p.box_b)};
}

}  // namespace turbohoi::net
