#include "turbohoi/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>

#include "turbohoi/error.hpp"
#include "turbohoi/ops.hpp"
#include "turbohoi/serialization.hpp"
#include "turbohoi/trainer.hpp"

namespace turbohoi::eval {

namespace {

constexpr double kMatchIou = 0.5;
constexpr std::uint64_t kCandidateStream = 0x63616e64;

// Reference to one ground-truth human.
struct GtRef {
  std::size_t scene;
  std::size_t human;
};

std::vector<std::size_t> score_order(const std::vector<TripletPrediction>& preds, std::size_t action) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i].action == action) idx.push_back(i);
  }
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return preds[a].score > preds[b].score; });
  return idx;
}

std::vector<GtRef> ground_truth(const std::vector<synth::Scene>& scenes, std::size_t action) {
  std::vector<GtRef> gts;
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    for (std::size_t h = 0; h < scenes[s].humans.size(); ++h) {
      if (scenes[s].humans[h].performs(action)) gts.push_back({s, h});
    }
  }
  return gts;
}

bool role_hit(const TripletPrediction& p, const synth::Scene& scene, const synth::Human& gt, std::size_t action) {
  if (!p.role || !gt.targets[action]) return false;
  return geometry::iou(*p.role, scene.objects[*gt.targets[action]].box) >= kMatchIou;
}

// Greedy assignment for one action: matched ground-truth index per ordered
// prediction, or nullopt.
std::vector<std::optional<std::size_t>> greedy_assign(const std::vector<TripletPrediction>& preds,
                                                      const std::vector<std::size_t>& order,
                                                      const std::vector<GtRef>& gts,
                                                      const std::vector<synth::Scene>& scenes) {
  std::vector<bool> used(gts.size(), false);
  std::vector<std::optional<std::size_t>> out;
  for (std::size_t i : order) {
    const auto& p = preds[i];
    std::optional<std::size_t> best;
    double best_iou = kMatchIou;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (used[g] || gts[g].scene != p.scene) continue;
      const double v = geometry::iou(p.human, scenes[gts[g].scene].humans[gts[g].human].box);
      if (v >= best_iou && (!best || v > best_iou)) {
        best = g;
        best_iou = v;
      }
    }
    if (best) used[*best] = true;
    out.push_back(best);
  }
  return out;
}

// Exhaustive search over one-to-one assignments, maximising the sequence of
// (matched, iou, -gt index) in score order.
std::vector<std::optional<std::size_t>> exhaustive_assign(const std::vector<TripletPrediction>& preds,
                                                          const std::vector<std::size_t>& order,
                                                          const std::vector<GtRef>& gts,
                                                          const std::vector<synth::Scene>& scenes) {
  using Key = std::vector<std::tuple<int, double, long>>;
  std::vector<std::optional<std::size_t>> current(order.size()), best_assign;
  Key best_key;
  bool have = false;
  std::vector<bool> used(gts.size(), false);
  std::function<void(std::size_t, Key&)> rec = [&](std::size_t k, Key& key) {
    if (k == order.size()) {
      if (!have || key > best_key) {
        best_key = key;
        best_assign = current;
        have = true;
      }
      return;
    }
    const auto& p = preds[order[k]];
    current[k] = std::nullopt;
    key.emplace_back(0, 0.0, 0);
    rec(k + 1, key);
    key.pop_back();
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (used[g] || gts[g].scene != p.scene) continue;
      const double v = geometry::iou(p.human, scenes[gts[g].scene].humans[gts[g].human].box);
      if (v < kMatchIou) continue;
      used[g] = true;
      current[k] = g;
      key.emplace_back(1, v, -static_cast<long>(g));
      rec(k + 1, key);
      key.pop_back();
      used[g] = false;
    }
    current[k] = std::nullopt;
  };
  Key key;
  rec(0, key);
  return best_assign;
}

using Assigner = std::vector<std::optional<std::size_t>> (*)(const std::vector<TripletPrediction>&,
                                                             const std::vector<std::size_t>&,
                                                             const std::vector<GtRef>&,
                                                             const std::vector<synth::Scene>&);

ActionAp evaluate(const std::vector<TripletPrediction>& preds, const std::vector<synth::Scene>& scenes,
                  std::size_t num_actions, const std::vector<bool>* role_actions, Assigner assign) {
  ActionAp out;
  out.per_action.assign(num_actions, std::nullopt);
  double sum = 0.0;
  std::size_t defined = 0;
  for (const auto& p : preds) {
    if (p.scene >= scenes.size() || p.action >= num_actions) {
      throw ConfigError("eval: prediction references an unknown scene or action");
    }
  }
  for (std::size_t a = 0; a < num_actions; ++a) {
    if (role_actions != nullptr && !(*role_actions)[a]) continue;
    const auto order = score_order(preds, a);
    const auto gts = ground_truth(scenes, a);
    out.predictions += order.size();
    out.ground_truths += gts.size();
    if (gts.empty()) continue;
    const auto assigned = assign(preds, order, gts, scenes);
    std::vector<ScoredMatch> matches;
    for (std::size_t k = 0; k < order.size(); ++k) {
      const auto& p = preds[order[k]];
      bool tp = assigned[k].has_value();
      if (tp && role_actions != nullptr) {
        const auto& g = gts[*assigned[k]];
        tp = role_hit(p, scenes[g.scene], scenes[g.scene].humans[g.human], a);
      }
      matches.push_back({p.score, tp});
    }
    const double ap = average_precision(std::move(matches), gts.size());
    out.per_action[a] = ap;
    sum += ap;
    ++defined;
  }
  if (defined > 0) out.mean = sum / static_cast<double>(defined);
  return out;
}

Box jitter_box(const Box& b, double sigma, Rng& rng) {
  if (sigma <= 0.0) return b;
  std::normal_distribution<double> n(0.0, sigma);
  return {b.x + b.w * n(rng), b.y + b.h * n(rng), b.w * std::exp(n(rng)), b.h * std::exp(n(rng))};
}

}  // namespace

double average_precision(std::vector<ScoredMatch> matches, std::size_t num_gt) {
  if (num_gt == 0) return 0.0;
  std::stable_sort(matches.begin(), matches.end(),
                   [](const ScoredMatch& a, const ScoredMatch& b) { return a.score > b.score; });
  std::vector<double> recall, precision;
  std::size_t tp = 0;
  for (std::size_t i = 0; i < matches.size(); ++i) {
    if (matches[i].tp) ++tp;
    recall.push_back(static_cast<double>(tp) / static_cast<double>(num_gt));
    precision.push_back(static_cast<double>(tp) / static_cast<double>(i + 1));
  }
  for (std::size_t i = precision.size(); i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double ap = 0.0, prev_recall = 0.0;
  for (std::size_t i = 0; i < recall.size(); ++i) {
    ap += (recall[i] - prev_recall) * precision[i];
    prev_recall = recall[i];
  }
  return std::clamp(ap, 0.0, 1.0);
}

ActionAp eval_agent(const std::vector<TripletPrediction>& predictions, const std::vector<synth::Scene>& scenes,
                    std::size_t num_actions) {
  return evaluate(predictions, scenes, num_actions, nullptr, &greedy_assign);
}

ActionAp eval_role(const std::vector<TripletPrediction>& predictions, const std::vector<synth::Scene>& scenes,
                   const std::vector<bool>& has_object) {
  return evaluate(predictions, scenes, has_object.size(), &has_object, &greedy_assign);
}

ActionAp brute_force_agent(const std::vector<TripletPrediction>& predictions,
                           const std::vector<synth::Scene>& scenes, std::size_t num_actions) {
  return evaluate(predictions, scenes, num_actions, nullptr, &exhaustive_assign);
}

ActionAp brute_force_role(const std::vector<TripletPrediction>& predictions,
                          const std::vector<synth::Scene>& scenes, const std::vector<bool>& has_object) {
  return evaluate(predictions, scenes, has_object.size(), &has_object, &exhaustive_assign);
}

std::optional<double> oks(const std::vector<synth::Keypoint>& predicted, const synth::Human& gt, double kappa) {
  if (predicted.size() != gt.keypoints.size()) throw ShapeError("oks: keypoint counts differ");
  const double denom = 2.0 * gt.box.area() * kappa * kappa;
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t k = 0; k < predicted.size(); ++k) {
    if (!gt.keypoints[k].visible) continue;
    const double dx = predicted[k].x - gt.keypoints[k].x;
    const double dy = predicted[k].y - gt.keypoints[k].y;
    sum += std::exp(-(dx * dx + dy * dy) / denom);
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

KeypointAp eval_keypoints(const std::vector<PosePrediction>& predictions, const std::vector<synth::Scene>& scenes,
                          double oks_threshold) {
  KeypointAp out;
  out.predictions = predictions.size();
  std::vector<std::vector<bool>> used(scenes.size());
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    used[s].assign(scenes[s].humans.size(), false);
    for (const auto& h : scenes[s].humans) {
      if (std::any_of(h.keypoints.begin(), h.keypoints.end(), [](const auto& k) { return k.visible; })) {
        ++out.ground_truths;
      }
    }
  }
  std::vector<std::size_t> order(predictions.size());
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return predictions[a].score > predictions[b].score; });
  std::vector<ScoredMatch> matches;
  for (std::size_t i : order) {
    const auto& p = predictions[i];
    if (p.scene >= scenes.size()) throw ConfigError("eval: pose prediction references an unknown scene");
    const auto& scene = scenes[p.scene];
    std::optional<std::size_t> best;
    double best_oks = oks_threshold;
    for (std::size_t h = 0; h < scene.humans.size(); ++h) {
      if (used[p.scene][h]) continue;
      const auto v = oks(p.keypoints, scene.humans[h]);
      if (v && *v >= best_oks && (!best || *v > best_oks)) {
        best = h;
        best_oks = *v;
      }
    }
    if (best) used[p.scene][*best] = true;
    matches.push_back({p.score, best.has_value()});
  }
  out.ap = average_precision(std::move(matches), out.ground_truths);
  return out;
}

PosePrediction decode_pose(const net::PoseOutput& pose, const Box& human, int m, std::size_t scene) {
  PosePrediction p;
  p.scene = scene;
  p.human = human;
  const auto probs = pose.heatmaps.values();
  const std::size_t cells = static_cast<std::size_t>(m) * static_cast<std::size_t>(m);
  const std::size_t K = probs.size() / cells;
  double total = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    const auto* row = probs.data() + k * cells;
    const std::size_t arg = static_cast<std::size_t>(std::max_element(row, row + cells) - row);
    const double col = static_cast<double>(arg % static_cast<std::size_t>(m));
    const double r = static_cast<double>(arg / static_cast<std::size_t>(m));
    p.keypoints.push_back({human.x + (col + 0.5) / m * human.w, human.y + (r + 0.5) / m * human.h, true});
    total += row[arg];
  }
  p.score = K > 0 ? total / static_cast<double>(K) : 0.0;
  return p;
}

SceneDetections detect_objects(const net::Model& model, const synth::Scene& scene, const EvalOptions& options,
                               std::size_t scene_index) {
  const auto& cfg = model.config();
  Rng rng(derive_seed(options.seed, kCandidateStream, scene_index));
  std::vector<Box> boxes;
  for (const auto& o : scene.objects) boxes.push_back(jitter_box(o.box, options.candidate_jitter, rng));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < options.random_candidates; ++i) {
    Box b;
    b.w = 4.0 + 20.0 * u(rng);
    b.h = 4.0 + 20.0 * u(rng);
    b.x = (scene.width - b.w) * u(rng);
    b.y = (scene.height - b.h) * u(rng);
    boxes.push_back(b);
  }
  SceneDetections out;
  if (boxes.empty()) return out;
  const auto image = net::image_tensor(scene.image, scene.width, scene.height);
  const auto det = net::detection_forward(image, boxes, model.det, cfg);
  const auto probs = ad::ops::softmax(det.class_logits).values();
  const auto offsets = det.offsets.values();
  const std::size_t classes = static_cast<std::size_t>(cfg.C) + 1;
  for (std::size_t r = 0; r < boxes.size(); ++r) {
    const double* p = probs.data() + r * classes;
    const double object = 1.0 - p[cfg.C];
    if (object < options.object_threshold) continue;
    const double best = *std::max_element(p, p + cfg.C);
    const auto enc = geometry::RelEncoding::from(std::span<const double>(offsets.data() + 4 * r, 4));
    const Box refined = geometry::decode_box_relative(enc, boxes[r]);
    if (!refined.valid() || !std::isfinite(refined.x) || !std::isfinite(refined.y)) continue;
    out.candidates.push_back({out.candidates.size(), refined, best});
  }
  return out;
}

std::vector<StageReport> run_report(const net::Model& model, const synth::Dataset& data, const std::string& variant,
                                    const std::vector<bool>& has_object, const EvalOptions& options) {
  const auto& cfg = model.config();
  const std::size_t A = static_cast<std::size_t>(cfg.A);
  if (has_object.size() != A || static_cast<int>(data.spec.actions.size()) != cfg.A ||
      data.spec.num_keypoints != cfg.K || data.spec.num_categories != cfg.C) {
    throw CompatibilityError("eval: dataset world (A=" + std::to_string(data.spec.actions.size()) +
                             ", K=" + std::to_string(data.spec.num_keypoints) + ", C=" +
                             std::to_string(data.spec.num_categories) + ") does not match the model (A=" +
                             std::to_string(cfg.A) + ", K=" + std::to_string(cfg.K) + ", C=" +
                             std::to_string(cfg.C) + ")");
  }
  const std::size_t N = static_cast<std::size_t>(cfg.N);
  std::vector<std::vector<TripletPrediction>> agent(N), role(N);
  std::vector<std::vector<PosePrediction>> poses(N);

  for (std::size_t s = 0; s < data.scenes.size(); ++s) {
    const auto& scene = data.scenes[s];
    if (options.ground_truth_oracle) {
      for (const auto& h : scene.humans) {
        for (std::size_t n = 0; n < N; ++n) {
          for (std::size_t a = 0; a < A; ++a) {
            if (!h.performs(a)) continue;
            std::optional<Box> target;
            if (h.targets[a]) target = scene.objects[*h.targets[a]].box;
            agent[n].push_back({s, h.box, a, 1.0, std::nullopt});
            role[n].push_back({s, h.box, a, 1.0, target});
          }
          poses[n].push_back({s, h.box, h.keypoints, 1.0});
        }
      }
      continue;
    }
    const auto image = net::image_tensor(scene.image, scene.width, scene.height);
    SceneDetections dets;
    if (cfg.has_hoi()) dets = detect_objects(model, scene, options, s);
    for (const auto& h : scene.humans) {
      const auto u = train::unroll_forward(image, h.box, model, nullptr);
      for (std::size_t n = 0; n < N; ++n) {
        const auto& st = u.stages[n];
        if (st.hoi) {
          const auto s_a = st.hoi->s_a.values();
          const auto mu = st.hoi->mu.values();
          for (std::size_t a = 0; a < A; ++a) {
            agent[n].push_back({s, h.box, a, s_a[a], std::nullopt});
            if (!has_object[a]) continue;
            const auto m = geometry::RelEncoding::from(std::span<const double>(mu.data() + 4 * a, 4));
            const auto sel = geometry::select_target(dets.candidates, m, h.box, cfg.sigma);
            if (sel) {
              role[n].push_back({s, h.box, a, s_a[a] * sel->score * sel->detection_score, sel->box});
            } else {
              role[n].push_back({s, h.box, a, s_a[a], std::nullopt});
            }
          }
        }
        if (st.pose) poses[n].push_back(decode_pose(*st.pose, h.box, cfg.m, s));
      }
    }
  }

  const std::string dfp = dataset_fingerprint(data);
  const std::string cfp = fingerprint(model_to_json(cfg).dump());
  std::vector<StageReport> reports;
  for (std::size_t n = 0; n < N; ++n) {
    StageReport r;
    r.stage = static_cast<int>(n + 1);
    r.variant = variant;
    r.dataset_fingerprint = dfp;
    r.config_fingerprint = cfp;
    if (cfg.has_hoi() || options.ground_truth_oracle) {
      r.agent = eval_agent(agent[n], data.scenes, A);
      r.role = eval_role(role[n], data.scenes, has_object);
    }
    if (cfg.has_pose() || options.ground_truth_oracle) r.keypoints = eval_keypoints(poses[n], data.scenes);
    reports.push_back(std::move(r));
  }
  return reports;
}

std::string fingerprint(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string dataset_fingerprint(const synth::Dataset& data) {
  std::string text = world_to_json(data.spec).dump();
  for (const auto& s : data.scenes) text += "," + std::to_string(s.seed);
  return fingerprint(text);
}

}  // namespace turbohoi::eval
