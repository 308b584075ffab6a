#include "turbohoi/synth_world.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include "turbohoi/error.hpp"
#include "turbohoi/serialization.hpp"

namespace turbohoi::synth {

namespace {

constexpr int kHumanPlacementTries = 50;
constexpr int kHumanSampleTries = 20;
constexpr double kMaxHumanOverlap = 0.3;
constexpr double kBlobSigma = 1.0;
constexpr double kBlobRadius = 3.0;
constexpr double kBodyIntensity = 0.35;
constexpr double kBlobIntensity = 0.65;

std::array<double, 2> category_code(int category, int num_categories) {
  const double t = static_cast<double>(category + 1) / static_cast<double>(num_categories);
  return {t, 1.0 - static_cast<double>(category) / static_cast<double>(num_categories)};
}

std::size_t sample_weighted(Rng& rng, const std::vector<double>& weights) {
  std::discrete_distribution<std::size_t> dist(weights.begin(), weights.end());
  return dist(rng);
}

// Interval [lo, hi] of human corner positions along one axis that keeps every
// extent [corner + offset, corner + offset + size) inside [0, limit].
struct Span1d {
  double lo;
  double hi;
};

Span1d feasible(double limit, double human_size,
                const std::vector<std::pair<double, double>>& extents) {
  Span1d s{0.0, limit - human_size};
  for (const auto& [offset, size] : extents) {
    s.lo = std::max(s.lo, -offset);
    s.hi = std::min(s.hi, limit - offset - size);
  }
  return s;
}

struct PendingObject {
  RelEncoding enc;
  int category;
  std::size_t action;
};

}  // namespace

void WorldSpec::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ConfigError("world." + field + " " + why);
  };
  if (image_width <= 0) fail("image_width", "must be positive");
  if (image_height <= 0) fail("image_height", "must be positive");
  if (num_categories <= 0) fail("num_categories", "must be positive");
  if (num_keypoints <= 0) fail("num_keypoints", "must be positive");
  if (actions.empty()) fail("actions", "must define at least one action (A > 0)");
  if (min_humans < 1 || max_humans < min_humans) fail("min_humans/max_humans", "need 1 <= min <= max");
  if (!(human_width[0] > 0.0 && human_width[1] >= human_width[0])) fail("human_width", "needs 0 < lo <= hi");
  if (!(human_height[0] > 0.0 && human_height[1] >= human_height[0])) fail("human_height", "needs 0 < lo <= hi");
  if (human_width[1] > image_width || human_height[1] > image_height) fail("human_width/human_height", "exceed the image");
  if (!(distractor_size[0] > 0.0 && distractor_size[1] >= distractor_size[0])) fail("distractor_size", "needs 0 < lo <= hi");
  if (max_distractors < 0) fail("max_distractors", "must be >= 0");
  if (distractor_rate < 0.0 || distractor_rate > 1.0) fail("distractor_rate", "must lie in [0,1]");
  if (secondary_action_rate < 0.0 || secondary_action_rate > 1.0) fail("secondary_action_rate", "must lie in [0,1]");
  bool any_object = false, any_plain = false;
  for (std::size_t a = 0; a < actions.size(); ++a) {
    const auto& act = actions[a];
    const std::string f = "actions[" + std::to_string(a) + "].";
    (act.has_object ? any_object : any_plain) = true;
    if (act.has_object) {
      if (static_cast<int>(act.category_weights.size()) != num_categories) {
        fail(f + "category_weights", "needs one weight per category");
      }
      double total = 0.0;
      for (double w : act.category_weights) {
        if (w < 0.0) fail(f + "category_weights", "must be non-negative");
        total += w;
      }
      if (!(total > 0.0)) fail(f + "category_weights", "must not all be zero");
    }
    for (double v : act.mean_offset.as_array()) {
      if (!std::isfinite(v)) fail(f + "mean_offset", "must be finite");
    }
    if (act.offset_noise < 0.0) fail(f + "offset_noise", "must be >= 0");
    if (act.template_noise < 0.0) fail(f + "template_noise", "must be >= 0");
    if (act.visibility_dropout < 0.0 || act.visibility_dropout > 1.0) fail(f + "visibility_dropout", "must lie in [0,1]");
    if (static_cast<int>(act.keypoint_template.size()) != num_keypoints) {
      fail(f + "keypoint_template", "needs num_keypoints points");
    }
    for (const auto& p : act.keypoint_template) {
      if (p[0] < 0.0 || p[0] > 1.0 || p[1] < 0.0 || p[1] > 1.0) fail(f + "keypoint_template", "points must lie in the unit box");
    }
    if (act.contact_keypoint < -1 || act.contact_keypoint >= num_keypoints) fail(f + "contact_keypoint", "out of range");
    for (int c : act.compatible) {
      if (c < 0 || c >= num_actions() || c == static_cast<int>(a)) fail(f + "compatible", "names an invalid action");
    }
  }
  if (!any_object || !any_plain) {
    throw ConfigError("world.actions needs at least one action with an object and one without");
  }
}

WorldSpec WorldSpec::synth_hoi_v1() {
  WorldSpec w;
  // Keypoints: head, left hand, right hand, left foot, right foot.
  using T = std::vector<std::array<double, 2>>;
  const T stand{{0.5, 0.1}, {0.15, 0.5}, {0.85, 0.5}, {0.3, 0.95}, {0.7, 0.95}};
  auto action = [](std::string name, T tmpl) {
    ActionDef a;
    a.name = std::move(name);
    a.keypoint_template = std::move(tmpl);
    a.template_noise = 0.03;
    a.visibility_dropout = 0.1;
    return a;
  };
  ActionDef stand_a = action("stand", stand);
  stand_a.compatible = {2, 5};

  ActionDef wave = action("wave", {{0.5, 0.1}, {0.15, 0.5}, {0.9, 0.08}, {0.3, 0.95}, {0.7, 0.95}});
  wave.compatible = {3, 4};

  ActionDef hold = action("hold", {{0.5, 0.1}, {0.15, 0.5}, {0.9, 0.5}, {0.3, 0.95}, {0.7, 0.95}});
  hold.has_object = true;
  hold.category_weights = {0.6, 0.4, 0.0, 0.0};
  hold.mean_offset = {0.75, 0.4, std::log(0.5), std::log(0.25)};
  hold.offset_noise = 0.08;
  hold.contact_keypoint = 2;
  hold.compatible = {0, 4};

  ActionDef kick = action("kick", {{0.45, 0.1}, {0.1, 0.45}, {0.85, 0.4}, {0.3, 0.95}, {0.85, 0.8}});
  kick.has_object = true;
  kick.category_weights = {0.0, 0.0, 0.7, 0.3};
  kick.mean_offset = {0.7, 0.8, std::log(0.6), std::log(0.2)};
  kick.offset_noise = 0.08;
  kick.contact_keypoint = 4;
  kick.compatible = {1};

  ActionDef ride = action("ride", {{0.5, 0.1}, {0.2, 0.4}, {0.8, 0.4}, {0.1, 0.8}, {0.9, 0.8}});
  ride.has_object = true;
  ride.category_weights = {0.0, 0.4, 0.0, 0.6};
  ride.mean_offset = {-0.2, 0.6, std::log(1.4), std::log(0.4)};
  ride.offset_noise = 0.08;
  ride.contact_keypoint = 3;
  ride.compatible = {1, 2};

  ActionDef throw_a = action("throw", {{0.5, 0.1}, {0.15, 0.5}, {0.95, 0.15}, {0.3, 0.95}, {0.7, 0.95}});
  throw_a.has_object = true;
  throw_a.category_weights = {0.5, 0.0, 0.5, 0.0};
  throw_a.mean_offset = {1.3, 0.0, std::log(0.5), std::log(0.25)};
  throw_a.offset_noise = 0.08;
  throw_a.contact_keypoint = 2;
  throw_a.compatible = {0};

  w.actions = {stand_a, wave, hold, kick, ride, throw_a};
  return w;
}

Scene generate_scene(Rng& rng, const WorldSpec& spec) {
  const int A = spec.num_actions();
  const int K = spec.num_keypoints;
  const double W = spec.image_width, H = spec.image_height;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  Scene scene;
  scene.width = spec.image_width;
  scene.height = spec.image_height;

  const int n_humans = std::uniform_int_distribution<int>(spec.min_humans, spec.max_humans)(rng);
  for (int hi = 0; hi < n_humans; ++hi) {
    for (int attempt = 0; attempt < kHumanSampleTries; ++attempt) {
      Human human;
      human.box.w = uniform(spec.human_width[0], spec.human_width[1]);
      human.box.h = uniform(spec.human_height[0], spec.human_height[1]);
      human.actions.assign(A, 0);
      human.targets.assign(A, std::nullopt);

      const auto primary = static_cast<std::size_t>(std::uniform_int_distribution<int>(0, A - 1)(rng));
      human.actions[primary] = 1;
      for (int c : spec.actions[primary].compatible) {
        if (unit(rng) < spec.secondary_action_rate) human.actions[c] = 1;
      }

      // Placement noise is drawn before the position so that rejection only
      // ever resamples the position and leaves the offsets unbiased.
      std::vector<PendingObject> pending;
      std::vector<std::array<double, 2>> contact_shift(K, {0.0, 0.0});
      for (int a = 0; a < A; ++a) {
        const auto& act = spec.actions[a];
        if (!human.actions[a] || !act.has_object) continue;
        PendingObject po;
        po.action = static_cast<std::size_t>(a);
        po.category = static_cast<int>(sample_weighted(rng, act.category_weights));
        po.enc = act.mean_offset;
        po.enc.dx += act.offset_noise * normal(rng);
        po.enc.dy += act.offset_noise * normal(rng);
        po.enc.dw += act.offset_noise * normal(rng);
        po.enc.dh += act.offset_noise * normal(rng);
        if (act.contact_keypoint >= 0) {
          contact_shift[act.contact_keypoint][0] += po.enc.dx - act.mean_offset.dx;
          contact_shift[act.contact_keypoint][1] += po.enc.dy - act.mean_offset.dy;
        }
        pending.push_back(po);
      }

      // Keypoints: average of the active templates, plus noise, clamped to
      // the unit box.
      std::vector<std::array<double, 2>> unit_kp(K, {0.0, 0.0});
      double noise = 0.0, dropout = 0.0;
      int active = 0;
      for (int a = 0; a < A; ++a) {
        if (!human.actions[a]) continue;
        const auto& act = spec.actions[a];
        for (int k = 0; k < K; ++k) {
          unit_kp[k][0] += act.keypoint_template[k][0];
          unit_kp[k][1] += act.keypoint_template[k][1];
        }
        noise += act.template_noise;
        dropout = std::max(dropout, act.visibility_dropout);
        ++active;
      }
      noise /= active;
      std::vector<bool> visible(K);
      for (int k = 0; k < K; ++k) {
        for (int d = 0; d < 2; ++d) {
          double v = unit_kp[k][d] / active + noise * normal(rng) + contact_shift[k][d];
          unit_kp[k][d] = std::clamp(v, 0.0, 1.0);
        }
        visible[k] = !(unit(rng) < dropout);
      }

      std::vector<std::pair<double, double>> xext, yext;
      std::vector<Box> object_boxes;
      for (const auto& po : pending) {
        const Box rel = geometry::decode_box_relative(po.enc, {0.0, 0.0, human.box.w, human.box.h});
        object_boxes.push_back(rel);
        xext.emplace_back(rel.x, rel.w);
        yext.emplace_back(rel.y, rel.h);
      }
      const Span1d sx = feasible(W, human.box.w, xext);
      const Span1d sy = feasible(H, human.box.h, yext);
      if (sx.lo > sx.hi || sy.lo > sy.hi) continue;

      bool placed = false;
      for (int t = 0; t < kHumanPlacementTries && !placed; ++t) {
        human.box.x = uniform(sx.lo, sx.hi);
        human.box.y = uniform(sy.lo, sy.hi);
        placed = std::all_of(scene.humans.begin(), scene.humans.end(), [&](const Human& other) {
          return geometry::iou(other.box, human.box) <= kMaxHumanOverlap;
        });
      }
      if (!placed) break;  // crowded: this scene gets fewer humans

      for (std::size_t i = 0; i < pending.size(); ++i) {
        Box b = object_boxes[i];
        b.x += human.box.x;
        b.y += human.box.y;
        human.targets[pending[i].action] = scene.objects.size();
        scene.objects.push_back({b, pending[i].category});
      }
      human.keypoints.resize(K);
      for (int k = 0; k < K; ++k) {
        human.keypoints[k] = {human.box.x + unit_kp[k][0] * human.box.w,
                              human.box.y + unit_kp[k][1] * human.box.h, visible[k]};
      }
      scene.humans.push_back(std::move(human));
      break;
    }
  }

  for (int d = 0; d < spec.max_distractors; ++d) {
    if (!(unit(rng) < spec.distractor_rate)) continue;
    Object o;
    o.category = std::uniform_int_distribution<int>(0, spec.num_categories - 1)(rng);
    o.box.w = uniform(spec.distractor_size[0], spec.distractor_size[1]);
    o.box.h = uniform(spec.distractor_size[0], spec.distractor_size[1]);
    o.box.x = uniform(0.0, W - o.box.w);
    o.box.y = uniform(0.0, H - o.box.h);
    scene.objects.push_back(o);
  }

  scene.image = rasterize(scene, spec.num_categories);
  return scene;
}

Scene generate_scene(std::uint64_t seed, const WorldSpec& spec) {
  Rng rng(seed);
  Scene s = generate_scene(rng, spec);
  s.seed = seed;
  return s;
}

std::vector<double> rasterize(const Scene& scene, int num_categories) {
  const int W = scene.width, H = scene.height;
  std::vector<double> img(static_cast<std::size_t>(3) * W * H, 0.0);
  auto at = [&](int c, int y, int x) -> double& {
    return img[(static_cast<std::size_t>(c) * H + y) * W + x];
  };
  auto pixel_range = [](double start, double extent, int limit) {
    // Pixels whose centre lies inside [start, start + extent).
    const int lo = std::max(0, static_cast<int>(std::ceil(start - 0.5)));
    const int hi = std::min(limit, static_cast<int>(std::ceil(start + extent - 0.5)));
    return std::pair<int, int>{lo, hi};
  };

  for (const auto& h : scene.humans) {
    const auto [x0, x1] = pixel_range(h.box.x, h.box.w, W);
    const auto [y0, y1] = pixel_range(h.box.y, h.box.h, H);
    for (int y = y0; y < y1; ++y) {
      for (int x = x0; x < x1; ++x) at(0, y, x) = std::max(at(0, y, x), kBodyIntensity);
    }
  }
  for (const auto& h : scene.humans) {
    for (const auto& kp : h.keypoints) {
      if (!kp.visible) continue;
      const int xa = std::max(0, static_cast<int>(std::floor(kp.x - kBlobRadius)));
      const int xb = std::min(W - 1, static_cast<int>(std::ceil(kp.x + kBlobRadius)));
      const int ya = std::max(0, static_cast<int>(std::floor(kp.y - kBlobRadius)));
      const int yb = std::min(H - 1, static_cast<int>(std::ceil(kp.y + kBlobRadius)));
      for (int y = ya; y <= yb; ++y) {
        for (int x = xa; x <= xb; ++x) {
          const double dx = x + 0.5 - kp.x, dy = y + 0.5 - kp.y;
          at(0, y, x) += kBlobIntensity * std::exp(-(dx * dx + dy * dy) / (2.0 * kBlobSigma * kBlobSigma));
        }
      }
    }
  }
  for (const auto& o : scene.objects) {
    const auto code = category_code(o.category, num_categories);
    const auto [x0, x1] = pixel_range(o.box.x, o.box.w, W);
    const auto [y0, y1] = pixel_range(o.box.y, o.box.h, H);
    for (int y = y0; y < y1; ++y) {
      for (int x = x0; x < x1; ++x) {
        at(1, y, x) = std::max(at(1, y, x), code[0]);
        at(2, y, x) = std::max(at(2, y, x), code[1]);
      }
    }
  }
  for (double& v : img) v = std::clamp(v, 0.0, 1.0);
  return img;
}

Dataset generate_dataset(const WorldSpec& spec, std::uint64_t master_seed, std::uint64_t stream,
                         std::size_t count) {
  spec.validate();
  Dataset ds;
  ds.spec = spec;
  ds.scenes.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    ds.scenes.push_back(generate_scene(derive_seed(master_seed, stream, i), spec));
  }
  return ds;
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw ConfigError("cannot write dataset: " + path.string());
  nlohmann::json header = {{"schema", "turbohoi.synth-dataset"},
                           {"version", kDatasetSchemaVersion},
                           {"world", world_to_json(dataset.spec)}};
  os << header.dump() << '\n';
  for (const auto& s : dataset.scenes) os << nlohmann::json{{"seed", s.seed}}.dump() << '\n';
  if (!os) throw ConfigError("short write to dataset: " + path.string());
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open dataset: " + path.string());
  Dataset ds;
  std::string line;
  std::size_t lineno = 0;
  auto where = [&] { return path.string() + ":" + std::to_string(lineno) + ": "; };
  if (!std::getline(is, line)) return ds;
  ++lineno;
  try {
    const auto header = nlohmann::json::parse(line);
    if (header.at("schema").get<std::string>() != "turbohoi.synth-dataset") {
      throw FormatError(where() + "not a synthetic dataset header");
    }
    const int version = header.at("version").get<int>();
    if (version != kDatasetSchemaVersion) {
      throw FormatError(where() + "schema version " + std::to_string(version) + ", expected " +
                        std::to_string(kDatasetSchemaVersion));
    }
    ds.spec = world_from_json(header.at("world"), WorldSpec{});
    ds.spec.validate();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(where() + "malformed header: " + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(where() + e.what());
  }
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) throw FormatError(where() + "empty record");
    std::uint64_t seed = 0;
    try {
      seed = nlohmann::json::parse(line).at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(where() + "malformed record: " + e.what());
    }
    ds.scenes.push_back(generate_scene(seed, ds.spec));
  }
  return ds;
}

}  // namespace turbohoi::synth
