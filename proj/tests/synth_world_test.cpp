#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>

#include "turbohoi/error.hpp"
#include "turbohoi/synth_world.hpp"

namespace turbohoi::synth {
namespace {

class TempFile {
 public:
  explicit TempFile(const std::string& name) : path_(std::filesystem::temp_directory_path() / name) {}
  ~TempFile() { std::filesystem::remove(path_); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

WorldSpec noiseless() {
  WorldSpec w = WorldSpec::synth_hoi_v1();
  for (auto& a : w.actions) {
    a.offset_noise = 0.0;
    a.template_noise = 0.0;
    a.visibility_dropout = 0.0;
  }
  w.secondary_action_rate = 0.0;
  return w;
}

void check_scene_invariants(const Scene& s, const WorldSpec& spec) {
  const std::size_t A = spec.actions.size();
  for (const auto& h : s.humans) {
    EXPECT_TRUE(h.box.valid());
    EXPECT_GE(h.box.x, 0.0);
    EXPECT_GE(h.box.y, 0.0);
    EXPECT_LE(h.box.x + h.box.w, s.width + 1e-9);
    EXPECT_LE(h.box.y + h.box.h, s.height + 1e-9);
    ASSERT_EQ(h.actions.size(), A);
    EXPECT_GE(std::accumulate(h.actions.begin(), h.actions.end(), 0), 1);
    for (std::size_t a = 0; a < A; ++a) {
      const bool needs_target = h.performs(a) && spec.actions[a].has_object;
      ASSERT_EQ(h.targets[a].has_value(), needs_target);
      if (h.targets[a]) EXPECT_LT(*h.targets[a], s.objects.size());
    }
    ASSERT_EQ(h.keypoints.size(), static_cast<std::size_t>(spec.num_keypoints));
    for (const auto& kp : h.keypoints) {
      if (!kp.visible) continue;
      EXPECT_GE(kp.x, 0.0);
      EXPECT_GE(kp.y, 0.0);
      EXPECT_LE(kp.x, s.width);
      EXPECT_LE(kp.y, s.height);
    }
  }
  for (const auto& o : s.objects) {
    EXPECT_TRUE(o.box.valid());
    EXPECT_GE(o.box.x, -1e-9);
    EXPECT_GE(o.box.y, -1e-9);
    EXPECT_LE(o.box.x + o.box.w, s.width + 1e-9);
    EXPECT_LE(o.box.y + o.box.h, s.height + 1e-9);
    EXPECT_GE(o.category, 0);
    EXPECT_LT(o.category, spec.num_categories);
  }
  for (double v : s.image) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(WorldSpec, DefaultIsValid) { EXPECT_NO_THROW(WorldSpec::synth_hoi_v1().validate()); }

TEST(WorldSpec, ValidationNamesField) {
  WorldSpec w = WorldSpec::synth_hoi_v1();
  w.actions.clear();
  try {
    w.validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("world.actions"), std::string::npos);
  }
  w = WorldSpec::synth_hoi_v1();
  w.actions[0].keypoint_template[1] = {1.2, 0.5};
  EXPECT_THROW(w.validate(), ConfigError);
  w = WorldSpec::synth_hoi_v1();
  for (auto& a : w.actions) a.has_object = false;
  EXPECT_THROW(w.validate(), ConfigError);
}

TEST(Generate, InvariantsHoldOnManyScenes) {
  const WorldSpec spec = WorldSpec::synth_hoi_v1();
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    const Scene s = generate_scene(seed, spec);
    EXPECT_GE(s.humans.size(), 1u);
    EXPECT_LE(s.humans.size(), 3u);
    check_scene_invariants(s, spec);
  }
}

TEST(Generate, SameSeedSameScene) {
  const WorldSpec spec = WorldSpec::synth_hoi_v1();
  for (std::uint64_t seed : {0ULL, 1ULL, 99ULL}) EXPECT_EQ(generate_scene(seed, spec), generate_scene(seed, spec));
}

TEST(Generate, ZeroNoiseMatchesSpecExactly) {
  const WorldSpec spec = noiseless();
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const Scene s = generate_scene(seed, spec);
    for (const auto& h : s.humans) {
      std::size_t primary = 0;
      while (!h.performs(primary)) ++primary;
      const auto& act = spec.actions[primary];
      if (act.has_object) {
        const auto enc = geometry::encode_box_relative(s.objects[*h.targets[primary]].box, h.box);
        const auto mean = act.mean_offset;
        EXPECT_NEAR(enc.dx, mean.dx, 1e-9);
        EXPECT_NEAR(enc.dy, mean.dy, 1e-9);
        EXPECT_NEAR(enc.dw, mean.dw, 1e-9);
        EXPECT_NEAR(enc.dh, mean.dh, 1e-9);
      }
      for (std::size_t k = 0; k < h.keypoints.size(); ++k) {
        EXPECT_NEAR(h.keypoints[k].x, h.box.x + act.keypoint_template[k][0] * h.box.w, 1e-9);
        EXPECT_NEAR(h.keypoints[k].y, h.box.y + act.keypoint_template[k][1] * h.box.h, 1e-9);
        EXPECT_TRUE(h.keypoints[k].visible);
      }
    }
  }
}

TEST(Generate, FullDropoutHidesEveryKeypoint) {
  WorldSpec spec = WorldSpec::synth_hoi_v1();
  for (auto& a : spec.actions) a.visibility_dropout = 1.0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    for (const auto& h : generate_scene(seed, spec).humans) {
      for (const auto& kp : h.keypoints) EXPECT_FALSE(kp.visible);
    }
  }
}

// Per-action mean of the encoded target offset over 10k scenes must sit within
// three standard errors of the action's configured mean.
TEST(Generate, OffsetMeansMatchSpec) {
  const WorldSpec spec = WorldSpec::synth_hoi_v1();
  const std::size_t A = spec.actions.size();
  std::vector<std::array<double, 4>> sum(A), sumsq(A);
  std::vector<std::size_t> n(A, 0);
  for (std::uint64_t i = 0; i < 10000; ++i) {
    const Scene s = generate_scene(derive_seed(2024, i), spec);
    for (const auto& h : s.humans) {
      for (std::size_t a = 0; a < A; ++a) {
        if (!h.targets[a]) continue;
        const auto e = geometry::encode_box_relative(s.objects[*h.targets[a]].box, h.box).as_array();
        for (int d = 0; d < 4; ++d) {
          sum[a][d] += e[d];
          sumsq[a][d] += e[d] * e[d];
        }
        ++n[a];
      }
    }
  }
  for (std::size_t a = 0; a < A; ++a) {
    if (!spec.actions[a].has_object) continue;
    ASSERT_GT(n[a], 100u) << spec.actions[a].name;
    const auto mean = spec.actions[a].mean_offset.as_array();
    for (int d = 0; d < 4; ++d) {
      const double m = sum[a][d] / n[a];
      const double var = sumsq[a][d] / n[a] - m * m;
      const double se = std::sqrt(var / n[a]);
      EXPECT_LE(std::abs(m - mean[d]), 3.0 * se) << spec.actions[a].name << " component " << d;
    }
  }
}

double mutual_information(const std::vector<int>& x, const std::vector<int>& y) {
  std::map<int, double> px, py;
  std::map<std::pair<int, int>, double> pxy;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    px[x[i]] += 1.0 / n;
    py[y[i]] += 1.0 / n;
    pxy[{x[i], y[i]}] += 1.0 / n;
  }
  double mi = 0.0;
  for (const auto& [k, p] : pxy) mi += p * std::log(p / (px[k.first] * py[k.second]));
  return mi;
}

// Permutation test: the observed action/offset mutual information must exceed
// every one of 200 label-shuffled replicates (p < 0.005).
TEST(Generate, ActionAndOffsetAreDependent) {
  const WorldSpec spec = WorldSpec::synth_hoi_v1();
  std::vector<int> action, cell;
  for (std::uint64_t i = 0; i < 10000; ++i) {
    const Scene s = generate_scene(derive_seed(77, i), spec);
    for (const auto& h : s.humans) {
      for (std::size_t a = 0; a < spec.actions.size(); ++a) {
        if (!h.targets[a]) continue;
        const auto e = geometry::encode_box_relative(s.objects[*h.targets[a]].box, h.box);
        action.push_back(static_cast<int>(a));
        cell.push_back(static_cast<int>(std::floor(e.dx / 0.25)) * 1000 + static_cast<int>(std::floor(e.dy / 0.25)));
      }
    }
  }
  ASSERT_GT(action.size(), 1000u);
  const double observed = mutual_information(action, cell);
  EXPECT_GT(observed, 0.0);
  Rng rng(3);
  std::vector<int> shuffled = action;
  for (int p = 0; p < 200; ++p) {
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    ASSERT_LT(mutual_information(shuffled, cell), observed);
  }
}

TEST(Rasterize, EmptySceneIsBlack) {
  Scene s;
  s.width = 16;
  s.height = 12;
  const auto img = rasterize(s, 4);
  ASSERT_EQ(img.size(), 3u * 16 * 12);
  for (double v : img) EXPECT_EQ(v, 0.0);
}

TEST(Rasterize, Deterministic) {
  const Scene s = generate_scene(5, WorldSpec::synth_hoi_v1());
  EXPECT_EQ(rasterize(s, 4), rasterize(s, 4));
  EXPECT_EQ(rasterize(s, 4), s.image);
}

TEST(Rasterize, BlobPeaksAtKeypointPixel) {
  Scene s;
  s.width = 32;
  s.height = 32;
  Human h;
  h.box = {4, 4, 20, 24};
  h.actions = {1};
  h.targets = {std::nullopt};
  h.keypoints = {{13.5, 9.5, true}, {20.0, 20.0, false}};
  s.humans.push_back(h);
  const auto img = rasterize(s, 4);
  const auto best = std::max_element(img.begin(), img.begin() + 32 * 32) - img.begin();
  EXPECT_EQ(best % 32, 13);
  EXPECT_EQ(best / 32, 9);
}

TEST(Rasterize, ObjectCodesDifferPerCategory) {
  Scene s;
  s.width = s.height = 8;
  s.objects = {{{0, 0, 2, 2}, 0}, {{4, 4, 2, 2}, 3}};
  const auto img = rasterize(s, 4);
  EXPECT_EQ(img[64 + 0], 0.25);
  EXPECT_EQ(img[128 + 0], 1.0);
  EXPECT_EQ(img[64 + 4 * 8 + 4], 1.0);
  EXPECT_EQ(img[128 + 4 * 8 + 4], 0.25);
}

TEST(DatasetIo, RoundTripIsExact) {
  TempFile f("turbohoi_ds_roundtrip.jsonl");
  const Dataset ds = generate_dataset(WorldSpec::synth_hoi_v1(), 7, 0, 100);
  write_dataset(ds, f.path());
  EXPECT_EQ(read_dataset(f.path()), ds);
}

TEST(DatasetIo, EmptyFileIsEmptyDataset) {
  TempFile f("turbohoi_ds_empty.jsonl");
  std::ofstream(f.path()).close();
  EXPECT_TRUE(read_dataset(f.path()).scenes.empty());
}

TEST(DatasetIo, TruncatedRecordNamesLine) {
  TempFile f("turbohoi_ds_trunc.jsonl");
  write_dataset(generate_dataset(WorldSpec::synth_hoi_v1(), 7, 0, 3), f.path());
  const auto size = std::filesystem::file_size(f.path());
  std::filesystem::resize_file(f.path(), size - 4);
  try {
    read_dataset(f.path());
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find(":4:"), std::string::npos) << e.what();
  }
}

TEST(DatasetIo, VersionMismatchRejected) {
  TempFile f("turbohoi_ds_version.jsonl");
  std::ofstream(f.path()) << R"({"schema":"turbohoi.synth-dataset","version":99,"world":{}})" << '\n';
  EXPECT_THROW(read_dataset(f.path()), FormatError);
}

}  // namespace
}  // namespace turbohoi::synth
