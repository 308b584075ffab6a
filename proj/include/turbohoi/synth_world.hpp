#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "turbohoi/geometry.hpp"
#include "turbohoi/rng.hpp"

namespace turbohoi::synth {

using geometry::Box;
using geometry::RelEncoding;

struct ActionDef {
  std::string name;
  bool has_object = false;
  std::vector<double> category_weights;  // one weight per object category
  RelEncoding mean_offset;               // object placement relative to the human
  double offset_noise = 0.0;             // std-dev of each encoding component
  std::vector<std::array<double, 2>> keypoint_template;  // unit-box coordinates
  double template_noise = 0.0;           // std-dev in unit-box units
  double visibility_dropout = 0.0;
  // Keypoint that follows the object's placement noise (hand on the held
  // object); -1 for none.
  int contact_keypoint = -1;
  std::vector<int> compatible;           // actions that may co-occur as secondaries

  bool operator==(const ActionDef&) const = default;
};

struct WorldSpec {
  int image_width = 64;
  int image_height = 64;
  int num_categories = 4;
  int num_keypoints = 5;
  std::vector<ActionDef> actions;
  int min_humans = 1;
  int max_humans = 3;
  std::array<double, 2> human_width{12.0, 18.0};
  std::array<double, 2> human_height{24.0, 34.0};
  std::array<double, 2> distractor_size{4.0, 12.0};
  int max_distractors = 2;
  double distractor_rate = 0.5;     // probability per distractor slot
  double secondary_action_rate = 0.3;  // probability of adding each compatible secondary

  int num_actions() const { return static_cast<int>(actions.size()); }
  // Throws ConfigError naming the offending field.
  void validate() const;

  bool operator==(const WorldSpec&) const = default;

  // The fixed "SynthHOI-v1" world.
  static WorldSpec synth_hoi_v1();
};

struct Keypoint {
  double x = 0.0;
  double y = 0.0;
  bool visible = true;

  bool operator==(const Keypoint&) const = default;
};

struct Human {
  Box box;
  std::vector<std::uint8_t> actions;              // multi-hot, length A
  std::vector<Keypoint> keypoints;                // length K
  std::vector<std::optional<std::size_t>> targets;  // object index per action

  bool performs(std::size_t action) const { return actions.at(action) != 0; }
  bool operator==(const Human&) const = default;
};

struct Object {
  Box box;
  int category = 0;

  bool operator==(const Object&) const = default;
};

struct Scene {
  std::uint64_t seed = 0;
  int width = 0;
  int height = 0;
  std::vector<Human> humans;
  std::vector<Object> objects;
  std::vector<double> image;  // 3 x height x width, values in [0, 1]

  bool operator==(const Scene&) const = default;
};

// Samples humans, actions, objects and keypoints, then rasterizes.
Scene generate_scene(Rng& rng, const WorldSpec& spec);
// Scene regenerated from its own seed; what datasets persist.
Scene generate_scene(std::uint64_t seed, const WorldSpec& spec);

// Channel 0: human rectangles plus a Gaussian blob per visible keypoint.
// Channels 1-2: object rectangles coded by category. Pixel k spans [k, k+1).
std::vector<double> rasterize(const Scene& scene, int num_categories);

struct Dataset {
  WorldSpec spec;
  std::vector<Scene> scenes;

  bool operator==(const Dataset&) const = default;
};

// Scene i uses seed derive_seed(master_seed, stream, i).
Dataset generate_dataset(const WorldSpec& spec, std::uint64_t master_seed, std::uint64_t stream,
                         std::size_t count);

inline constexpr int kDatasetSchemaVersion = 1;

// Line-delimited JSON: a header {"schema", "version", "world"} and one
// {"seed": n} record per scene. Scenes are regenerated on read.
void write_dataset(const Dataset& dataset, const std::filesystem::path& path);
// Throws FormatError naming the line on malformed records or version mismatch.
// A zero-byte file reads as an empty dataset.
Dataset read_dataset(const std::filesystem::path& path);

}  // namespace turbohoi::synth
