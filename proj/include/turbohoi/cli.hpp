#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "turbohoi/eval.hpp"
#include "turbohoi/synth_world.hpp"
#include "turbohoi/trainer.hpp"

namespace turbohoi::cli {

inline const std::vector<std::string> kAblationVariants{"no_pose",   "multi_task", "no_hoi",
                                                        "stages(1)", "stages(2)",  "stages(3)"};

struct RunConfig {
  synth::WorldSpec world = synth::WorldSpec::synth_hoi_v1();
  train::TrainConfig train;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::size_t train_scenes = 2000;
  std::size_t test_scenes = 500;
  std::filesystem::path out_dir = "runs";
  std::vector<std::string> variants = kAblationVariants;
  eval::EvalOptions eval;

  // Throws ConfigError naming the field.
  void validate() const;
};

nlohmann::json run_config_to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

// Layout under the output directory.
std::filesystem::path dataset_path(const RunConfig& cfg, std::uint64_t seed, const std::string& split);
std::filesystem::path run_dir(const RunConfig& cfg, const std::string& group, const std::string& variant,
                              std::uint64_t seed);

nlohmann::json report_to_json(const eval::StageReport& r, std::uint64_t seed);

// Metric table, one row per stage.
std::string format_reports(const std::vector<eval::StageReport>& reports);

// Loss curve as a standalone SVG document.
std::string loss_curve_svg(const std::vector<train::LogRecord>& records);

// Entry point; returns the process exit code (0 ok, 2 config or input error,
// 3 incompatible state, 1 anything else).
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace turbohoi::cli
