#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "turbohoi/optimizer.hpp"
#include "turbohoi/parameters.hpp"

namespace turbohoi {

// On-disk layout:
//   TURBOHOI-CKPT 1\n
//   <entry count>\n
//   <name> <rank> <extent>... <byte offset>\n     (one line per entry)
//   DATA\n
//   raw little-endian float64 payload
// Offsets are relative to the first payload byte. Optimizer momentum is
// stored as "momentum/<param>" entries and scalar metadata as "meta/<key>".
struct CheckpointEntry {
  std::string name;
  ad::Shape shape;
  std::vector<double> values;

  bool operator==(const CheckpointEntry&) const = default;
};

struct Checkpoint {
  std::vector<CheckpointEntry> entries;

  const CheckpointEntry* find(const std::string& name) const;
  double meta(const std::string& key, double fallback) const;

  bool operator==(const Checkpoint&) const = default;
};

Checkpoint snapshot(const ParameterSet& params, const OptimizerState* state,
                    const std::map<std::string, double>& meta);

// Copies stored parameters (and momentum, when state is given) into place.
// Throws CompatibilityError listing every missing or mis-shaped entry.
void restore(const Checkpoint& ckpt, ParameterSet& params, OptimizerState* state);

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
// Throws FormatError on a malformed file.
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace turbohoi
