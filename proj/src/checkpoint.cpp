#include "turbohoi/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "turbohoi/error.hpp"

namespace turbohoi {

namespace {

constexpr const char* kMagic = "TURBOHOI-CKPT 1";

void put_le(std::string& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

double get_le(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 7; i >= 0; --i) bits = (bits << 8) | p[i];
  return std::bit_cast<double>(bits);
}

}  // namespace

const CheckpointEntry* Checkpoint::find(const std::string& name) const {
  for (const auto& e : entries) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

double Checkpoint::meta(const std::string& key, double fallback) const {
  const auto* e = find("meta/" + key);
  return e && !e->values.empty() ? e->values[0] : fallback;
}

Checkpoint snapshot(const ParameterSet& params, const OptimizerState* state,
                    const std::map<std::string, double>& meta) {
  Checkpoint ckpt;
  const auto& entries = params.entries();
  for (const auto& e : entries) {
    const auto v = e.tensor.values();
    ckpt.entries.push_back({e.name, e.tensor.shape(), {v.begin(), v.end()}});
  }
  if (state) {
    for (std::size_t i = 0; i < entries.size(); ++i) {
      ckpt.entries.push_back({"momentum/" + entries[i].name, entries[i].tensor.shape(),
                              state->velocity.at(i)});
    }
  }
  for (const auto& [k, v] : meta) ckpt.entries.push_back({"meta/" + k, {1}, {v}});
  return ckpt;
}

void restore(const Checkpoint& ckpt, ParameterSet& params, OptimizerState* state) {
  std::ostringstream diff;
  bool bad = false;
  auto check = [&](const std::string& name, const ad::Shape& want) -> const CheckpointEntry* {
    const auto* e = ckpt.find(name);
    if (!e) {
      diff << "\n  missing " << name << " " << ad::to_string(want);
      bad = true;
    } else if (e->shape != want) {
      diff << "\n  " << name << ": checkpoint " << ad::to_string(e->shape) << " vs model "
           << ad::to_string(want);
      bad = true;
    }
    return e;
  };
  for (const auto& p : params.entries()) {
    check(p.name, p.tensor.shape());
    if (state) check("momentum/" + p.name, p.tensor.shape());
  }
  for (const auto& e : ckpt.entries) {
    if (e.name.starts_with("meta/") || e.name.starts_with("momentum/")) continue;
    if (!params.contains(e.name)) {
      diff << "\n  unexpected " << e.name << " " << ad::to_string(e.shape);
      bad = true;
    }
  }
  if (bad) throw CompatibilityError("checkpoint does not match the model:" + diff.str());

  const auto& entries = params.entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    ad::Tensor t = entries[i].tensor;
    const auto& src = ckpt.find(entries[i].name)->values;
    std::copy(src.begin(), src.end(), t.mutable_values().begin());
    if (state) {
      state->velocity.at(i) = ckpt.find("momentum/" + entries[i].name)->values;
    }
  }
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::string header = std::string(kMagic) + "\n" + std::to_string(ckpt.entries.size()) + "\n";
  std::size_t offset = 0;
  for (const auto& e : ckpt.entries) {
    if (e.name.find_first_of(" \n\t") != std::string::npos) {
      throw FormatError("checkpoint entry names may not contain whitespace: " + e.name);
    }
    header += e.name + " " + std::to_string(e.shape.size());
    for (auto d : e.shape) header += " " + std::to_string(d);
    header += " " + std::to_string(offset) + "\n";
    offset += e.values.size() * 8;
  }
  header += "DATA\n";
  std::string payload;
  payload.reserve(offset);
  for (const auto& e : ckpt.entries) {
    for (double v : e.values) put_le(payload, v);
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ConfigError("cannot write checkpoint: " + path.string());
  os.write(header.data(), static_cast<std::streamsize>(header.size()));
  os.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!os) throw ConfigError("short write to checkpoint: " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open checkpoint: " + path.string());
  std::string line;
  if (!std::getline(is, line) || line != kMagic) {
    throw FormatError(path.string() + ": not a checkpoint (bad magic line)");
  }
  std::size_t count = 0;
  if (!std::getline(is, line)) throw FormatError(path.string() + ": missing entry count");
  try {
    count = std::stoul(line);
  } catch (const std::exception&) {
    throw FormatError(path.string() + ": bad entry count '" + line + "'");
  }
  struct Manifest {
    CheckpointEntry entry;
    std::size_t offset;
  };
  std::vector<Manifest> manifest;
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::getline(is, line)) throw FormatError(path.string() + ": truncated manifest");
    std::istringstream ls(line);
    Manifest m;
    std::size_t rank = 0;
    if (!(ls >> m.entry.name >> rank) || rank == 0) {
      throw FormatError(path.string() + ": bad manifest line " + std::to_string(i + 3));
    }
    m.entry.shape.resize(rank);
    for (auto& d : m.entry.shape) {
      if (!(ls >> d) || d == 0) throw FormatError(path.string() + ": bad extent on line " + std::to_string(i + 3));
    }
    if (!(ls >> m.offset)) throw FormatError(path.string() + ": bad offset on line " + std::to_string(i + 3));
    manifest.push_back(std::move(m));
  }
  if (!std::getline(is, line) || line != "DATA") throw FormatError(path.string() + ": missing DATA marker");
  std::string payload((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  Checkpoint ckpt;
  for (auto& m : manifest) {
    const std::size_t n = ad::numel(m.entry.shape);
    if (m.offset + n * 8 > payload.size()) {
      throw FormatError(path.string() + ": payload too short for " + m.entry.name);
    }
    const auto* p = reinterpret_cast<const unsigned char*>(payload.data()) + m.offset;
    m.entry.values.resize(n);
    for (std::size_t k = 0; k < n; ++k) m.entry.values[k] = get_le(p + 8 * k);
    ckpt.entries.push_back(std::move(m.entry));
  }
  return ckpt;
}

}  // namespace turbohoi
