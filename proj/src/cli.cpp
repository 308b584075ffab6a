#include "turbohoi/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "turbohoi/checkpoint.hpp"
#include "turbohoi/error.hpp"
#include "turbohoi/serialization.hpp"

namespace turbohoi::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kInitStream = 0x696e6974;
constexpr std::uint64_t kTrainStream = 0;
constexpr std::uint64_t kTestStream = 1;

std::string seed_dir(std::uint64_t seed) { return "seed" + std::to_string(seed); }

// Variant names contain parentheses; keep directory names plain.
std::string variant_dir(const std::string& variant) {
  std::string out;
  for (char c : variant) {
    if (c == '(') {
      out += '_';
    } else if (c != ')') {
      out += c;
    }
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + path.string());
  f << text;
  if (!f) throw ConfigError("cannot write " + path.string());
}

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::vector<bool> object_actions(const synth::WorldSpec& spec) {
  std::vector<bool> out;
  for (const auto& a : spec.actions) out.push_back(a.has_object);
  return out;
}

synth::Dataset load_split(const RunConfig& cfg, std::uint64_t seed, const std::string& split) {
  const auto path = dataset_path(cfg, seed, split);
  if (!fs::exists(path)) throw ConfigError("missing dataset " + path.string() + " (run gen-data first)");
  auto data = synth::read_dataset(path);
  if (!(data.spec == cfg.world)) {
    throw ConfigError("dataset " + path.string() + " was generated from a different world; rerun gen-data");
  }
  return data;
}

train::TrainConfig train_config_for(const RunConfig& cfg, const std::string& variant, std::uint64_t seed) {
  train::TrainConfig t = cfg.train;
  t.variant = variant;
  t.seed = seed;
  t.validate();
  return t;
}

std::uint64_t config_hash(const train::TrainConfig& t) {
  return std::stoull(eval::fingerprint(train_to_json(t).dump()), nullptr, 16);
}

std::map<std::string, double> checkpoint_meta(const train::TrainConfig& t, int next_iteration) {
  const std::uint64_t h = config_hash(t);
  return {{"next_iteration", next_iteration},
          {"config_hash_hi", static_cast<double>(h >> 32)},
          {"config_hash_lo", static_cast<double>(h & 0xffffffffULL)}};
}

void check_config_hash(const Checkpoint& ckpt, const train::TrainConfig& t) {
  const std::uint64_t h = config_hash(t);
  const double hi = ckpt.meta("config_hash_hi", -1.0);
  const double lo = ckpt.meta("config_hash_lo", -1.0);
  if (hi != static_cast<double>(h >> 32) || lo != static_cast<double>(h & 0xffffffffULL)) {
    throw CompatibilityError("checkpoint was written with a different training config");
  }
}

std::string log_text(const std::vector<train::LogRecord>& records) {
  std::string out;
  for (const auto& r : records) out += train::log_record_json(r) + "\n";
  return out;
}

std::vector<train::LogRecord> read_log(const fs::path& path, int before) {
  std::vector<train::LogRecord> out;
  std::ifstream f(path);
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const auto j = json::parse(line);
    train::LogRecord r;
    r.iteration = j.at("iteration").get<int>();
    if (r.iteration >= before) break;
    r.learning_rate = j.at("lr").get<double>();
    r.total = j.at("total").get<double>();
    r.det = j.at("L_det").get<double>();
    r.pose_bootstrap = j.at("L_pose_0").get<double>();
    r.hoi = j.at("L_HOI").get<std::vector<double>>();
    r.pose = j.at("L_pose").get<std::vector<double>>();
    out.push_back(std::move(r));
  }
  return out;
}

void write_reports(const fs::path& dir, const std::vector<eval::StageReport>& reports, std::uint64_t seed) {
  for (const auto& r : reports) {
    write_text(dir / ("report_stage" + std::to_string(r.stage) + ".json"), report_to_json(r, seed).dump(2) + "\n");
  }
  write_text(dir / "summary.txt", format_reports(reports));
}

eval::EvalOptions eval_options(const RunConfig& cfg, std::uint64_t seed) {
  eval::EvalOptions o = cfg.eval;
  o.seed = seed;
  return o;
}

double final_loss(const net::Model& model, const synth::Dataset& data, const train::TrainConfig& t) {
  const std::size_t n = std::min<std::size_t>(data.scenes.size(), 64);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += train::inference_loss(model, data.scenes[i], t).total_value();
  return n > 0 ? sum / static_cast<double>(n) : 0.0;
}

struct JobResult {
  std::string variant;
  std::uint64_t seed = 0;
  std::vector<eval::StageReport> reports;
};

// Fresh training of one variant and seed followed by evaluation on the test split.
JobResult train_and_evaluate(const RunConfig& cfg, const std::string& variant, std::uint64_t seed,
                             const synth::Dataset& train_set, const synth::Dataset& test_set, const fs::path& dir) {
  const auto t = train_config_for(cfg, variant, seed);
  net::Model model(t.effective_model(), derive_seed(seed, kInitStream));
  auto state = train::fresh_state(model, t);
  const auto records = train::train(t, model, state, train_set);
  fs::create_directories(dir);
  write_checkpoint(dir / "checkpoint.ckpt", snapshot(model.params(), &state.optimizer,
                                                      checkpoint_meta(t, state.next_iteration)));
  write_text(dir / "log.jsonl", log_text(records));
  write_text(dir / "loss.svg", loss_curve_svg(records));
  JobResult r{variant, seed, eval::run_report(model, test_set, variant, object_actions(cfg.world),
                                              eval_options(cfg, seed))};
  write_reports(dir, r.reports, seed);
  return r;
}

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  int threads = 1;
  bool deterministic = true;
};

RunConfig resolve(const Globals& g) {
  RunConfig cfg = g.config.empty() ? RunConfig{} : load_run_config(g.config);
  if (g.seed) cfg.seeds = {*g.seed};
  if (!g.out.empty()) cfg.out_dir = g.out;
  if (g.threads < 1) throw ConfigError("--threads must be >= 1");
  cfg.validate();
  return cfg;
}

int cmd_gen_data(const RunConfig& cfg, std::ostream& out) {
  for (std::uint64_t seed : cfg.seeds) {
    const auto tr = synth::generate_dataset(cfg.world, seed, kTrainStream, cfg.train_scenes);
    const auto te = synth::generate_dataset(cfg.world, seed, kTestStream, cfg.test_scenes);
    const auto tr_path = dataset_path(cfg, seed, "train");
    const auto te_path = dataset_path(cfg, seed, "test");
    fs::create_directories(tr_path.parent_path());
    synth::write_dataset(tr, tr_path);
    synth::write_dataset(te, te_path);
    out << "seed " << seed << ": train " << tr.scenes.size() << " scenes, test " << te.scenes.size()
        << " scenes\n";
  }
  return 0;
}

struct TrainFlags {
  std::string variant;
  bool resume = false;
  int stop_after = -1;
  bool check_unchanged = false;
};

int cmd_train(const RunConfig& cfg, const TrainFlags& flags, std::ostream& out) {
  const std::string variant = flags.variant.empty() ? cfg.train.variant : flags.variant;
  for (std::uint64_t seed : cfg.seeds) {
    const auto train_set = load_split(cfg, seed, "train");
    const auto t = train_config_for(cfg, variant, seed);
    const fs::path dir = run_dir(cfg, "train", variant, seed);
    net::Model model(t.effective_model(), derive_seed(seed, kInitStream));
    auto state = train::fresh_state(model, t);
    std::vector<train::LogRecord> records;
    if (flags.resume) {
      const auto ckpt_path = dir / "checkpoint.ckpt";
      if (!fs::exists(ckpt_path)) throw ConfigError("nothing to resume: " + ckpt_path.string() + " is missing");
      const auto ckpt = read_checkpoint(ckpt_path);
      check_config_hash(ckpt, t);
      restore(ckpt, model.params(), &state.optimizer);
      state.next_iteration = static_cast<int>(ckpt.meta("next_iteration", 0.0));
      records = read_log(dir / "log.jsonl", state.next_iteration);
      out << "seed " << seed << ": resuming at iteration " << state.next_iteration << "\n";
    }
    const Checkpoint before = snapshot(model.params(), nullptr, {});
    train::TrainOptions opts;
    opts.stop_after = flags.stop_after;
    const auto fresh = train::train(t, model, state, train_set, opts);
    records.insert(records.end(), fresh.begin(), fresh.end());
    fs::create_directories(dir);
    write_checkpoint(dir / "checkpoint.ckpt",
                     snapshot(model.params(), &state.optimizer, checkpoint_meta(t, state.next_iteration)));
    write_text(dir / "log.jsonl", log_text(records));
    if (flags.check_unchanged) {
      if (!(snapshot(model.params(), nullptr, {}) == before)) {
        throw std::runtime_error("parameters changed during training");
      }
      out << "seed " << seed << ": parameters unchanged\n";
    }
    if (state.next_iteration < t.total_iterations()) {
      out << "seed " << seed << ": stopped at iteration " << state.next_iteration << " of "
          << t.total_iterations() << "\n";
      continue;
    }
    write_text(dir / "loss.svg", loss_curve_svg(records));
    out << "seed " << seed << ": final loss " << fixed4(final_loss(model, train_set, t)) << "\n";
    const auto test_set = load_split(cfg, seed, "test");
    const auto reports =
        eval::run_report(model, test_set, variant, object_actions(cfg.world), eval_options(cfg, seed));
    write_reports(dir, reports, seed);
    out << format_reports(reports);
  }
  return 0;
}

struct EvalFlags {
  std::string variant;
  std::string checkpoint;
  std::string dataset;
  bool oracle = false;
  bool untrained = false;
};

int cmd_eval(const RunConfig& cfg, const EvalFlags& flags, std::ostream& out) {
  const std::string variant = flags.variant.empty() ? cfg.train.variant : flags.variant;
  for (std::uint64_t seed : cfg.seeds) {
    const auto t = train_config_for(cfg, variant, seed);
    net::Model model(t.effective_model(), derive_seed(seed, kInitStream));
    if (!flags.untrained && !flags.oracle) {
      const fs::path ckpt_path =
          flags.checkpoint.empty() ? run_dir(cfg, "train", variant, seed) / "checkpoint.ckpt" : fs::path(flags.checkpoint);
      if (!fs::exists(ckpt_path)) throw ConfigError("missing checkpoint " + ckpt_path.string());
      restore(read_checkpoint(ckpt_path), model.params(), nullptr);
    }
    synth::Dataset data;
    if (flags.dataset.empty()) {
      data = load_split(cfg, seed, "test");
    } else {
      if (!fs::exists(flags.dataset)) throw ConfigError("missing dataset " + flags.dataset);
      data = synth::read_dataset(flags.dataset);
    }
    auto options = eval_options(cfg, seed);
    options.ground_truth_oracle = flags.oracle;
    const auto reports = eval::run_report(model, data, variant, object_actions(data.spec), options);
    write_reports(run_dir(cfg, flags.oracle ? "eval-oracle" : "eval", variant, seed), reports, seed);
    out << "seed " << seed << "\n" << format_reports(reports);
  }
  return 0;
}

std::string mean_std(const std::vector<double>& v) {
  if (v.empty()) return "-";
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  const double sd = v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0;
  return fixed4(mean) + " +/- " + fixed4(sd);
}

int cmd_ablate(const RunConfig& cfg, int threads, std::ostream& out) {
  struct Job {
    std::string variant;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  std::map<std::uint64_t, std::pair<synth::Dataset, synth::Dataset>> data;
  for (std::uint64_t seed : cfg.seeds) {
    data.emplace(seed, std::make_pair(load_split(cfg, seed, "train"), load_split(cfg, seed, "test")));
    for (const auto& v : cfg.variants) jobs.push_back({v, seed});
  }
  std::vector<std::optional<JobResult>> results(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  std::mutex io;
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      try {
        const auto& [train_set, test_set] = data.at(jobs[i].seed);
        results[i] = train_and_evaluate(cfg, jobs[i].variant, jobs[i].seed, train_set, test_set,
                                        run_dir(cfg, "ablate", jobs[i].variant, jobs[i].seed));
        std::lock_guard lock(io);
        out << "done " << jobs[i].variant << " seed " << jobs[i].seed << "\n" << std::flush;
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int i = 1; i < std::min<int>(threads, static_cast<int>(jobs.size())); ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  json summary = json::object();
  std::ostringstream table;
  table << std::left << std::setw(12) << "variant" << std::setw(20) << "AP_agent" << std::setw(20) << "AP_role"
        << "AP_kp50\n";
  for (const auto& v : cfg.variants) {
    std::vector<double> agent, role, kp;
    for (const auto& r : results) {
      if (r->variant != v) continue;
      const auto& last = r->reports.back();
      if (last.agent && last.agent->mean) agent.push_back(*last.agent->mean);
      if (last.role && last.role->mean) role.push_back(*last.role->mean);
      if (last.keypoints) kp.push_back(last.keypoints->ap);
    }
    json row = {{"seeds", cfg.seeds}};
    if (!agent.empty()) row["ap_agent"] = agent;
    if (!role.empty()) row["ap_role"] = role;
    if (!kp.empty()) row["ap_kp50"] = kp;
    summary[v] = row;
    table << std::setw(12) << v << std::setw(20) << mean_std(agent) << std::setw(20) << mean_std(role)
          << mean_std(kp) << "\n";
  }
  write_text(cfg.out_dir / "ablate" / "summary.json", summary.dump(2) + "\n");
  write_text(cfg.out_dir / "ablate" / "summary.txt", table.str());
  out << table.str();
  return 0;
}

}  // namespace

void RunConfig::validate() const {
  world.validate();
  train.validate();
  if (seeds.empty()) throw ConfigError("seeds must not be empty");
  if (train_scenes == 0) throw ConfigError("train_scenes must be >= 1");
  if (out_dir.empty()) throw ConfigError("out_dir must not be empty");
  if (variants.empty()) throw ConfigError("variants must not be empty");
  for (const auto& v : variants) {
    auto t = train;
    t.variant = v;
    t.validate();
  }
  const auto& m = train.model;
  if (m.A != world.num_actions()) throw ConfigError("train.model.A must equal the number of world actions");
  if (m.K != world.num_keypoints) throw ConfigError("train.model.K must equal world.num_keypoints");
  if (m.C != world.num_categories) throw ConfigError("train.model.C must equal world.num_categories");
  if (eval.object_threshold < 0.0 || eval.object_threshold > 1.0) {
    throw ConfigError("eval.object_threshold must lie in [0,1]");
  }
  if (eval.random_candidates < 0) throw ConfigError("eval.random_candidates must be >= 0");
  if (eval.candidate_jitter < 0.0) throw ConfigError("eval.candidate_jitter must be >= 0");
}

json run_config_to_json(const RunConfig& c) {
  return {{"world", world_to_json(c.world)},
          {"train", train_to_json(c.train)},
          {"seeds", c.seeds},
          {"train_scenes", c.train_scenes},
          {"test_scenes", c.test_scenes},
          {"out_dir", c.out_dir.string()},
          {"variants", c.variants},
          {"eval",
           {{"candidate_jitter", c.eval.candidate_jitter},
            {"random_candidates", c.eval.random_candidates},
            {"object_threshold", c.eval.object_threshold}}}};
}

RunConfig run_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  static const std::vector<std::string> known{"world", "train",   "seeds", "train_scenes",
                                              "test_scenes", "out_dir", "variants", "eval"};
  for (const auto& item : j.items()) {
    if (std::find(known.begin(), known.end(), item.key()) == known.end()) {
      throw ConfigError("config: unknown key '" + item.key() + "'");
    }
  }
  RunConfig c;
  try {
    if (j.contains("world")) c.world = world_from_json(j.at("world"), c.world);
    if (j.contains("train")) c.train = train_from_json(j.at("train"), c.train);
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("train_scenes")) c.train_scenes = j.at("train_scenes").get<std::size_t>();
    if (j.contains("test_scenes")) c.test_scenes = j.at("test_scenes").get<std::size_t>();
    if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();
    if (j.contains("variants")) c.variants = j.at("variants").get<std::vector<std::string>>();
    if (j.contains("eval")) {
      const auto& e = j.at("eval");
      for (const auto& item : e.items()) {
        if (item.key() != "candidate_jitter" && item.key() != "random_candidates" &&
            item.key() != "object_threshold") {
          throw ConfigError("eval: unknown key '" + item.key() + "'");
        }
      }
      if (e.contains("candidate_jitter")) c.eval.candidate_jitter = e.at("candidate_jitter").get<double>();
      if (e.contains("random_candidates")) c.eval.random_candidates = e.at("random_candidates").get<int>();
      if (e.contains("object_threshold")) c.eval.object_threshold = e.at("object_threshold").get<double>();
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(f);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

fs::path dataset_path(const RunConfig& cfg, std::uint64_t seed, const std::string& split) {
  return cfg.out_dir / "data" / seed_dir(seed) / (split + ".jsonl");
}

fs::path run_dir(const RunConfig& cfg, const std::string& group, const std::string& variant, std::uint64_t seed) {
  return cfg.out_dir / group / variant_dir(variant) / seed_dir(seed);
}

json report_to_json(const eval::StageReport& r, std::uint64_t seed) {
  auto action_json = [](const eval::ActionAp& ap) {
    json per = json::array();
    for (const auto& v : ap.per_action) per.push_back(v ? json(*v) : json(nullptr));
    return json{{"mean", ap.mean ? json(*ap.mean) : json(nullptr)},
                {"per_action", per},
                {"predictions", ap.predictions},
                {"ground_truths", ap.ground_truths}};
  };
  json j = {{"variant", r.variant},
            {"stage", r.stage},
            {"seed", seed},
            {"dataset_fingerprint", r.dataset_fingerprint},
            {"config_fingerprint", r.config_fingerprint}};
  if (r.agent) j["ap_agent"] = action_json(*r.agent);
  if (r.role) j["ap_role"] = action_json(*r.role);
  if (r.keypoints) {
    j["ap_kp50"] = {{"ap", r.keypoints->ap},
                    {"predictions", r.keypoints->predictions},
                    {"ground_truths", r.keypoints->ground_truths}};
  }
  return j;
}

std::string format_reports(const std::vector<eval::StageReport>& reports) {
  std::ostringstream s;
  s << std::left << std::setw(8) << "stage" << std::setw(12) << "AP_agent" << std::setw(12) << "AP_role"
    << "AP_kp50\n";
  auto cell = [](const std::optional<eval::ActionAp>& ap) {
    return ap && ap->mean ? fixed4(*ap->mean) : std::string("-");
  };
  for (const auto& r : reports) {
    s << std::setw(8) << r.stage << std::setw(12) << cell(r.agent) << std::setw(12) << cell(r.role)
      << (r.keypoints ? fixed4(r.keypoints->ap) : std::string("-")) << "\n";
  }
  return s.str();
}

std::string loss_curve_svg(const std::vector<train::LogRecord>& records) {
  constexpr double W = 640, H = 320, pad = 40;
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<line x1=\"" << pad << "\" y1=\"" << H - pad << "\" x2=\"" << W - pad << "\" y2=\"" << H - pad
    << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << pad << "\" y1=\"" << pad << "\" x2=\"" << pad << "\" y2=\"" << H - pad
    << "\" stroke=\"black\"/>\n";
  double hi = 0.0;
  for (const auto& r : records) hi = std::max(hi, r.total);
  if (!records.empty() && hi > 0.0) {
    const double last = std::max(1, records.back().iteration);
    s << "<polyline fill=\"none\" stroke=\"steelblue\" points=\"";
    s << std::fixed << std::setprecision(1);
    for (const auto& r : records) {
      const double x = pad + (W - 2 * pad) * r.iteration / last;
      const double y = H - pad - (H - 2 * pad) * r.total / hi;
      s << x << "," << y << " ";
    }
    s << "\"/>\n";
    s << "<text x=\"" << pad << "\" y=\"" << pad - 8 << "\" font-size=\"12\">total loss (max "
      << std::setprecision(4) << hi << ")</text>\n";
    s << "<text x=\"" << W - pad << "\" y=\"" << H - pad + 16 << "\" font-size=\"12\" text-anchor=\"end\">iteration "
      << records.back().iteration << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Turbo learning for joint HOI recognition and pose estimation on synthetic scenes"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "JSON run config; built-in defaults when omitted");
  app.add_option("--seed", g.seed, "Run only this seed instead of the configured list");
  app.add_option("--out", g.out, "Output directory (overrides out_dir)");
  app.add_option("--threads", g.threads, "Parallel jobs for ablate")->check(CLI::PositiveNumber);
  app.add_option("--deterministic", g.deterministic, "Deterministic execution (always on)");

  auto* gen = app.add_subcommand("gen-data", "Generate train and test datasets for every seed");

  TrainFlags tf;
  auto* trn = app.add_subcommand("train", "Train one variant per seed and evaluate it on the test split");
  trn->add_option("--variant", tf.variant, "Variant to train (default: train.variant)");
  trn->add_flag("--resume", tf.resume, "Continue from the run directory's checkpoint");
  trn->add_option("--stop-after", tf.stop_after, "Stop after this many iterations in total");
  trn->add_flag("--check-unchanged", tf.check_unchanged, "Fail unless the parameters are unchanged");

  EvalFlags ef;
  auto* evl = app.add_subcommand("eval", "Evaluate a checkpoint and write per-stage reports");
  evl->add_option("--variant", ef.variant, "Variant the checkpoint was trained as");
  evl->add_option("--checkpoint", ef.checkpoint, "Checkpoint file (default: the train run directory)");
  evl->add_option("--dataset", ef.dataset, "Dataset file (default: the seed's test split)");
  evl->add_flag("--oracle", ef.oracle, "Score the ground truth itself as the predictions");
  evl->add_flag("--untrained", ef.untrained, "Evaluate freshly initialised weights");

  auto* abl = app.add_subcommand("ablate", "Train and evaluate every configured variant across the seeds");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    const RunConfig cfg = resolve(g);
    if (gen->parsed()) return cmd_gen_data(cfg, out);
    if (trn->parsed()) return cmd_train(cfg, tf, out);
    if (evl->parsed()) return cmd_eval(cfg, ef, out);
    if (abl->parsed()) return cmd_ablate(cfg, g.threads, out);
    return 1;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const CompatibilityError& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace turbohoi::cli
