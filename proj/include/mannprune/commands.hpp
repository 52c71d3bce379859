// Subcommand implementations behind tools/mannprune.cpp. Each command checks
// its inputs completely before creating any output file.
// Run directory layout: docs/run-directory.md.
#pragma once

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mannprune/analysis.hpp"
#include "mannprune/checkpoint.hpp"
#include "mannprune/config.hpp"
#include "mannprune/evaluation.hpp"
#include "mannprune/experiment.hpp"
#include "mannprune/inference.hpp"
#include "mannprune/io.hpp"

namespace mannprune {

namespace fs = std::filesystem;

// ---- logging --------------------------------------------------------------

enum class LogLevel { quiet = 0, error = 1, warn = 2, info = 3, debug = 4 };

/// Level from MANNPRUNE_LOG (quiet|error|warn|info|debug); default warn.
inline LogLevel log_level() {
  static const LogLevel level = [] {
    const char* v = std::getenv("MANNPRUNE_LOG");
    if (!v) return LogLevel::warn;
    const std::string s = v;
    if (s == "quiet") return LogLevel::quiet;
    if (s == "error") return LogLevel::error;
    if (s == "info") return LogLevel::info;
    if (s == "debug") return LogLevel::debug;
    return LogLevel::warn;
  }();
  return level;
}

inline void log(LogLevel level, const std::string& msg) {
  static const char* names[] = {"", "error", "warn", "info", "debug"};
  if (level <= log_level()) std::fprintf(stderr, "[%s] %s\n", names[static_cast<int>(level)], msg.c_str());
}

// ---- datasets -------------------------------------------------------------

inline std::shared_ptr<const SkeletonSchema> schema_for(const RunConfig& rc) {
  return std::make_shared<const SkeletonSchema>(build_schema(rc.data.layout(), rc.data.frame_rate));
}

inline std::vector<GaitSpec> gait_specs_for(const RunConfig& rc) {
  if (rc.data.gaits.empty()) return gait_suite(rc.seed, rc.data.seconds_per_clip);
  std::vector<GaitSpec> out;
  std::uint64_t k = 0;
  for (GaitType g : rc.data.gaits) out.push_back(GaitSpec::preset(g, Rng::mix(rc.seed + (++k)), rc.data.seconds_per_clip));
  return out;
}

inline std::vector<MotionClip> generate_clips(const RunConfig& rc) {
  const auto schema = schema_for(rc);
  std::vector<MotionClip> clips;
  for (const auto& spec : gait_specs_for(rc)) clips.push_back(generate_gait(spec, schema));
  return clips;
}

inline std::string clip_file_name(std::size_t index, const MotionClip& clip) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%02zu_", index);
  return std::string(buf) + clip.label + ".csv";
}

/// Writes schema.json, manifest.json, and clips/NN_<gait>.csv under out_dir.
inline json cmd_gen_data(const RunConfig& rc, const fs::path& out_dir) {
  rc.validate();
  const auto specs = gait_specs_for(rc);
  for (const auto& s : specs) s.validate();
  const auto schema = schema_for(rc);
  std::vector<MotionClip> clips;
  for (const auto& spec : specs) clips.push_back(generate_gait(spec, schema));
  const MotionDataset ds = build_dataset(clips, rc.data.train_fraction);

  fs::create_directories(out_dir / "clips");
  write_json(out_dir / "schema.json", schema_to_json(*schema));
  json entries = json::array();
  for (std::size_t i = 0; i < clips.size(); ++i) {
    const std::string file = "clips/" + clip_file_name(i, clips[i]);
    write_text(out_dir / file, clip_to_csv(clips[i]));
    std::size_t train = 0, val = 0;
    for (const auto& p : ds.train_pairs) train += p.clip == i;
    for (const auto& p : ds.val_pairs) val += p.clip == i;
    entries.push_back({{"id", clips[i].id},
                       {"gait", clips[i].label},
                       {"file", file},
                       {"frames", clips[i].frames.rows},
                       {"train_pairs", train},
                       {"val_pairs", val},
                       {"spec", gait_to_json(specs[i])}});
  }
  json manifest = {{"seed", rc.seed},
                   {"schema", "schema.json"},
                   {"frame_rate", schema->frame_rate},
                   {"dim", schema->dim()},
                   {"train_fraction", rc.data.train_fraction},
                   {"train_pairs", ds.train_pairs.size()},
                   {"val_pairs", ds.val_pairs.size()},
                   {"total_pairs", ds.pair_count()},
                   {"clips", entries}};
  write_json(out_dir / "manifest.json", manifest);
  log(LogLevel::info, "wrote " + std::to_string(clips.size()) + " clips, " + std::to_string(ds.pair_count()) +
                          " pairs to " + out_dir.string());
  return manifest;
}

/// Reads a directory produced by gen-data (or hand-written in the same format).
inline MotionDataset load_dataset(const fs::path& data_dir) {
  const json manifest = read_json(data_dir / "manifest.json");
  try {
    const auto schema = std::make_shared<const SkeletonSchema>(
        schema_from_json(read_json(data_dir / manifest.at("schema").get<std::string>())));
    std::vector<MotionClip> clips;
    for (const auto& e : manifest.at("clips")) {
      const std::string file = e.at("file").get<std::string>();
      MotionClip c = clip_from_csv(read_text(data_dir / file), schema, e.value("id", file));
      c.label = e.value("gait", c.label);
      clips.push_back(std::move(c));
    }
    return build_dataset(std::move(clips), manifest.value("train_fraction", 0.9));
  } catch (const json::exception& e) {
    throw IoError("manifest '" + (data_dir / "manifest.json").string() + "': " + e.what());
  }
}

inline MotionDataset dataset_for(const RunConfig& rc, const std::optional<fs::path>& data_dir) {
  if (data_dir) return load_dataset(*data_dir);
  return build_dataset(generate_clips(rc), rc.data.train_fraction);
}

// ---- training -------------------------------------------------------------

struct TrainOutcome {
  Checkpoint checkpoint;
  TrainReport report;
};

/// Trains from scratch, or continues from `resume` (a checkpoint holding train
/// state) up to rc.train.epochs. Writes checkpoint.bin, train_report.json,
/// config.json, and prune_report.json when pruning.
inline TrainOutcome cmd_train(const RunConfig& rc, const std::optional<fs::path>& data_dir, const fs::path& out_dir,
                              const std::optional<fs::path>& resume = std::nullopt) {
  rc.validate();
  const MotionDataset data = dataset_for(rc, data_dir);
  const NetworkConfig net_cfg = rc.network_config(*data.schema);
  const TrainConfig tc = rc.train_config();

  TrainOutcome out;
  Checkpoint& ck = out.checkpoint;
  ck.seed = rc.seed;
  if (resume) {
    ck = load_checkpoint(resume->string());
    if (!(ck.net.config == net_cfg)) throw ConfigError("resume: checkpoint network does not match the config");
    if (ck.seed != rc.seed) throw ConfigError("resume: checkpoint seed " + std::to_string(ck.seed) + " differs from config");
    if (rc.prune.has_value() != ck.prune.has_value() || (rc.prune && !(*rc.prune == ck.prune->config)))
      throw ConfigError("resume: prune settings differ from the checkpoint");
    if (!ck.train) throw ConfigError("resume: checkpoint carries no training state");
  } else {
    Rng init_rng = Rng::derive(tc.seed, 0x494e4954ULL);
    ck.net = init_network<float>(net_cfg, init_rng);
    attach_normalization(ck.net, data);
    if (rc.prune) ck.prune = PruneState::create(ck.net, *rc.prune);
    ck.train = TrainState{OptimizerState<float>::zeros(ck.net), 0};
  }

  fs::create_directories(out_dir);
  write_json(out_dir / "config.json", run_config_to_json(rc));
  TrainHooks hooks;
  hooks.on_epoch = [](const EpochRecord& e) {
    log(LogLevel::info, "epoch " + std::to_string(e.epoch) + " train " + format_number(e.train_loss) + " val " +
                            format_number(e.val_loss) + " sparsity " + format_number(e.sparsity) + " (" +
                            format_number(e.wall_seconds) + " s)");
  };
  if (tc.epochs > 0) out.report = train(ck.net, data, tc, ck.prune ? &*ck.prune : nullptr, hooks, &*ck.train);
  out.report.seed = tc.seed;
  out.report.steps = ck.train->optimizer.step;
  out.report.final_sparsity = ck.prune ? ck.prune->sparsity : 0.0;

  save_checkpoint((out_dir / "checkpoint.bin").string(), ck);
  write_json(out_dir / "train_report.json", train_report_to_json(out.report));
  if (ck.prune) write_json(out_dir / "prune_report.json", prune_report_to_json(ck.net, *ck.prune));
  return out;
}

// ---- evaluation -----------------------------------------------------------

inline std::shared_ptr<const SkeletonSchema> schema_for_network(const RunConfig& rc, const MoENetwork<float>& net) {
  auto schema = schema_for(rc);
  if (schema->dim() != net.config.d_in)
    throw ConfigError("checkpoint expects " + std::to_string(net.config.d_in) + "-column frames, config skeleton '" +
                      rc.data.skeleton + "' has " + std::to_string(schema->dim()));
  return schema;
}

struct EvalOutcome {
  std::vector<GaitSkating> skating;
  CostReport cost;
};

/// Rolls the checkpoint out on the eval gaits (or on one gait spec) and writes
/// skating.{json,csv} and cost.{json,csv}.
inline EvalOutcome cmd_eval(const fs::path& checkpoint, const RunConfig& rc, const fs::path& out_dir,
                            const std::optional<fs::path>& gait_spec = std::nullopt) {
  rc.validate();
  const Checkpoint ck = load_checkpoint(checkpoint.string());
  const auto schema = schema_for_network(rc, ck.net);
  EvalOutcome out;
  if (gait_spec) {
    const GaitSpec spec = gait_from_json(read_json(*gait_spec));
    const MotionClip gt = generate_gait(spec, schema);
    const std::size_t frames = std::min(rc.eval.rollout_frames, gt.frames.rows - 1);
    GaitSkating g{to_string(spec.type), {}, false, {}};
    try {
      const Rollout r = rollout(ck.net, gt.frames.row(0), control_series(gt, frames), frames, schema, g.gait);
      g.report = foot_skate(r.clip, rc.eval.threshold_cm);
    } catch (const NumericError& e) {
      g.diverged = true;
      g.error = e.what();
      g.report.aggregate = std::numeric_limits<double>::quiet_NaN();
    }
    out.skating.push_back(g);
  } else {
    out.skating = evaluate_skating(ck.net, rc.eval, schema);
  }
  out.cost = cost_report(ck.net, ck.prune ? &*ck.prune : nullptr);

  fs::create_directories(out_dir);
  json sk = {{"seed", ck.seed}, {"threshold_cm", rc.eval.threshold_cm}, {"mean_skating", mean_skating(out.skating)},
             {"gaits", gait_skating_to_json(out.skating)}};
  write_json(out_dir / "skating.json", sk);
  write_text(out_dir / "skating.csv", skating_csv(out.skating));
  write_json(out_dir / "cost.json", cost_to_json(out.cost));
  write_text(out_dir / "cost.csv", cost_csv({out.cost}));
  for (const auto& g : out.skating)
    if (g.diverged) log(LogLevel::warn, "rollout for " + g.gait + " diverged: " + g.error);
  return out;
}

// ---- sparsity sweep ---------------------------------------------------------

/// "0.1..0.9" (step 0.1), "0.1..0.9:0.2", or "0.1,0.5,0.9". Values must lie in [0, 1).
inline std::vector<double> parse_sparsity_list(const std::string& text) {
  auto number = [&](const std::string& s) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size()) throw ConfigError("sparsity list: '" + s + "' is not a number");
    return v;
  };
  std::vector<double> out;
  const auto range = text.find("..");
  if (range != std::string::npos) {
    std::string hi = text.substr(range + 2), step = "0.1";
    if (const auto colon = hi.find(':'); colon != std::string::npos) {
      step = hi.substr(colon + 1);
      hi = hi.substr(0, colon);
    }
    const double a = number(text.substr(0, range)), b = number(hi), d = number(step);
    if (!(d > 0) || b < a) throw ConfigError("sparsity list: bad range '" + text + "'");
    const long n = std::lround(std::floor((b - a) / d + 1e-9));
    for (long i = 0; i <= n; ++i) out.push_back(std::round((a + static_cast<double>(i) * d) * 1e9) / 1e9);
  } else {
    std::size_t pos = 0;
    while (pos <= text.size()) {
      const auto comma = text.find(',', pos);
      out.push_back(number(text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos)));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
  }
  if (out.empty()) throw ConfigError("sparsity list is empty");
  for (double s : out)
    if (!(s >= 0.0 && s < 1.0)) throw ConfigError("sparsity list: " + format_number(s) + " outside [0, 1)");
  return out;
}

struct SweepRow {
  double sparsity = 0;
  bool ok = false;
  std::string error;
  double achieved = 0;
  double val_mse = 0;
  std::vector<GaitSkating> skating;
  double skating_mean = 0;
  CostReport cost;
};

/// One training run per sparsity, all sharing the config seed. A failing member
/// is recorded and the sweep moves on.
inline std::vector<SweepRow> cmd_sweep(const RunConfig& rc, const std::vector<double>& sparsities,
                                       const std::optional<fs::path>& data_dir, const fs::path& out_dir) {
  rc.validate();
  if (sparsities.empty()) throw ConfigError("sweep: empty sparsity list");
  for (double s : sparsities)
    if (!(s >= 0.0 && s < 1.0)) throw ConfigError("sweep: sparsity " + format_number(s) + " outside [0, 1)");
  const MotionDataset data = dataset_for(rc, data_dir);
  const NetworkConfig net_cfg = rc.network_config(*data.schema);
  fs::create_directories(out_dir);
  write_json(out_dir / "config.json", run_config_to_json(rc));

  std::vector<SweepRow> rows;
  for (double s : sparsities) {
    SweepRow row;
    row.sparsity = s;
    PruneConfig pc = rc.prune.value_or(PruneConfig{});
    pc.target_sparsity = s;
    try {
      const auto r = run_experiment(net_cfg, rc.train_config(), pc, data, rc.eval);
      row.ok = true;
      row.achieved = r.cost.sparsity;
      row.val_mse = r.val_mse;
      row.skating = r.skating;
      row.skating_mean = r.skating_mean;
      row.cost = r.cost;
    } catch (const std::exception& e) {
      row.error = e.what();
      log(LogLevel::warn, "sweep member s=" + format_number(s) + " failed: " + row.error);
    }
    log(LogLevel::info, "sweep s=" + format_number(s) + " skating " + format_number(row.skating_mean));
    rows.push_back(std::move(row));
  }

  std::string csv = "sparsity,achieved_sparsity,val_mse,skating_mean";
  for (GaitType g : rc.eval.gaits) csv += std::string(",skating_") + to_string(g);
  csv += ",size_Mb,MFLOPs,nonzero_params,status\n";
  std::string cost = kCostCsvHeader;
  json js = json::array();
  for (const auto& r : rows) {
    csv += format_number(r.sparsity) + "," + format_number(r.achieved) + "," + format_number(r.val_mse) + "," +
           format_number(r.skating_mean);
    for (std::size_t k = 0; k < rc.eval.gaits.size(); ++k)
      csv += "," + (k < r.skating.size() ? format_number(r.skating[k].report.aggregate) : std::string("nan"));
    csv += "," + format_number(r.cost.size_megabits) + "," + format_number(r.cost.mflops_total) + "," +
           std::to_string(r.cost.nonzero_params) + "," + (r.ok ? "ok" : "failed") + "\n";
    if (r.ok) cost += cost_csv_row(r.cost);
    json j = {{"sparsity", r.sparsity}, {"status", r.ok ? "ok" : "failed"}};
    if (r.ok) {
      j["achieved_sparsity"] = r.achieved;
      j["val_mse"] = r.val_mse;
      j["skating_mean"] = r.skating_mean;
      j["skating"] = gait_skating_to_json(r.skating);
      j["cost"] = cost_to_json(r.cost);
    } else {
      j["error"] = r.error;
    }
    js.push_back(j);
  }
  write_text(out_dir / "sweep.csv", csv);
  write_text(out_dir / "cost.csv", cost);
  write_json(out_dir / "sweep.json", {{"seed", rc.seed}, {"rows", js}});
  return rows;
}

// ---- equal-parameter comparison ----------------------------------------------

struct CompareOutcome {
  std::vector<ComparisonRow> rows;
  std::vector<PairCheck> checks;
  std::vector<EqualParamPair> pairs;
  std::vector<std::string> warnings;  // seeds where the sparse model skated more
};

inline ComparisonProtocol comparison_protocol(const RunConfig& rc, const SkeletonSchema& schema) {
  ComparisonProtocol p;
  p.large = rc.network_config(schema);
  p.seeds = rc.compare.seeds;
  p.train = rc.train_config();
  p.prune = rc.prune.value_or(PruneConfig{});
  p.eval = rc.eval;
  p.tolerance = rc.compare.tolerance;
  for (auto pair : rc.compare.pairs) {
    if (pair.sparse_sparsity < 0) pair.sparse_sparsity = matched_sparsity(p.large, pair.dense_h, p.prune);
    p.pairs.push_back(pair);
  }
  return p;
}

/// Dense baselines against pruned copies of the large network at matched
/// nonzero counts. Writes comparison.{csv,json}.
inline CompareOutcome cmd_compare(const RunConfig& rc, const std::optional<fs::path>& data_dir, const fs::path& out_dir) {
  rc.validate();
  const MotionDataset data = dataset_for(rc, data_dir);
  const ComparisonProtocol protocol = comparison_protocol(rc, *data.schema);
  CompareOutcome out;
  out.pairs = protocol.pairs;
  for (const auto& p : protocol.pairs) out.checks.push_back(check_pair(protocol.large, p, protocol.prune, protocol.tolerance));

  out.rows = compare_equal_params(protocol, data);
  for (std::size_t i = 0; i + 1 < out.rows.size(); i += 2) {
    const auto& d = out.rows[i];
    const auto& s = out.rows[i + 1];
    if (!(s.skating_mean <= d.skating_mean))
      out.warnings.push_back("seed " + std::to_string(s.seed) + ", dense h=" + std::to_string(d.h_size) +
                             ": sparse skating " + format_number(s.skating_mean) + " > dense " +
                             format_number(d.skating_mean));
  }
  for (const auto& w : out.warnings) log(LogLevel::warn, w);

  fs::create_directories(out_dir);
  json checks = json::array();
  for (std::size_t i = 0; i < out.checks.size(); ++i)
    checks.push_back({{"dense_h", out.pairs[i].dense_h},
                      {"sparsity", out.pairs[i].sparse_sparsity},
                      {"dense_nonzero", out.checks[i].dense_nonzero},
                      {"sparse_nonzero", out.checks[i].sparse_nonzero},
                      {"relative_gap", out.checks[i].relative_gap}});
  write_text(out_dir / "comparison.csv", comparison_csv(out.rows));
  write_json(out_dir / "comparison.json",
             {{"seeds", rc.compare.seeds}, {"pairs", checks}, {"rows", comparison_to_json(out.rows)}, {"warnings", out.warnings}});
  return out;
}

// ---- ablation, traces, benchmark, export ------------------------------------

/// Zeroes each expert's blend weight in turn. Writes ablation.json and the
/// ablated rollouts as clip CSVs under ablation_clips/.
inline AblationStudy cmd_ablate(const fs::path& checkpoint, const RunConfig& rc, const fs::path& out_dir,
                                bool renormalize = false) {
  rc.validate();
  const Checkpoint ck = load_checkpoint(checkpoint.string());
  const auto schema = schema_for_network(rc, ck.net);
  const AblationStudy study = run_ablation(ck.net, rc.eval, schema, renormalize);
  fs::create_directories(out_dir / "ablation_clips");
  json j = ablation_to_json(study);
  j["seed"] = ck.seed;
  j["renormalize"] = renormalize;
  write_json(out_dir / "ablation.json", j);
  for (const auto& e : study.experts)
    for (std::size_t k = 0; k < e.clips.size(); ++k)
      write_text(out_dir / "ablation_clips" / ("expert" + std::to_string(e.expert) + "_" + e.gaits[k].gait + ".csv"),
                 clip_to_csv(e.clips[k]));
  return study;
}

inline std::string model_label(const Checkpoint& ck) {
  return ck.prune && ck.prune->sparsity > 0 ? "sparse" : "dense";
}

struct TraceOutcome {
  std::vector<ActivationTrace> traces;
  std::vector<TraceComparison> comparisons;
};

/// Blend-coefficient traces on the eval gaits. With `against`, both models are
/// traced and compared gait by gait (entropy delta = against - checkpoint).
inline TraceOutcome cmd_trace(const fs::path& checkpoint, const RunConfig& rc, const fs::path& out_dir,
                              const std::optional<fs::path>& against = std::nullopt) {
  rc.validate();
  const Checkpoint a = load_checkpoint(checkpoint.string());
  const auto schema = schema_for_network(rc, a.net);
  std::optional<Checkpoint> b;
  if (against) {
    b = load_checkpoint(against->string());
    schema_for_network(rc, b->net);
    if (b->net.experts.size() != a.net.experts.size()) throw ConfigError("trace: models have different expert counts");
  }
  TraceOutcome out;
  std::string la = model_label(a);
  out.traces = trace_activations(a.net, rc.eval, schema, la);
  if (b) {
    std::string lb = model_label(*b);
    if (lb == la) {
      la += "_a";
      lb += "_b";
      for (auto& t : out.traces) t.model = la;
    }
    const auto tb = trace_activations(b->net, rc.eval, schema, lb);
    for (std::size_t k = 0; k < tb.size(); ++k) out.comparisons.push_back(compare_traces(out.traces[k], tb[k]));
    out.traces.insert(out.traces.end(), tb.begin(), tb.end());
  }
  fs::create_directories(out_dir);
  write_text(out_dir / "trace.csv", trace_csv(out.traces));
  json cmp = json::array();
  for (const auto& c : out.comparisons) cmp.push_back(trace_comparison_to_json(c));
  write_json(out_dir / "trace.json", {{"traces", trace_summary_to_json(out.traces)}, {"comparisons", cmp}});
  return out;
}

/// Dense vs CSR timing at each sparsity, on the checkpoint or on a freshly
/// initialized network of the configured shape. Writes bench.{json,csv}.
inline BenchReport cmd_bench(const std::optional<fs::path>& checkpoint, const RunConfig& rc,
                             const std::vector<double>& sparsities, const fs::path& out_dir, std::size_t reps = 200) {
  rc.validate();
  MoENetwork<float> net;
  if (checkpoint) {
    net = load_checkpoint(checkpoint->string()).net;
  } else {
    Rng rng = Rng::derive(rc.seed, 0x494e4954ULL);
    net = init_network<float>(rc.network_config(*schema_for(rc)), rng);
  }
  const BenchReport report = bench_inference(net, sparsities, reps, rc.prune.value_or(PruneConfig{}), rc.seed);
  fs::create_directories(out_dir);
  write_json(out_dir / "bench.json", bench_to_json(report));
  write_text(out_dir / "bench.csv", bench_csv(report));
  for (const auto& r : report.rows)
    log(LogLevel::info, "bench s=" + format_number(r.sparsity) + " speedup " + format_number(r.speedup));
  return report;
}

/// Human-readable dump of a checkpoint: model.json (config, normalization,
/// tensor table), one CSV per tensor, cost report, and prune report if any.
inline void cmd_export(const fs::path& checkpoint, const fs::path& out_dir) {
  const Checkpoint ck = load_checkpoint(checkpoint.string());
  const auto& net = ck.net;
  fs::create_directories(out_dir / "tensors");
  json tensors = json::array();
  for (std::size_t id = 0; id < net.tensor_count(); ++id) {
    const auto info = net.info(id);
    const auto& t = net.tensor(id);
    std::size_t zeros = 0;
    std::string csv;
    for (std::size_t r = 0; r < t.rows; ++r) {
      for (std::size_t c = 0; c < t.cols; ++c) {
        if (c) csv += ',';
        csv += format_number(t(r, c));
        zeros += t(r, c) == 0.0f;
      }
      csv += '\n';
    }
    write_text(out_dir / "tensors" / (info.name + ".csv"), csv);
    tensors.push_back({{"id", id}, {"name", info.name}, {"rows", t.rows}, {"cols", t.cols}, {"zeros", zeros}});
  }
  const auto& c = net.config;
  json model = {{"seed", ck.seed},
                {"config",
                 {{"d_in", c.d_in},
                  {"d_out", c.d_out},
                  {"h_size", c.h_size},
                  {"n_experts", c.n_experts},
                  {"g_hidden", c.g_hidden},
                  {"dropout_retention", c.dropout_retention},
                  {"gating_indices", c.gating_indices}}},
                {"normalization",
                 {{"in_mean", net.norm.in_mean},
                  {"in_std", net.norm.in_std},
                  {"out_mean", net.norm.out_mean},
                  {"out_std", net.norm.out_std}}},
                {"tensors", tensors},
                {"trained_epochs", ck.train ? ck.train->epochs_done : 0},
                {"optimizer_steps", ck.train ? ck.train->optimizer.step : 0}};
  write_json(out_dir / "model.json", model);
  const CostReport cost = cost_report(net, ck.prune ? &*ck.prune : nullptr);
  write_json(out_dir / "cost.json", cost_to_json(cost));
  write_text(out_dir / "cost.csv", cost_csv({cost}));
  if (ck.prune) write_json(out_dir / "prune_report.json", prune_report_to_json(net, *ck.prune));
}

}  // namespace mannprune
