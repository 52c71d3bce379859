// JSON and CSV formats for schemas, gait specs, clips, and reports.
// Column lists for every CSV are in docs/formats.md.
#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mannprune/analysis.hpp"
#include "mannprune/evaluation.hpp"
#include "mannprune/experiment.hpp"
#include "mannprune/motion.hpp"
#include "mannprune/pruning.hpp"
#include "mannprune/training.hpp"

namespace mannprune {

using json = nlohmann::ordered_json;

inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline json read_json(const std::filesystem::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw IoError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

inline void write_json(const std::filesystem::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

// ---- schema ---------------------------------------------------------------

inline json schema_to_json(const SkeletonSchema& s) {
  json joints = json::array();
  for (std::size_t j = 0; j < s.joint_count(); ++j)
    joints.push_back({{"name", s.joint_names[j]}, {"parent", s.parents[j]}});
  json ranges = json::array();
  for (const auto& r : s.ranges) ranges.push_back({{"role", r.role}, {"begin", r.begin}, {"end", r.end}});
  json feet = json::array();
  for (const auto& f : s.feet) feet.push_back({{"joint", f.joint}, {"height_column", f.height}, {"speed_column", f.speed}});
  return {{"layout",
           {{"spine", s.layout.spine},
            {"neck", s.layout.neck},
            {"tail", s.layout.tail},
            {"ears", s.layout.ears},
            {"leg_joints", s.layout.leg_joints}}},
          {"frame_rate", s.frame_rate},
          {"units", s.units},
          {"dim", s.dim()},
          {"joints", joints},
          {"ranges", ranges},
          {"feet", feet},
          {"gating_columns", s.gating_columns},
          {"control_columns", s.control_columns},
          {"columns", s.columns}};
}

/// Rebuilds the schema from its layout and checks the stored column list against it.
inline SkeletonSchema schema_from_json(const json& j) {
  try {
    const auto& l = j.at("layout");
    SkeletonLayout layout{l.at("spine").get<std::size_t>(), l.at("neck").get<std::size_t>(),
                          l.at("tail").get<std::size_t>(), l.at("ears").get<std::size_t>(),
                          l.at("leg_joints").get<std::size_t>()};
    SkeletonSchema s = build_schema(layout, j.at("frame_rate").get<double>());
    if (j.contains("columns") && j.at("columns").get<std::vector<std::string>>() != s.columns)
      throw ConfigError("schema JSON column list does not match its layout");
    return s;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("schema JSON: ") + e.what());
  }
}

// ---- gait specs -----------------------------------------------------------

inline json gait_to_json(const GaitSpec& g) {
  return {{"type", to_string(g.type)},       {"duty", g.duty},
          {"phase", g.phase},                {"stride_cm", g.stride_cm},
          {"speed_cm_s", g.speed_cm_s},      {"turn_deg_s", g.turn_deg_s},
          {"swing_height_cm", g.swing_height_cm}, {"noise", g.noise},
          {"duration_s", g.duration_s},      {"seed", g.seed}};
}

/// Missing keys fall back to the preset of the given type; unknown keys are rejected.
inline GaitSpec gait_from_json(const json& j) {
  static const std::vector<std::string> known{"type",       "duty",  "phase", "stride_cm",  "speed_cm_s", "turn_deg_s",
                                              "swing_height_cm", "noise", "duration_s", "seed"};
  if (!j.is_object()) throw ConfigError("gait spec must be a JSON object");
  for (const auto& [k, v] : j.items())
    if (std::find(known.begin(), known.end(), k) == known.end()) throw ConfigError("gait spec: unknown key '" + k + "'");
  try {
    const GaitType type = gait_from_string(j.value("type", std::string("walk")));
    GaitSpec g = GaitSpec::preset(type, j.value("seed", std::uint64_t{0}), j.value("duration_s", 2.0));
    if (j.contains("duty")) g.duty = j.at("duty").get<std::array<double, kFeet>>();
    if (j.contains("phase")) g.phase = j.at("phase").get<std::array<double, kFeet>>();
    g.stride_cm = j.value("stride_cm", g.stride_cm);
    g.speed_cm_s = j.value("speed_cm_s", g.speed_cm_s);
    g.turn_deg_s = j.value("turn_deg_s", g.turn_deg_s);
    g.swing_height_cm = j.value("swing_height_cm", g.swing_height_cm);
    g.noise = j.value("noise", g.noise);
    g.validate();
    return g;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("gait spec: ") + e.what());
  }
}

// ---- clips ----------------------------------------------------------------

inline std::string clip_to_csv(const MotionClip& clip) {
  std::string out;
  const auto& cols = clip.schema->columns;
  for (std::size_t c = 0; c < cols.size(); ++c) {
    if (c) out += ',';
    out += cols[c];
  }
  out += '\n';
  char buf[32];
  for (std::size_t t = 0; t < clip.frames.rows; ++t) {
    for (std::size_t c = 0; c < clip.frames.cols; ++c) {
      if (c) out += ',';
      std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(clip.frames(t, c)));
      out += buf;
    }
    out += '\n';
  }
  return out;
}

/// Parses a clip CSV whose header must equal the schema's column list.
inline MotionClip clip_from_csv(const std::string& text, std::shared_ptr<const SkeletonSchema> schema,
                                const std::string& id = "clip") {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw IoError("clip CSV '" + id + "': empty file");
  std::vector<std::string> header;
  {
    std::istringstream hs(line);
    std::string cell;
    while (std::getline(hs, cell, ',')) header.push_back(cell);
  }
  if (header != schema->columns)
    throw IoError("clip CSV '" + id + "': header does not match schema (" + std::to_string(header.size()) + " vs " +
                  std::to_string(schema->dim()) + " columns)");
  std::vector<float> values;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++rows;
    const char* p = line.data();
    const char* end = p + line.size();
    for (std::size_t c = 0; c < schema->dim(); ++c) {
      float v = 0;
      const auto [next, ec] = std::from_chars(p, end, v);
      if (ec != std::errc())
        throw IoError("clip CSV '" + id + "': bad number at row " + std::to_string(rows) + ", column " + std::to_string(c));
      p = next;
      if (c + 1 < schema->dim()) {
        if (p == end || *p != ',')
          throw IoError("clip CSV '" + id + "': row " + std::to_string(rows) + " has too few columns");
        ++p;
      }
      values.push_back(v);
    }
    if (p != end && !(p + 1 == end && *p == '\r'))
      throw IoError("clip CSV '" + id + "': row " + std::to_string(rows) + " has too many columns");
  }
  MotionClip clip;
  clip.schema = std::move(schema);
  clip.id = id;
  clip.label = id;
  clip.frames = Matrix<float>(rows, clip.schema->dim());
  clip.frames.data = std::move(values);
  return clip;
}

// ---- training and pruning reports ------------------------------------------

/// Wall-clock times are left out so that reruns with one seed are byte-identical.
inline json train_report_to_json(const TrainReport& r) {
  json epochs = json::array();
  for (const auto& e : r.epochs)
    epochs.push_back({{"epoch", e.epoch},
                      {"train_loss", e.train_loss},
                      {"val_loss", e.val_loss},
                      {"annealing", e.annealing},
                      {"sparsity", e.sparsity}});
  return {{"seed", r.seed}, {"steps", r.steps}, {"final_sparsity", r.final_sparsity}, {"epochs", epochs}};
}

template <typename T>
json prune_report_to_json(const MoENetwork<T>& net, const PruneState& st) {
  json tensors = json::array();
  for (std::size_t id = 0; id < net.tensor_count(); ++id) {
    if (!st.masks.prunable(id)) continue;
    const auto& keep = st.masks.keep[id];
    const auto zeros = static_cast<std::size_t>(std::count(keep.begin(), keep.end(), std::uint8_t{0}));
    tensors.push_back({{"name", net.info(id).name},
                       {"size", keep.size()},
                       {"masked", zeros},
                       {"sparsity", keep.empty() ? 0.0 : static_cast<double>(zeros) / static_cast<double>(keep.size())}});
  }
  json events = json::array();
  for (const auto& e : st.history)
    events.push_back({{"step", e.step}, {"tau", e.tau}, {"target", e.target}, {"achieved", e.achieved}});
  return {{"scope", to_string(st.config.scope)},
          {"schedule", to_string(st.config.schedule)},
          {"target_sparsity", st.config.target_sparsity},
          {"global_sparsity", st.sparsity},
          {"prunable", st.total_prunable},
          {"masked", mask_zeros(st.masks)},
          {"tensors", tensors},
          {"events", events}};
}

// ---- skating and cost -------------------------------------------------------

inline json skating_to_json(const SkatingReport& r) {
  json legs = json::array();
  for (const auto& l : r.legs) legs.push_back({{"joint", l.joint}, {"mean", l.mean}, {"contact_frames", l.contact_frames}});
  return {{"aggregate", r.aggregate}, {"frames", r.frames}, {"threshold_cm", r.threshold_cm}, {"legs", legs}};
}

inline json gait_skating_to_json(const std::vector<GaitSkating>& gs) {
  json out = json::array();
  for (const auto& g : gs) {
    json j = skating_to_json(g.report);
    j["gait"] = g.gait;
    j["diverged"] = g.diverged;
    if (g.diverged) j["error"] = g.error;
    out.push_back(j);
  }
  return out;
}

inline std::string skating_csv(const std::vector<GaitSkating>& gs) {
  std::string out = "gait,leg,mean_cm_per_frame,contact_frames,aggregate,diverged\n";
  for (const auto& g : gs) {
    for (const auto& l : g.report.legs)
      out += g.gait + "," + l.joint + "," + format_number(l.mean) + "," + std::to_string(l.contact_frames) + "," +
             format_number(g.report.aggregate) + "," + (g.diverged ? "1" : "0") + "\n";
    if (g.report.legs.empty()) out += g.gait + ",,,0," + format_number(g.report.aggregate) + "," + (g.diverged ? "1" : "0") + "\n";
  }
  return out;
}

inline json cost_to_json(const CostReport& c) {
  return {{"total_params", c.total_params},   {"prunable_params", c.prunable_params},
          {"masked_params", c.masked_params}, {"nonzero_params", c.nonzero_params},
          {"sparsity", c.sparsity},           {"size_Mb", c.size_megabits},
          {"size_MB", c.size_megabytes},      {"MFLOPs", c.mflops_total},
          {"MFLOPs_prunable", c.mflops_prunable}, {"MFLOPs_fixed", c.mflops_fixed}};
}

inline const char* kCostCsvHeader = "sparsity,size_Mb,MFLOPs,nonzero_params,total_params,MFLOPs_fixed\n";

inline std::string cost_csv_row(const CostReport& c) {
  return format_number(c.sparsity) + "," + format_number(c.size_megabits) + "," + format_number(c.mflops_total) + "," +
         std::to_string(c.nonzero_params) + "," + std::to_string(c.total_params) + "," + format_number(c.mflops_fixed) +
         "\n";
}

inline std::string cost_csv(const std::vector<CostReport>& rows) {
  std::string out = kCostCsvHeader;
  for (const auto& c : rows) out += cost_csv_row(c);
  return out;
}

// ---- benchmark ------------------------------------------------------------

inline json bench_to_json(const BenchReport& b) {
  json rows = json::array();
  for (const auto& r : b.rows) {
    json layers = json::array();
    for (const auto& l : r.layers)
      layers.push_back({{"layer", l.layer},
                        {"rows", l.rows},
                        {"cols", l.cols},
                        {"nnz", l.nnz},
                        {"dense_ns", l.dense_ns},
                        {"csr_ns", l.csr_ns},
                        {"speedup", l.speedup}});
    rows.push_back({{"sparsity", r.sparsity},
                    {"nnz", r.nnz},
                    {"max_abs_diff", r.max_abs_diff},
                    {"dense_ns", r.dense_ns},
                    {"csr_ns", r.csr_ns},
                    {"speedup", r.speedup},
                    {"layers", layers}});
  }
  return {{"reps", b.reps}, {"timer_resolution_ns", b.timer_resolution_ns}, {"rows", rows}};
}

inline std::string bench_csv(const BenchReport& b) {
  std::string out = "sparsity,scope,rows,cols,nnz,dense_ns,csr_ns,speedup,max_abs_diff\n";
  for (const auto& r : b.rows) {
    for (const auto& l : r.layers)
      out += format_number(r.sparsity) + "," + l.layer + "," + std::to_string(l.rows) + "," + std::to_string(l.cols) + "," +
             std::to_string(l.nnz) + "," + format_number(l.dense_ns) + "," + format_number(l.csr_ns) + "," +
             format_number(l.speedup) + "," + format_number(r.max_abs_diff) + "\n";
    out += format_number(r.sparsity) + ",network,,," + std::to_string(r.nnz) + "," + format_number(r.dense_ns) + "," +
           format_number(r.csr_ns) + "," + format_number(r.speedup) + "," + format_number(r.max_abs_diff) + "\n";
  }
  return out;
}

// ---- dense/sparse comparison ----------------------------------------------

inline json comparison_to_json(const std::vector<ComparisonRow>& rows) {
  json out = json::array();
  for (const auto& r : rows)
    out.push_back({{"model", r.model},
                   {"h_size", r.h_size},
                   {"experts", r.experts},
                   {"sparsity", r.sparsity},
                   {"nonzero_params", r.nonzero},
                   {"seed", r.seed},
                   {"val_mse", r.val_mse},
                   {"skating_mean", r.skating_mean},
                   {"skating", gait_skating_to_json(r.skating)}});
  return out;
}

inline std::string comparison_csv(const std::vector<ComparisonRow>& rows) {
  std::string out = "model,h_size,experts,sparsity,nonzero_params,seed,val_mse,skating_mean\n";
  for (const auto& r : rows)
    out += r.model + "," + std::to_string(r.h_size) + "," + std::to_string(r.experts) + "," + format_number(r.sparsity) +
           "," + std::to_string(r.nonzero) + "," + std::to_string(r.seed) + "," + format_number(r.val_mse) + "," +
           format_number(r.skating_mean) + "\n";
  return out;
}

// ---- ablation and traces --------------------------------------------------

inline json gait_ablation_to_json(const GaitAblation& g) {
  return {{"gait", g.gait},
          {"diverged", g.diverged},
          {"frames_generated", g.frames_generated},
          {"skating", g.skating},
          {"skating_delta", g.skating_delta},
          {"pose_velocity", g.pose_velocity},
          {"pose_velocity_delta", g.pose_velocity_delta}};
}

inline json ablation_to_json(const AblationStudy& s) {
  json base = json::array();
  for (const auto& g : s.baseline) base.push_back(gait_ablation_to_json(g));
  json experts = json::array();
  for (const auto& e : s.experts) {
    json gaits = json::array();
    for (const auto& g : e.gaits) gaits.push_back(gait_ablation_to_json(g));
    experts.push_back({{"expert", e.expert}, {"renormalized", e.renormalized}, {"gaits", gaits}});
  }
  return {{"baseline", base}, {"experts", experts}};
}

inline std::string trace_csv(const std::vector<ActivationTrace>& traces) {
  std::string out;
  const std::size_t k = traces.empty() ? 0 : traces.front().omega.cols;
  out += "frame";
  for (std::size_t i = 0; i < k; ++i) out += ",w" + std::to_string(i);
  out += ",gait,model\n";
  for (const auto& tr : traces)
    for (std::size_t t = 0; t < tr.omega.rows; ++t) {
      out += std::to_string(t + 1);
      for (std::size_t i = 0; i < tr.omega.cols; ++i) out += "," + format_number(tr.omega(t, i));
      out += "," + tr.gait + "," + tr.model + "\n";
    }
  return out;
}

inline json trace_summary_to_json(const std::vector<ActivationTrace>& traces) {
  json out = json::array();
  for (const auto& tr : traces)
    out.push_back({{"gait", tr.gait}, {"model", tr.model}, {"frames", tr.omega.rows}, {"mean_omega", tr.mean_omega()},
                   {"entropy", tr.entropy()}});
  return out;
}

inline json trace_comparison_to_json(const TraceComparison& c) {
  return {{"gait", c.gait},           {"model_a", c.model_a},     {"model_b", c.model_b},
          {"correlation", c.correlation}, {"mean_l1", c.mean_l1}, {"entropy_a", c.entropy_a},
          {"entropy_b", c.entropy_b}, {"entropy_delta", c.entropy_delta}};
}

}  // namespace mannprune
