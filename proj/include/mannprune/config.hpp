// Run configuration: one JSON document with data, network, train, prune, eval,
// and compare sections. Unknown keys are errors. Field list: docs/config.md.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mannprune/experiment.hpp"
#include "mannprune/io.hpp"

namespace mannprune {

struct DataConfig {
  std::string skeleton = "compact";  // compact | dog
  double frame_rate = 60.0;
  double seconds_per_clip = 56.0;
  std::vector<GaitType> gaits;  // empty: the full suite
  double train_fraction = 0.9;

  SkeletonLayout layout() const { return skeleton == "dog" ? SkeletonLayout{} : SkeletonLayout::compact(); }
  bool operator==(const DataConfig&) const = default;
};

struct CompareConfig {
  std::vector<EqualParamPair> pairs{{64, -1.0}};  // negative sparsity: matched automatically
  std::vector<std::uint64_t> seeds{1, 2, 3};
  double tolerance = 0.02;
};

struct NetworkShape {
  std::size_t h_size = 128;
  std::size_t n_experts = 4;
  std::size_t g_hidden = 32;
  double dropout_retention = 0.7;
  bool operator==(const NetworkShape&) const = default;
};

/// Defaults are the desk-scale setup; configs/full.json carries the full-size values.
struct RunConfig {
  std::uint64_t seed = 1;
  DataConfig data;
  NetworkShape network;
  TrainConfig train = desk_train_defaults();
  std::optional<PruneConfig> prune;
  EvalConfig eval;
  CompareConfig compare;

  static TrainConfig desk_train_defaults() {
    TrainConfig t;
    t.epochs = 12;
    t.learning_rate = 1e-3;
    t.restart_period = 12;
    return t;
  }

  NetworkConfig network_config(const SkeletonSchema& schema) const {
    NetworkConfig c = network_for_schema(schema, network.h_size, network.n_experts);
    c.g_hidden = network.g_hidden;
    c.dropout_retention = network.dropout_retention;
    return c;
  }

  TrainConfig train_config() const {
    TrainConfig t = train;
    t.seed = seed;
    return t;
  }

  void validate() const {
    if (data.skeleton != "compact" && data.skeleton != "dog")
      throw ConfigError("data.skeleton must be 'compact' or 'dog'");
    if (!(data.frame_rate > 0)) throw ConfigError("data.frame_rate must be > 0");
    if (!(data.seconds_per_clip > 0)) throw ConfigError("data.seconds_per_clip must be > 0");
    if (!(data.train_fraction > 0 && data.train_fraction < 1)) throw ConfigError("data.train_fraction must be in (0, 1)");
    const SkeletonSchema schema = build_schema(data.layout(), data.frame_rate);
    network_config(schema).validate();
    train.validate();
    if (prune) prune->validate();
    if (!(eval.threshold_cm > 0)) throw ConfigError("eval.threshold_cm must be > 0");
    if (eval.rollout_frames == 0) throw ConfigError("eval.rollout_frames must be >= 1");
    if (eval.gaits.empty()) throw ConfigError("eval.gaits must not be empty");
    if (compare.seeds.empty()) throw ConfigError("compare.seeds must not be empty");
    if (!(compare.tolerance > 0)) throw ConfigError("compare.tolerance must be > 0");
    for (const auto& p : compare.pairs)
      if (p.dense_h == 0) throw ConfigError("compare.pairs[].dense_h must be >= 1");
  }
};

namespace detail {

inline void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError("unknown key '" + (where.empty() ? key : where + "." + key) + "'");
  }
}

template <typename V>
void read_field(const json& j, const char* key, V& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<V>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + " has the wrong type");
  }
}

inline std::vector<GaitType> read_gaits(const json& j, const std::string& where) {
  if (!j.is_array()) throw ConfigError(where + " must be an array of gait names");
  std::vector<GaitType> out;
  for (const auto& g : j) {
    if (!g.is_string()) throw ConfigError(where + " must be an array of gait names");
    out.push_back(gait_from_string(g.get<std::string>()));
  }
  return out;
}

inline json gait_names(const std::vector<GaitType>& gs) {
  json out = json::array();
  for (auto g : gs) out.push_back(to_string(g));
  return out;
}

inline PruneScope scope_from_string(const std::string& s) {
  if (s == "global") return PruneScope::global;
  if (s == "local") return PruneScope::local;
  throw ConfigError("prune.scope must be 'global' or 'local', got '" + s + "'");
}

inline PruneSchedule schedule_from_string(const std::string& s) {
  if (s == "one_cycle") return PruneSchedule::one_cycle;
  if (s == "one_shot") return PruneSchedule::one_shot;
  throw ConfigError("prune.schedule must be 'one_cycle' or 'one_shot', got '" + s + "'");
}

}  // namespace detail

inline RunConfig run_config_from_json(const json& j) {
  using detail::check_keys;
  using detail::read_field;
  RunConfig rc;
  check_keys(j, "", {"seed", "data", "network", "train", "prune", "eval", "compare"});
  read_field(j, "seed", rc.seed, "config");

  if (j.contains("data")) {
    const auto& d = j.at("data");
    check_keys(d, "data", {"skeleton", "frame_rate", "seconds_per_clip", "gaits", "train_fraction"});
    read_field(d, "skeleton", rc.data.skeleton, "data");
    read_field(d, "frame_rate", rc.data.frame_rate, "data");
    read_field(d, "seconds_per_clip", rc.data.seconds_per_clip, "data");
    read_field(d, "train_fraction", rc.data.train_fraction, "data");
    if (d.contains("gaits")) rc.data.gaits = detail::read_gaits(d.at("gaits"), "data.gaits");
  }
  if (j.contains("network")) {
    const auto& n = j.at("network");
    check_keys(n, "network", {"h_size", "n_experts", "g_hidden", "dropout_retention"});
    read_field(n, "h_size", rc.network.h_size, "network");
    read_field(n, "n_experts", rc.network.n_experts, "network");
    read_field(n, "g_hidden", rc.network.g_hidden, "network");
    read_field(n, "dropout_retention", rc.network.dropout_retention, "network");
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    check_keys(t, "train", {"epochs", "batch_size", "learning_rate", "weight_decay", "beta1", "beta2", "epsilon",
                            "restart_period", "restart_mult"});
    read_field(t, "epochs", rc.train.epochs, "train");
    read_field(t, "batch_size", rc.train.batch_size, "train");
    read_field(t, "learning_rate", rc.train.learning_rate, "train");
    read_field(t, "weight_decay", rc.train.weight_decay, "train");
    read_field(t, "beta1", rc.train.beta1, "train");
    read_field(t, "beta2", rc.train.beta2, "train");
    read_field(t, "epsilon", rc.train.epsilon, "train");
    read_field(t, "restart_period", rc.train.restart_period, "train");
    read_field(t, "restart_mult", rc.train.restart_mult, "train");
  }
  if (j.contains("prune") && !j.at("prune").is_null()) {
    const auto& p = j.at("prune");
    check_keys(p, "prune", {"target_sparsity", "scope", "schedule", "ramp_end", "mask_update_interval",
                            "include_biases", "include_gating"});
    PruneConfig pc;
    read_field(p, "target_sparsity", pc.target_sparsity, "prune");
    if (p.contains("scope")) pc.scope = detail::scope_from_string(p.at("scope").get<std::string>());
    if (p.contains("schedule")) pc.schedule = detail::schedule_from_string(p.at("schedule").get<std::string>());
    read_field(p, "ramp_end", pc.ramp_end, "prune");
    read_field(p, "mask_update_interval", pc.mask_update_interval, "prune");
    read_field(p, "include_biases", pc.include_biases, "prune");
    read_field(p, "include_gating", pc.include_gating, "prune");
    rc.prune = pc;
  }
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    check_keys(e, "eval", {"threshold_cm", "rollout_frames", "gaits", "seed"});
    read_field(e, "threshold_cm", rc.eval.threshold_cm, "eval");
    read_field(e, "rollout_frames", rc.eval.rollout_frames, "eval");
    read_field(e, "seed", rc.eval.seed, "eval");
    if (e.contains("gaits")) rc.eval.gaits = detail::read_gaits(e.at("gaits"), "eval.gaits");
  }
  if (j.contains("compare")) {
    const auto& c = j.at("compare");
    check_keys(c, "compare", {"pairs", "seeds", "tolerance"});
    read_field(c, "seeds", rc.compare.seeds, "compare");
    read_field(c, "tolerance", rc.compare.tolerance, "compare");
    if (c.contains("pairs")) {
      if (!c.at("pairs").is_array()) throw ConfigError("compare.pairs must be an array");
      rc.compare.pairs.clear();
      for (const auto& p : c.at("pairs")) {
        check_keys(p, "compare.pairs[]", {"dense_h", "sparsity"});
        EqualParamPair pair{0, -1.0};
        read_field(p, "dense_h", pair.dense_h, "compare.pairs[]");
        read_field(p, "sparsity", pair.sparse_sparsity, "compare.pairs[]");
        rc.compare.pairs.push_back(pair);
      }
    }
  }
  rc.validate();
  return rc;
}

inline json run_config_to_json(const RunConfig& rc) {
  json j;
  j["seed"] = rc.seed;
  j["data"] = {{"skeleton", rc.data.skeleton},
               {"frame_rate", rc.data.frame_rate},
               {"seconds_per_clip", rc.data.seconds_per_clip},
               {"gaits", detail::gait_names(rc.data.gaits)},
               {"train_fraction", rc.data.train_fraction}};
  j["network"] = {{"h_size", rc.network.h_size},
                  {"n_experts", rc.network.n_experts},
                  {"g_hidden", rc.network.g_hidden},
                  {"dropout_retention", rc.network.dropout_retention}};
  j["train"] = {{"epochs", rc.train.epochs},
                {"batch_size", rc.train.batch_size},
                {"learning_rate", rc.train.learning_rate},
                {"weight_decay", rc.train.weight_decay},
                {"beta1", rc.train.beta1},
                {"beta2", rc.train.beta2},
                {"epsilon", rc.train.epsilon},
                {"restart_period", rc.train.restart_period},
                {"restart_mult", rc.train.restart_mult}};
  if (rc.prune)
    j["prune"] = {{"target_sparsity", rc.prune->target_sparsity},
                  {"scope", to_string(rc.prune->scope)},
                  {"schedule", to_string(rc.prune->schedule)},
                  {"ramp_end", rc.prune->ramp_end},
                  {"mask_update_interval", rc.prune->mask_update_interval},
                  {"include_biases", rc.prune->include_biases},
                  {"include_gating", rc.prune->include_gating}};
  else
    j["prune"] = nullptr;
  j["eval"] = {{"threshold_cm", rc.eval.threshold_cm},
               {"rollout_frames", rc.eval.rollout_frames},
               {"gaits", detail::gait_names(rc.eval.gaits)},
               {"seed", rc.eval.seed}};
  json pairs = json::array();
  for (const auto& p : rc.compare.pairs) pairs.push_back({{"dense_h", p.dense_h}, {"sparsity", p.sparse_sparsity}});
  j["compare"] = {{"pairs", pairs}, {"seeds", rc.compare.seeds}, {"tolerance", rc.compare.tolerance}};
  return j;
}

inline RunConfig load_run_config(const std::string& path) { return run_config_from_json(read_json(path)); }

}  // namespace mannprune
