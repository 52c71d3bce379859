// Train-prune-evaluate harness shared by the sparsity sweep and the
// equal-parameter dense/sparse comparison.
#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "mannprune/evaluation.hpp"
#include "mannprune/motion.hpp"
#include "mannprune/training.hpp"

namespace mannprune {

struct EvalConfig {
  double threshold_cm = kDefaultSkatingThresholdCm;
  std::size_t rollout_frames = 240;
  std::vector<GaitType> gaits{GaitType::walk, GaitType::turn};
  std::uint64_t seed = 1000;
};

struct GaitSkating {
  std::string gait;
  SkatingReport report;
  bool diverged = false;
  std::string error;
};

/// Ground-truth clip whose first frame seeds a rollout and whose control columns drive it.
inline MotionClip evaluation_clip(GaitType gait, const EvalConfig& eval, std::shared_ptr<const SkeletonSchema> schema) {
  const double seconds = static_cast<double>(eval.rollout_frames + 1) / schema->frame_rate;
  GaitSpec spec = GaitSpec::preset(gait, Rng::mix(eval.seed + static_cast<std::uint64_t>(gait)), seconds);
  return generate_gait(spec, std::move(schema));
}

template <typename Model>
GaitSkating skating_for_gait(const Model& model, GaitType gait, const EvalConfig& eval,
                             const std::shared_ptr<const SkeletonSchema>& schema) {
  GaitSkating out{to_string(gait), {}, false, {}};
  const MotionClip gt = evaluation_clip(gait, eval, schema);
  try {
    const Rollout r = rollout(model, gt.frames.row(0), control_series(gt, eval.rollout_frames), eval.rollout_frames,
                              schema, to_string(gait));
    out.report = foot_skate(r.clip, eval.threshold_cm);
  } catch (const NumericError& e) {
    out.diverged = true;
    out.error = e.what();
    out.report.aggregate = std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

template <typename Model>
std::vector<GaitSkating> evaluate_skating(const Model& model, const EvalConfig& eval,
                                          const std::shared_ptr<const SkeletonSchema>& schema) {
  std::vector<GaitSkating> out;
  for (GaitType g : eval.gaits) out.push_back(skating_for_gait(model, g, eval, schema));
  return out;
}

/// Mean aggregate skating over gaits; NaN when any rollout diverged.
inline double mean_skating(const std::vector<GaitSkating>& s) {
  if (s.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& g : s) sum += g.report.aggregate;
  return sum / static_cast<double>(s.size());
}

struct ExperimentResult {
  MoENetwork<float> net;
  std::optional<PruneState> prune;
  TrainReport report;
  double val_mse = 0;
  std::vector<GaitSkating> skating;
  double skating_mean = 0;
  CostReport cost;
};

/// Initializes from cfg.seed, trains (pruning when `prune` is set), and evaluates.
inline ExperimentResult run_experiment(const NetworkConfig& net_cfg, const TrainConfig& train_cfg,
                                       const std::optional<PruneConfig>& prune_cfg, const MotionDataset& data,
                                       const EvalConfig& eval) {
  ExperimentResult r;
  Rng init_rng = Rng::derive(train_cfg.seed, 0x494e4954ULL);
  r.net = init_network<float>(net_cfg, init_rng);
  attach_normalization(r.net, data);
  if (prune_cfg) r.prune = PruneState::create(r.net, *prune_cfg);
  r.report = train(r.net, data, train_cfg, r.prune ? &*r.prune : nullptr);
  r.val_mse = data.x_val.rows ? static_cast<double>(mse(predict_batch(r.net, data.x_val), data.y_val)) : 0.0;
  r.skating = evaluate_skating(r.net, eval, data.schema);
  r.skating_mean = mean_skating(r.skating);
  r.cost = cost_report(r.net, r.prune ? &*r.prune : nullptr);
  return r;
}

/// Default gating input: the 3-D velocity columns of the foot joints.
inline NetworkConfig network_for_schema(const SkeletonSchema& schema, std::size_t h_size = 512,
                                        std::size_t n_experts = 8) {
  NetworkConfig c;
  c.d_in = schema.dim();
  c.d_out = schema.dim();
  c.h_size = h_size;
  c.n_experts = n_experts;
  c.gating_indices = schema.gating_columns;
  return c;
}

struct EqualParamPair {
  std::size_t dense_h = 0;
  double sparse_sparsity = 0;
};

struct ComparisonProtocol {
  NetworkConfig large;  // the network that gets pruned
  std::vector<EqualParamPair> pairs;
  std::vector<std::uint64_t> seeds{1};
  TrainConfig train;
  PruneConfig prune;
  EvalConfig eval;
  double tolerance = 0.02;
};

/// Sparsity that leaves `large` with as many nonzero parameters as a dense copy
/// of it with hidden width `dense_h`.
inline double matched_sparsity(const NetworkConfig& large, std::size_t dense_h, const PruneConfig& prune = {}) {
  NetworkConfig dense = large;
  dense.h_size = dense_h;
  const CostReport full = cost_at_sparsity(large, 0.0, prune);
  const double removed = static_cast<double>(full.total_params) - static_cast<double>(parameter_count(dense));
  return removed / static_cast<double>(full.prunable_params);
}

struct PairCheck {
  std::size_t dense_nonzero = 0;
  std::size_t sparse_nonzero = 0;
  double relative_gap = 0;
};

inline PairCheck check_pair(const NetworkConfig& large, const EqualParamPair& pair, const PruneConfig& prune,
                            double tolerance) {
  NetworkConfig dense = large;
  dense.h_size = pair.dense_h;
  if (!(pair.sparse_sparsity >= 0.0 && pair.sparse_sparsity < 1.0))
    throw ConfigError("comparison pair h=" + std::to_string(pair.dense_h) + ": sparsity outside [0, 1)");
  PairCheck c;
  c.dense_nonzero = parameter_count(dense);
  c.sparse_nonzero = cost_at_sparsity(large, pair.sparse_sparsity, prune).nonzero_params;
  c.relative_gap = std::abs(static_cast<double>(c.sparse_nonzero) - static_cast<double>(c.dense_nonzero)) /
                   static_cast<double>(c.dense_nonzero);
  if (c.relative_gap > tolerance)
    throw ConfigError("comparison pair h=" + std::to_string(pair.dense_h) + ", s=" + std::to_string(pair.sparse_sparsity) +
                      ": nonzero counts " + std::to_string(c.sparse_nonzero) + " vs " + std::to_string(c.dense_nonzero) +
                      " differ by more than " + std::to_string(tolerance * 100) + "%");
  return c;
}

struct ComparisonRow {
  std::string model;  // dense | sparse
  std::size_t h_size = 0;
  std::size_t experts = 0;
  double sparsity = 0;
  std::size_t nonzero = 0;
  std::uint64_t seed = 0;
  double val_mse = 0;
  std::vector<GaitSkating> skating;
  double skating_mean = 0;
};

/// Trains each dense baseline and the matching pruned large model under the
/// same epoch budget and seed; every pair is validated before any training.
inline std::vector<ComparisonRow> compare_equal_params(const ComparisonProtocol& protocol, const MotionDataset& data) {
  for (const auto& p : protocol.pairs) check_pair(protocol.large, p, protocol.prune, protocol.tolerance);
  std::vector<ComparisonRow> rows;
  for (const auto& p : protocol.pairs) {
    for (std::uint64_t seed : protocol.seeds) {
      TrainConfig tc = protocol.train;
      tc.seed = seed;
      NetworkConfig dense_cfg = protocol.large;
      dense_cfg.h_size = p.dense_h;
      const auto dense = run_experiment(dense_cfg, tc, std::nullopt, data, protocol.eval);
      rows.push_back({"dense", p.dense_h, dense_cfg.n_experts, 0.0, dense.cost.nonzero_params, seed, dense.val_mse,
                      dense.skating, dense.skating_mean});
      PruneConfig pc = protocol.prune;
      pc.target_sparsity = p.sparse_sparsity;
      const auto sparse = run_experiment(protocol.large, tc, pc, data, protocol.eval);
      rows.push_back({"sparse", protocol.large.h_size, protocol.large.n_experts, sparse.cost.sparsity,
                      sparse.cost.nonzero_params, seed, sparse.val_mse, sparse.skating, sparse.skating_mean});
    }
  }
  return rows;
}

}  // namespace mannprune
