// Unstructured magnitude pruning.
//
// Importance is |w|. Masks are chosen either globally (one ranking over every
// prunable weight in the model) or locally (one ranking per tensor). Pruned
// weights stay in place as zeros; a weight masked once stays masked.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "mannprune/network.hpp"
#include "mannprune/optimizer.hpp"

namespace mannprune {

enum class PruneScope { global, local };
enum class PruneSchedule { one_shot, one_cycle };

inline const char* to_string(PruneScope s) { return s == PruneScope::global ? "global" : "local"; }
inline const char* to_string(PruneSchedule s) { return s == PruneSchedule::one_shot ? "one_shot" : "one_cycle"; }

struct PruneConfig {
  double target_sparsity = 0.0;
  PruneScope scope = PruneScope::global;
  PruneSchedule schedule = PruneSchedule::one_cycle;
  double ramp_end = 0.8;
  std::size_t mask_update_interval = 100;
  bool include_biases = false;
  bool include_gating = true;

  void validate() const {
    if (!(target_sparsity >= 0.0 && target_sparsity < 1.0)) throw ConfigError("prune.target_sparsity must be in [0, 1)");
    if (!(ramp_end > 0.0 && ramp_end <= 1.0)) throw ConfigError("prune.ramp_end must be in (0, 1]");
    if (mask_update_interval == 0) throw ConfigError("prune.mask_update_interval must be >= 1");
  }

  bool operator==(const PruneConfig&) const = default;
};

/// Target sparsity at training progress tau in [0, 1].
inline double sparsity_at(double tau, const PruneConfig& cfg) {
  tau = std::clamp(tau, 0.0, 1.0);
  if (cfg.schedule == PruneSchedule::one_shot) return tau >= 1.0 ? cfg.target_sparsity : 0.0;
  const double x = std::min(tau / cfg.ramp_end, 1.0);
  return cfg.target_sparsity * (1.0 - std::cos(std::numbers::pi * x)) / 2.0;
}

/// Number of weights removed from a population of n at sparsity s: floor(s * n).
/// The tiny offset keeps products such as 0.3 * 10 from rounding down to 2.
inline std::size_t prune_count(double s, std::size_t n) {
  const double exact = s * static_cast<double>(n);
  return std::min(n, static_cast<std::size_t>(std::floor(exact + 1e-9 * std::max(1.0, exact))));
}

template <typename T>
bool is_prunable(const MoENetwork<T>& net, std::size_t id, const PruneConfig& cfg) {
  const auto info = net.info(id);
  if (!info.weight && !cfg.include_biases) return false;
  if (info.gating && !cfg.include_gating) return false;
  return true;
}

template <typename T>
MaskSet full_masks(const MoENetwork<T>& net, const PruneConfig& cfg) {
  MaskSet m;
  m.keep.resize(net.tensor_count());
  for (std::size_t id = 0; id < net.tensor_count(); ++id)
    if (is_prunable(net, id, cfg)) m.keep[id].assign(net.tensor(id).size(), 1);
  return m;
}

inline std::size_t mask_total(const MaskSet& m) {
  std::size_t n = 0;
  for (const auto& k : m.keep) n += k.size();
  return n;
}

inline std::size_t mask_zeros(const MaskSet& m) {
  std::size_t n = 0;
  for (const auto& k : m.keep) n += static_cast<std::size_t>(std::count(k.begin(), k.end(), std::uint8_t{0}));
  return n;
}

namespace detail {

template <typename T>
struct RankedWeight {
  T magnitude;
  std::uint32_t tensor;
  std::uint32_t index;
  bool already_masked;
};

/// Ranking order: previously masked entries first, then |w| ascending, then
/// (tensor id, flat index) ascending. A strict total order, so selection is deterministic.
template <typename T>
bool ranks_before(const RankedWeight<T>& a, const RankedWeight<T>& b) {
  if (a.already_masked != b.already_masked) return a.already_masked;
  if (a.magnitude != b.magnitude) return a.magnitude < b.magnitude;
  if (a.tensor != b.tensor) return a.tensor < b.tensor;
  return a.index < b.index;
}

template <typename T>
void mask_lowest(std::vector<RankedWeight<T>>& pool, std::size_t k, MaskSet& out) {
  if (k == 0) return;
  k = std::min(k, pool.size());
  std::nth_element(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k - 1), pool.end(), ranks_before<T>);
  for (std::size_t i = 0; i < k; ++i) out.keep[pool[i].tensor][pool[i].index] = 0;
}

}  // namespace detail

/// Masks for sparsity s over the prunable set. When `prior` is given, every
/// entry it masks ranks ahead of all others, so the result is a superset of it
/// whenever s does not decrease.
template <typename T>
MaskSet compute_masks(const MoENetwork<T>& net, double s, const PruneConfig& cfg, const MaskSet* prior = nullptr) {
  if (!(s >= 0.0 && s < 1.0)) throw ConfigError("compute_masks: sparsity must be in [0, 1)");
  MaskSet out = full_masks(net, cfg);
  const auto was_masked = [&](std::size_t id, std::size_t k) {
    return prior && prior->prunable(id) && prior->keep[id].size() > k && prior->keep[id][k] == 0;
  };
  const auto collect = [&](std::size_t id, std::vector<detail::RankedWeight<T>>& pool) {
    const auto& w = net.tensor(id).data;
    for (std::size_t k = 0; k < w.size(); ++k)
      pool.push_back({std::abs(w[k]), static_cast<std::uint32_t>(id), static_cast<std::uint32_t>(k), was_masked(id, k)});
  };

  if (cfg.scope == PruneScope::global) {
    const std::size_t n = mask_total(out);
    const std::size_t k = prune_count(s, n);
    if (k == 0) return out;
    std::vector<detail::RankedWeight<T>> pool;
    pool.reserve(n);
    for (std::size_t id = 0; id < net.tensor_count(); ++id)
      if (out.prunable(id)) collect(id, pool);
    detail::mask_lowest(pool, k, out);
  } else {
    std::vector<detail::RankedWeight<T>> pool;
    for (std::size_t id = 0; id < net.tensor_count(); ++id) {
      if (!out.prunable(id)) continue;
      const std::size_t k = prune_count(s, net.tensor(id).size());
      if (k == 0) continue;
      pool.clear();
      collect(id, pool);
      detail::mask_lowest(pool, k, out);
    }
  }
  return out;
}

struct MaskEvent {
  std::uint64_t step;
  double tau;
  double target;
  double achieved;
};

struct PruneState {
  PruneConfig config;
  MaskSet masks;
  double sparsity = 0.0;
  std::size_t total_prunable = 0;
  std::uint64_t step = 0;
  std::vector<MaskEvent> history;

  template <typename T>
  static PruneState create(const MoENetwork<T>& net, const PruneConfig& cfg) {
    cfg.validate();
    PruneState st;
    st.config = cfg;
    st.masks = full_masks(net, cfg);
    st.total_prunable = mask_total(st.masks);
    return st;
  }

  void refresh_sparsity() {
    sparsity = total_prunable == 0 ? 0.0
                                   : static_cast<double>(mask_zeros(masks)) / static_cast<double>(total_prunable);
  }
};

/// Zeroes masked weights (and their optimizer moments, when given).
template <typename T>
void apply_masks(MoENetwork<T>& net, const MaskSet& masks, OptimizerState<T>* opt = nullptr) {
  if (masks.keep.size() != net.tensor_count())
    throw ShapeError("apply_masks: mask set covers " + std::to_string(masks.keep.size()) + " tensors, network has " +
                     std::to_string(net.tensor_count()));
  for (std::size_t id = 0; id < net.tensor_count(); ++id) {
    if (!masks.prunable(id)) continue;
    auto& w = net.tensor(id).data;
    const auto& keep = masks.keep[id];
    if (keep.size() != w.size())
      throw ShapeError("apply_masks: mask for " + net.info(id).name + " has " + std::to_string(keep.size()) +
                       " entries, tensor has " + std::to_string(w.size()));
    for (std::size_t k = 0; k < w.size(); ++k) {
      if (keep[k]) continue;
      w[k] = T(0);
      if (opt) {
        opt->m[id].data[k] = T(0);
        opt->v[id].data[k] = T(0);
      }
    }
  }
}

template <typename T>
void apply_masks(MoENetwork<T>& net, PruneState& state, OptimizerState<T>* opt = nullptr) {
  apply_masks(net, state.masks, opt);
  state.refresh_sparsity();
}

inline bool is_mask_step(std::uint64_t step, std::uint64_t total_steps, std::size_t interval) {
  return step == total_steps || (step > 0 && step % interval == 0);
}

/// Called after every optimizer step (1-based). Returns true when masks were recomputed.
template <typename T>
bool on_step(PruneState& state, MoENetwork<T>& net, std::uint64_t step, std::uint64_t total_steps,
             OptimizerState<T>* opt = nullptr) {
  state.step = step;
  if (!is_mask_step(step, total_steps, state.config.mask_update_interval)) return false;
  const double tau = total_steps == 0 ? 1.0 : static_cast<double>(step) / static_cast<double>(total_steps);
  const double target = sparsity_at(tau, state.config);
  state.masks = compute_masks(net, target, state.config, &state.masks);
  apply_masks(net, state, opt);
  state.history.push_back({step, tau, target, state.sparsity});
  return true;
}

/// Fraction of zero-mask entries within one tensor.
inline double tensor_sparsity(const MaskSet& m, std::size_t id) {
  if (!m.prunable(id)) return 0.0;
  const auto& k = m.keep[id];
  return static_cast<double>(std::count(k.begin(), k.end(), std::uint8_t{0})) / static_cast<double>(k.size());
}

}  // namespace mannprune
