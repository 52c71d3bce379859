// Adam with decoupled weight decay and cosine warm restarts (AdamWR).
#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <vector>

#include "mannprune/network.hpp"

namespace mannprune {

struct TrainConfig {
  std::size_t epochs = 150;
  std::size_t batch_size = 32;
  double learning_rate = 1e-4;
  double weight_decay = 2.5e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double restart_period = 10.0;  // T0, in epochs
  double restart_mult = 2.0;     // Tmult
  std::uint64_t seed = 0;

  void validate() const {
    if (batch_size == 0) throw ConfigError("train.batch_size must be >= 1");
    if (!(learning_rate > 0)) throw ConfigError("train.learning_rate must be > 0");
    if (!(weight_decay >= 0)) throw ConfigError("train.weight_decay must be >= 0");
    if (!(beta1 >= 0 && beta1 < 1)) throw ConfigError("train.beta1 must be in [0, 1)");
    if (!(beta2 >= 0 && beta2 < 1)) throw ConfigError("train.beta2 must be in [0, 1)");
    if (!(epsilon > 0)) throw ConfigError("train.epsilon must be > 0");
    if (!(restart_period > 0)) throw ConfigError("train.restart_period must be > 0");
    if (!(restart_mult >= 1)) throw ConfigError("train.restart_mult must be >= 1");
  }
};

/// Gradients and optimizer moments are indexed by network tensor id.
template <typename T>
using Gradients = std::vector<Matrix<T>>;

template <typename T>
Gradients<T> zeros_like(const MoENetwork<T>& net) {
  Gradients<T> g;
  g.reserve(net.tensor_count());
  for (std::size_t id = 0; id < net.tensor_count(); ++id) g.emplace_back(net.tensor(id).rows, net.tensor(id).cols);
  return g;
}

/// 0.5 * (1 + cos(pi * t / period)); 1 at the start of a cycle, 0 at its end.
inline double cosine_factor(double t, double period) {
  const double x = std::clamp(t / period, 0.0, 1.0);
  return 0.5 * (1.0 + std::cos(std::numbers::pi * x));
}

struct CyclePosition {
  std::size_t cycle = 0;
  double t_cur = 0;   // epochs into the current cycle
  double period = 0;  // length of the current cycle, in epochs
};

/// Locates `epochs` (fractional) within cycles of length T0, T0*m, T0*m^2, ...
inline CyclePosition restart_position(double epochs, double t0, double mult) {
  CyclePosition pos{0, epochs, t0};
  while (pos.t_cur >= pos.period) {
    pos.t_cur -= pos.period;
    pos.period *= mult;
    ++pos.cycle;
  }
  return pos;
}

inline double annealing_factor(double epochs, const TrainConfig& cfg) {
  const auto pos = restart_position(epochs, cfg.restart_period, cfg.restart_mult);
  return cosine_factor(pos.t_cur, pos.period);
}

template <typename T>
struct OptimizerState {
  std::vector<Matrix<T>> m;
  std::vector<Matrix<T>> v;
  std::uint64_t step = 0;
  double annealing = 1.0;  // eta_t / eta for the next step

  static OptimizerState zeros(const MoENetwork<T>& net) {
    OptimizerState s;
    s.m = zeros_like(net);
    s.v = zeros_like(net);
    return s;
  }

  bool operator==(const OptimizerState&) const = default;
};

/// Per-tensor keep masks (1 = kept). An empty entry means the tensor is not prunable.
struct MaskSet {
  std::vector<std::vector<std::uint8_t>> keep;

  bool prunable(std::size_t id) const { return id < keep.size() && !keep[id].empty(); }
  bool operator==(const MaskSet&) const = default;
};

/// One AdamW step with bias correction. Learning rate and weight decay are
/// both scaled by state.annealing; masked entries never move.
template <typename T>
void adamwr_step(OptimizerState<T>& state, MoENetwork<T>& net, const Gradients<T>& grads, const TrainConfig& cfg,
                 const MaskSet* masks = nullptr) {
  if (grads.size() != net.tensor_count() || state.m.size() != net.tensor_count())
    throw ShapeError("adamwr_step: gradient/state tensor count does not match network");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  const double lr = cfg.learning_rate * state.annealing;
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  const T step_size = static_cast<T>(lr / bc1);
  const T inv_sqrt_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
  const T eps = static_cast<T>(cfg.epsilon);
  const T decay = static_cast<T>(lr * cfg.weight_decay);

  for (std::size_t id = 0; id < net.tensor_count(); ++id) {
    auto& p = net.tensor(id).data;
    const auto& g = grads[id].data;
    auto& m = state.m[id].data;
    auto& v = state.v[id].data;
    if (g.size() != p.size()) throw ShapeError("adamwr_step: gradient shape mismatch for " + net.info(id).name);
    const std::uint8_t* keep = masks && masks->prunable(id) ? masks->keep[id].data() : nullptr;
    for (std::size_t k = 0; k < p.size(); ++k) {
      if (keep && !keep[k]) {
        m[k] = v[k] = p[k] = T(0);
        continue;
      }
      m[k] = b1 * m[k] + (T(1) - b1) * g[k];
      v[k] = b2 * v[k] + (T(1) - b2) * g[k] * g[k];
      const T update = step_size * m[k] / (std::sqrt(v[k]) * inv_sqrt_bc2 + eps);
      p[k] = p[k] - update - decay * p[k];
    }
  }
}

}  // namespace mannprune
