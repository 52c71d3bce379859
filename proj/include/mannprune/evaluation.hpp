// Motion quality, model cost accounting, and the dense/CSR inference benchmark.
#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mannprune/inference.hpp"
#include "mannprune/motion.hpp"
#include "mannprune/network.hpp"
#include "mannprune/pruning.hpp"

namespace mannprune {

inline constexpr double kDefaultSkatingThresholdCm = 2.5;

struct LegSkating {
  std::string joint;
  double mean = 0;  // cm/frame over contact frames
  std::size_t contact_frames = 0;
};

struct SkatingReport {
  std::vector<LegSkating> legs;
  double aggregate = 0;  // mean of the per-leg means
  std::size_t frames = 0;
  double threshold_cm = kDefaultSkatingThresholdCm;
};

/// Per-frame skating weight v * (2 - 2^(h/H)).
inline double skating_term(double speed, double height, double threshold) {
  return speed * (2.0 - std::exp2(height / threshold));
}

/// A foot is in contact while its height is strictly below H.
inline SkatingReport foot_skate(const MotionClip& clip, double threshold_cm = kDefaultSkatingThresholdCm) {
  if (!(threshold_cm > 0)) throw ConfigError("foot_skate: threshold must be > 0");
  if (!clip.schema || clip.schema->feet.empty()) throw ConfigError("foot_skate: schema has no foot columns");
  SkatingReport r;
  r.frames = clip.frames.rows;
  r.threshold_cm = threshold_cm;
  for (const auto& foot : clip.schema->feet) {
    if (foot.height >= clip.frames.cols || foot.speed >= clip.frames.cols)
      throw ConfigError("foot_skate: foot '" + foot.joint + "' columns outside the frame");
    LegSkating leg{foot.joint, 0.0, 0};
    double sum = 0.0;
    for (std::size_t t = 0; t < clip.frames.rows; ++t) {
      const double h = clip.frames(t, foot.height);
      if (!(h < threshold_cm)) continue;
      sum += skating_term(std::abs(static_cast<double>(clip.frames(t, foot.speed))), h, threshold_cm);
      ++leg.contact_frames;
    }
    leg.mean = leg.contact_frames ? sum / static_cast<double>(leg.contact_frames) : 0.0;
    r.legs.push_back(leg);
  }
  double total = 0.0;
  for (const auto& l : r.legs) total += l.mean;
  r.aggregate = total / static_cast<double>(r.legs.size());
  return r;
}

struct CostReport {
  std::size_t total_params = 0;
  std::size_t prunable_params = 0;
  std::size_t masked_params = 0;
  std::size_t nonzero_params = 0;
  double sparsity = 0;  // masked / prunable
  double size_megabits = 0;
  double size_megabytes = 0;
  double mflops_prunable = 0;
  double mflops_fixed = 0;
  double mflops_total = 0;
};

/// Exact parameter, size, and FLOP accounting for one inference.
///
/// FLOP model (one multiply-accumulate = 2 FLOPs, other ops 1 each), with the
/// prediction network evaluated as sum_i omega_i (W_i x + b_i):
///   prunable: 2 per unmasked entry of every prunable weight tensor
///   fixed:    2 per entry of non-prunable weight tensors, 1 per bias add,
///             2 per expert output mixed by omega, ELUs, and a 4K softmax.
/// Biases, when prunable, move their single add into the prunable bucket.
template <typename T>
CostReport cost_report(const MoENetwork<T>& net, const PruneState* state = nullptr) {
  CostReport c;
  const PruneConfig pcfg = state ? state->config : PruneConfig{};
  double prunable_flops = 0.0, fixed_flops = 0.0;
  for (std::size_t id = 0; id < net.tensor_count(); ++id) {
    const auto info = net.info(id);
    const std::size_t n = net.tensor(id).size();
    c.total_params += n;
    const bool prunable = state ? state->masks.prunable(id) : is_prunable(net, id, pcfg);
    std::size_t masked = 0;
    if (state && prunable) masked = static_cast<std::size_t>(std::count(state->masks.keep[id].begin(), state->masks.keep[id].end(), std::uint8_t{0}));
    if (prunable) c.prunable_params += n;
    c.masked_params += masked;
    const double kept = static_cast<double>(n - masked);
    const double per_entry = info.weight ? 2.0 : 1.0;
    (prunable ? prunable_flops : fixed_flops) += per_entry * kept;
  }
  const double k = static_cast<double>(net.config.n_experts);
  const double h = static_cast<double>(net.config.h_size);
  const double g = static_cast<double>(net.config.g_hidden);
  const double outputs = 2.0 * h + static_cast<double>(net.config.d_out);
  fixed_flops += 2.0 * k * outputs;  // omega mixing of expert layer outputs
  fixed_flops += 2.0 * h + 2.0 * g;  // ELU
  fixed_flops += 4.0 * k;            // softmax: max, exp, sum, divide

  c.nonzero_params = c.total_params - c.masked_params;
  c.sparsity = c.prunable_params ? static_cast<double>(c.masked_params) / static_cast<double>(c.prunable_params) : 0.0;
  c.size_megabits = 32.0 * static_cast<double>(c.nonzero_params) / 1e6;
  c.size_megabytes = 4.0 * static_cast<double>(c.nonzero_params) / 1e6;
  c.mflops_prunable = prunable_flops / 1e6;
  c.mflops_fixed = fixed_flops / 1e6;
  c.mflops_total = c.mflops_prunable + c.mflops_fixed;
  return c;
}

/// Cost of the architecture with a fraction s of its prunable set removed, without building masks.
inline CostReport cost_at_sparsity(const NetworkConfig& cfg, double s, const PruneConfig& pcfg = {}) {
  const NetworkConfig& c = cfg;
  // Shapes only; weights are irrelevant to the counts.
  MoENetwork<float> shapes;
  shapes.config = c;
  shapes.gating = make_param_set<float>(c.gating_indices.size(), c.g_hidden, c.g_hidden, c.n_experts);
  shapes.experts.assign(c.n_experts, make_param_set<float>(c.d_in, c.h_size, c.h_size, c.d_out));
  PruneState st = PruneState::create(shapes, pcfg);
  std::size_t remaining = prune_count(s, st.total_prunable);
  for (auto& keep : st.masks.keep) {
    const std::size_t take =
        pcfg.scope == PruneScope::local ? prune_count(s, keep.size()) : std::min(remaining, keep.size());
    std::fill(keep.begin(), keep.begin() + static_cast<std::ptrdiff_t>(take), std::uint8_t{0});
    remaining -= std::min(remaining, take);
  }
  st.refresh_sparsity();
  return cost_report(shapes, &st);
}

struct LayerBench {
  std::string layer;
  std::size_t rows = 0, cols = 0, nnz = 0;
  double dense_ns = 0;
  double csr_ns = 0;
  double speedup = 0;  // dense / csr
};

struct BenchRow {
  double sparsity = 0;
  std::size_t nnz = 0;
  double max_abs_diff = 0;  // dense vs CSR predictions, checked before timing
  std::vector<LayerBench> layers;
  double dense_ns = 0;  // whole prediction network
  double csr_ns = 0;
  double speedup = 0;
};

struct BenchReport {
  std::vector<BenchRow> rows;
  std::size_t reps = 0;
  double timer_resolution_ns = 0;
};

namespace detail {

inline double timer_resolution_ns() {
  using clock = std::chrono::steady_clock;
  return 1e9 * static_cast<double>(clock::period::num) / static_cast<double>(clock::period::den);
}

/// Median over `reps` of the per-call time of `fn`, with each sample timing a
/// block of calls long enough to sit well above the clock resolution.
template <typename Fn>
double median_ns(Fn&& fn, std::size_t reps) {
  using clock = std::chrono::steady_clock;
  for (int i = 0; i < 3; ++i) fn();
  std::size_t inner = 1;
  for (;;) {
    const auto t0 = clock::now();
    for (std::size_t i = 0; i < inner; ++i) fn();
    const double ns = std::chrono::duration<double, std::nano>(clock::now() - t0).count();
    if (ns > 20000.0 || inner >= (1u << 20)) break;
    inner *= 2;
  }
  std::vector<double> samples(reps);
  for (auto& s : samples) {
    const auto t0 = clock::now();
    for (std::size_t i = 0; i < inner; ++i) fn();
    s = std::chrono::duration<double, std::nano>(clock::now() - t0).count() / static_cast<double>(inner);
  }
  std::nth_element(samples.begin(), samples.begin() + static_cast<std::ptrdiff_t>(reps / 2), samples.end());
  return std::max(samples[reps / 2], 1e-3);
}

template <typename T>
inline volatile T bench_sink{};

}  // namespace detail

/// Dense vs CSR matvec timing for one matrix. Requires reps >= 1.
template <typename T>
LayerBench bench_matvec(const Matrix<T>& m, std::size_t reps, std::string name = "matrix", std::uint64_t seed = 7) {
  if (reps == 0) throw ConfigError("bench_matvec: reps must be >= 1");
  Rng rng(seed);
  std::vector<T> x(m.cols);
  for (T& v : x) v = static_cast<T>(rng.uniform(-1, 1));
  const CsrMatrix<T> csr = csr_from_dense(m);
  std::vector<T> y(m.rows);
  LayerBench b{std::move(name), m.rows, m.cols, csr.nnz()};
  b.dense_ns = detail::median_ns(
      [&] {
        for (std::size_t r = 0; r < m.rows; ++r) y[r] = dot<T>(m.row(r), x);
        detail::bench_sink<T> = y.empty() ? T(0) : y[0];
      },
      reps);
  b.csr_ns = detail::median_ns(
      [&] {
        csr_matvec_into<T>(csr, x, y);
        detail::bench_sink<T> = y.empty() ? T(0) : y[0];
      },
      reps);
  b.speedup = b.dense_ns / b.csr_ns;
  return b;
}

/// For each sparsity: prune a copy of `net` globally by magnitude, check that
/// dense-masked and CSR predictions agree to 1e-5 per element, then time both paths.
template <typename T>
BenchReport bench_inference(const MoENetwork<T>& net, const std::vector<double>& sparsities, std::size_t reps,
                            const PruneConfig& pcfg = {}, std::uint64_t seed = 11) {
  if (reps < 100) throw ConfigError("bench_inference: reps must be >= 100");
  BenchReport report;
  report.reps = reps;
  report.timer_resolution_ns = detail::timer_resolution_ns();
  Rng rng(seed);
  std::vector<std::vector<T>> probes(4, std::vector<T>(net.config.d_in));
  for (auto& p : probes)
    for (T& v : p) v = static_cast<T>(rng.normal());

  for (double s : sparsities) {
    MoENetwork<T> pruned = net;
    PruneConfig cfg = pcfg;
    cfg.target_sparsity = s;
    apply_masks(pruned, compute_masks(pruned, s, cfg));
    const SparseMoE<T> sparse(pruned);

    BenchRow row;
    row.sparsity = s;
    row.nnz = sparse.nnz();
    for (const auto& x : probes) {
      const auto omega = gate(pruned, std::span<const T>(x));
      const auto omega_sparse = sparse.gate(x);
      const auto yd = predict_mixed(pruned, std::span<const T>(x), std::span<const T>(omega));
      const auto ys = sparse.predict(x, omega_sparse);
      for (std::size_t k = 0; k < yd.size(); ++k)
        row.max_abs_diff = std::max(row.max_abs_diff, static_cast<double>(std::abs(yd[k] - ys[k])));
    }
    if (!(row.max_abs_diff <= 1e-5))
      throw NumericError("bench_inference: dense and CSR outputs differ by " + std::to_string(row.max_abs_diff) +
                         " at sparsity " + std::to_string(s));

    for (std::size_t l = 0; l < 3; ++l) {
      // one layer slot across all experts
      const auto& ref = pruned.experts[0][2 * l];
      std::vector<T> x(ref.cols), y(ref.rows);
      for (T& v : x) v = static_cast<T>(rng.uniform(-1, 1));
      LayerBench lb{std::string("expert.") + kSlotNames[2 * l], ref.rows, ref.cols, 0};
      for (const auto& e : sparse.experts) lb.nnz += e[l].nnz();
      lb.dense_ns = detail::median_ns(
          [&] {
            for (const auto& e : pruned.experts)
              for (std::size_t r = 0; r < y.size(); ++r) y[r] = dot<T>(e[2 * l].row(r), x);
            detail::bench_sink<T> = y[0];
          },
          reps);
      lb.csr_ns = detail::median_ns(
          [&] {
            for (const auto& e : sparse.experts) csr_matvec_into<T>(e[l], x, y);
            detail::bench_sink<T> = y[0];
          },
          reps);
      lb.speedup = lb.dense_ns / lb.csr_ns;
      row.layers.push_back(lb);
    }
    const auto& x0 = probes[0];
    const auto omega0 = gate(pruned, std::span<const T>(x0));
    row.dense_ns = detail::median_ns(
        [&] { detail::bench_sink<T> = predict_mixed(pruned, std::span<const T>(x0), std::span<const T>(omega0))[0]; },
        reps);
    row.csr_ns = detail::median_ns([&] { detail::bench_sink<T> = sparse.predict(x0, omega0)[0]; }, reps);
    row.speedup = row.dense_ns / row.csr_ns;
    report.rows.push_back(std::move(row));
  }
  return report;
}

}  // namespace mannprune
