// Expert ablation and gating-activation profiling.
#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "mannprune/experiment.hpp"
#include "mannprune/motion.hpp"
#include "mannprune/network.hpp"

namespace mannprune {

/// Read-only view of a network with one expert's blend coefficient forced to zero.
template <typename T>
struct AblatedNetwork {
  const MoENetwork<T>* net = nullptr;
  std::size_t expert = 0;
  bool renormalize = false;
};

template <typename T>
AblatedNetwork<T> ablate_expert(const MoENetwork<T>& net, std::size_t expert, bool renormalize = false) {
  if (expert >= net.experts.size())
    throw ConfigError("ablate_expert: expert " + std::to_string(expert) + " out of range [0, " +
                      std::to_string(net.experts.size()) + ")");
  return {&net, expert, renormalize};
}

template <typename T>
const MoENetwork<T>& base_network(const AblatedNetwork<T>& view) {
  return *view.net;
}

/// Zeroes omega[expert]; with renormalize the rest is rescaled to sum to 1 (when it can be).
template <typename T>
void ablate_omega(std::vector<T>& omega, std::size_t expert, bool renormalize) {
  omega[expert] = T(0);
  if (!renormalize) return;
  const T sum = std::accumulate(omega.begin(), omega.end(), T(0));
  if (sum > T(0))
    for (T& w : omega) w /= sum;
}

template <typename T>
std::vector<T> gate(const AblatedNetwork<T>& view, std::span<const T> frame, Mode mode = Mode::eval,
                    Rng* rng = nullptr) {
  auto omega = gate(*view.net, frame, mode, rng);
  ablate_omega(omega, view.expert, view.renormalize);
  return omega;
}

template <typename T>
std::vector<T> predict_with_omega(const AblatedNetwork<T>& view, std::span<const T> frame, std::span<const T> omega,
                                  Mode mode = Mode::eval, Rng* rng = nullptr) {
  return predict_with_omega(*view.net, frame, omega, mode, rng);
}

template <typename T>
std::vector<T> predict(const AblatedNetwork<T>& view, std::span<const T> frame) {
  const auto omega = gate(view, frame);
  return predict_with_omega(view, frame, std::span<const T>(omega));
}

/// Mean joint-velocity magnitude (cm/frame) over every frame and joint.
inline double mean_pose_velocity(const MotionClip& clip) {
  const auto& s = *clip.schema;
  if (clip.frames.rows == 0 || s.joint_count() == 0) return 0.0;
  double sum = 0.0;
  for (std::size_t t = 0; t < clip.frames.rows; ++t)
    for (std::size_t j = 0; j < s.joint_count(); ++j) {
      const std::size_t c = s.velocity_column(j);
      const double vx = clip.frames(t, c), vy = clip.frames(t, c + 1), vz = clip.frames(t, c + 2);
      sum += std::sqrt(vx * vx + vy * vy + vz * vz);
    }
  return sum / static_cast<double>(clip.frames.rows * s.joint_count());
}

struct GaitAblation {
  std::string gait;
  bool diverged = false;
  std::size_t frames_generated = 0;
  double skating = 0;
  double skating_delta = 0;  // ablated - baseline
  double pose_velocity = 0;
  double pose_velocity_delta = 0;
};

struct AblationResult {
  std::size_t expert = 0;
  bool renormalized = false;
  std::vector<GaitAblation> gaits;
  std::vector<MotionClip> clips;  // ablated rollouts, one per gait (truncated on divergence)
};

struct AblationStudy {
  std::vector<GaitAblation> baseline;
  std::vector<AblationResult> experts;
};

namespace detail {

template <typename Model>
GaitAblation ablation_rollout(const Model& model, GaitType gait, const EvalConfig& eval,
                              const std::shared_ptr<const SkeletonSchema>& schema, MotionClip& clip_out) {
  GaitAblation g;
  g.gait = to_string(gait);
  const MotionClip gt = evaluation_clip(gait, eval, schema);
  const auto control = control_series(gt, eval.rollout_frames);
  // Roll out frame by frame so a divergent run still yields its finite prefix.
  std::size_t frames = eval.rollout_frames;
  for (;;) {
    try {
      Rollout r = rollout(model, gt.frames.row(0), control, frames, schema, g.gait);
      clip_out = std::move(r.clip);
      break;
    } catch (const NumericError& e) {
      g.diverged = true;
      const std::string msg = e.what();
      const auto pos = msg.rfind(' ');
      const std::size_t bad = static_cast<std::size_t>(std::stoul(msg.substr(pos + 1)));
      frames = bad > 0 ? bad - 1 : 0;
    }
  }
  g.frames_generated = clip_out.frames.rows - 1;
  g.skating = foot_skate(clip_out, eval.threshold_cm).aggregate;
  g.pose_velocity = mean_pose_velocity(clip_out);
  return g;
}

}  // namespace detail

/// Deactivates each expert in turn and measures skating and pose-velocity
/// changes against the intact network on the evaluation gaits.
inline AblationStudy run_ablation(const MoENetwork<float>& net, const EvalConfig& eval,
                                  const std::shared_ptr<const SkeletonSchema>& schema, bool renormalize = false) {
  AblationStudy study;
  for (GaitType g : eval.gaits) {
    MotionClip clip;
    study.baseline.push_back(detail::ablation_rollout(net, g, eval, schema, clip));
  }
  for (std::size_t i = 0; i < net.experts.size(); ++i) {
    const auto view = ablate_expert(net, i, renormalize);
    AblationResult res;
    res.expert = i;
    res.renormalized = renormalize;
    for (std::size_t k = 0; k < eval.gaits.size(); ++k) {
      MotionClip clip;
      GaitAblation ga = detail::ablation_rollout(view, eval.gaits[k], eval, schema, clip);
      ga.skating_delta = ga.skating - study.baseline[k].skating;
      ga.pose_velocity_delta = ga.pose_velocity - study.baseline[k].pose_velocity;
      res.gaits.push_back(ga);
      res.clips.push_back(std::move(clip));
    }
    study.experts.push_back(std::move(res));
  }
  return study;
}

struct ActivationTrace {
  std::string gait;
  std::string model;  // e.g. dense | sparse
  Matrix<float> omega;  // frames x K

  std::vector<double> mean_omega() const {
    std::vector<double> m(omega.cols, 0.0);
    for (std::size_t t = 0; t < omega.rows; ++t)
      for (std::size_t k = 0; k < omega.cols; ++k) m[k] += omega(t, k);
    for (double& v : m) v /= std::max<std::size_t>(omega.rows, 1);
    return m;
  }

  /// Shannon entropy (nats) of the mean blend vector.
  double entropy() const {
    double h = 0.0;
    for (double p : mean_omega())
      if (p > 0) h -= p * std::log(p);
    return h;
  }
};

inline ActivationTrace make_trace(const Rollout& r, std::string gait, std::string model) {
  ActivationTrace tr{std::move(gait), std::move(model), {}};
  const std::size_t k = r.omegas.empty() ? 0 : r.omegas.front().size();
  tr.omega = Matrix<float>(r.omegas.size(), k);
  for (std::size_t t = 0; t < r.omegas.size(); ++t)
    std::copy(r.omegas[t].begin(), r.omegas[t].end(), tr.omega.row(t).begin());
  return tr;
}

struct LabeledRollout {
  std::string gait;
  Rollout rollout;
};

inline std::vector<ActivationTrace> trace_activations(const std::vector<LabeledRollout>& rollouts,
                                                      const std::string& model) {
  std::vector<ActivationTrace> out;
  for (const auto& r : rollouts) out.push_back(make_trace(r.rollout, r.gait, model));
  return out;
}

/// Rolls the network out on every evaluation gait and records its blend coefficients.
template <typename Model>
std::vector<ActivationTrace> trace_activations(const Model& model, const EvalConfig& eval,
                                               const std::shared_ptr<const SkeletonSchema>& schema,
                                               const std::string& label) {
  std::vector<LabeledRollout> rolls;
  for (GaitType g : eval.gaits) {
    const MotionClip gt = evaluation_clip(g, eval, schema);
    rolls.push_back({to_string(g), rollout(model, gt.frames.row(0), control_series(gt, eval.rollout_frames),
                                           eval.rollout_frames, schema, to_string(g))});
  }
  return trace_activations(rolls, label);
}

struct TraceComparison {
  std::string gait;
  std::string model_a, model_b;
  std::vector<double> correlation;  // per expert, Pearson over time
  double mean_l1 = 0;               // |mean omega_a - mean omega_b|_1
  double entropy_a = 0, entropy_b = 0;
  double entropy_delta = 0;  // entropy_b - entropy_a; positive means b is flatter
};

namespace detail {

inline std::vector<double> resample(const Matrix<float>& m, std::size_t col, std::size_t frames) {
  std::vector<double> out(frames);
  if (m.rows == 0) return out;
  for (std::size_t t = 0; t < frames; ++t) {
    const double pos = frames == 1 ? 0.0 : static_cast<double>(t) * static_cast<double>(m.rows - 1) / static_cast<double>(frames - 1);
    const std::size_t i = static_cast<std::size_t>(std::floor(pos));
    const std::size_t j = std::min(i + 1, m.rows - 1);
    const double f = pos - static_cast<double>(i);
    out[t] = (1.0 - f) * m(i, col) + f * m(j, col);
  }
  return out;
}

/// Pearson correlation; two constant series correlate 1 when equal and 0 otherwise.
inline double correlation(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  if (a.empty()) return 1.0;
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa <= 1e-30 || sbb <= 1e-30) return a == b ? 1.0 : 0.0;
  return sab / std::sqrt(saa * sbb);
}

}  // namespace detail

/// Compares two traces of the same gait; b is resampled to a's frame count when they differ.
inline TraceComparison compare_traces(const ActivationTrace& a, const ActivationTrace& b) {
  if (a.gait != b.gait) throw ConfigError("compare_traces: gait mismatch '" + a.gait + "' vs '" + b.gait + "'");
  if (a.omega.cols != b.omega.cols) throw ConfigError("compare_traces: expert counts differ");
  TraceComparison c;
  c.gait = a.gait;
  c.model_a = a.model;
  c.model_b = b.model;
  const std::size_t frames = a.omega.rows;
  for (std::size_t k = 0; k < a.omega.cols; ++k)
    c.correlation.push_back(detail::correlation(detail::resample(a.omega, k, frames), detail::resample(b.omega, k, frames)));
  const auto ma = a.mean_omega(), mb = b.mean_omega();
  for (std::size_t k = 0; k < ma.size(); ++k) c.mean_l1 += std::abs(ma[k] - mb[k]);
  c.entropy_a = a.entropy();
  c.entropy_b = b.entropy();
  c.entropy_delta = c.entropy_b - c.entropy_a;
  return c;
}

}  // namespace mannprune
