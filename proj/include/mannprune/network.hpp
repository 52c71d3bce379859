// Mixture-of-experts motion regression network.
//
// A gating MLP maps a subset of the input frame to blend coefficients
// omega (softmax over K experts). Each expert is a full parameter set for a
// three-layer ELU regression network; the network actually evaluated for a
// frame uses the omega-weighted sum of the expert parameters.
#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "mannprune/numeric.hpp"

namespace mannprune {

struct NetworkConfig {
  std::size_t d_in = 0;
  std::size_t d_out = 0;
  std::size_t h_size = 512;
  std::size_t n_experts = 8;
  std::size_t g_hidden = 32;
  std::vector<std::size_t> gating_indices;
  double dropout_retention = 0.7;

  void validate() const {
    if (d_in == 0) throw ConfigError("network.d_in must be >= 1");
    if (d_out == 0) throw ConfigError("network.d_out must be >= 1");
    if (h_size == 0) throw ConfigError("network.h_size must be >= 1");
    if (n_experts == 0) throw ConfigError("network.n_experts must be >= 1");
    if (g_hidden == 0) throw ConfigError("network.g_hidden must be >= 1");
    if (gating_indices.empty()) throw ConfigError("network.gating_indices must not be empty");
    for (std::size_t idx : gating_indices)
      if (idx >= d_in)
        throw ConfigError("network.gating_indices contains " + std::to_string(idx) + " outside [0, d_in=" +
                          std::to_string(d_in) + ")");
    if (!(dropout_retention > 0.0 && dropout_retention <= 1.0))
      throw ConfigError("network.dropout_retention must be in (0, 1]");
  }

  bool operator==(const NetworkConfig&) const = default;
};

enum class Mode { train, eval };

/// Slot order inside every parameter group.
enum Slot : std::size_t { W0 = 0, B0 = 1, W1 = 2, B1 = 3, W2 = 4, B2 = 5 };
inline constexpr std::size_t kSlots = 6;
inline constexpr std::array<const char*, kSlots> kSlotNames{"W0", "b0", "W1", "b1", "W2", "b2"};

inline bool is_weight_slot(std::size_t slot) { return slot % 2 == 0; }

/// One three-layer parameter set: a single expert, the gating MLP, or a blend.
template <typename T>
struct ParamSet {
  std::array<Matrix<T>, kSlots> t;

  Matrix<T>& operator[](std::size_t s) { return t[s]; }
  const Matrix<T>& operator[](std::size_t s) const { return t[s]; }

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& m : t) n += m.size();
    return n;
  }

  template <typename U>
  ParamSet<U> cast() const {
    ParamSet<U> out;
    for (std::size_t s = 0; s < kSlots; ++s) out.t[s] = t[s].template cast<U>();
    return out;
  }

  bool operator==(const ParamSet&) const = default;
};

template <typename T>
using ExpertBank = std::vector<ParamSet<T>>;
template <typename T>
using BlendedParams = ParamSet<T>;

template <typename T>
ParamSet<T> make_param_set(std::size_t in, std::size_t hidden_a, std::size_t hidden_b, std::size_t out) {
  ParamSet<T> p;
  p[W0] = Matrix<T>(hidden_a, in);
  p[B0] = Matrix<T>(hidden_a, 1);
  p[W1] = Matrix<T>(hidden_b, hidden_a);
  p[B1] = Matrix<T>(hidden_b, 1);
  p[W2] = Matrix<T>(out, hidden_b);
  p[B2] = Matrix<T>(out, 1);
  return p;
}

/// Per-feature statistics used to normalize inputs and denormalize outputs.
template <typename T>
struct Normalization {
  std::vector<T> in_mean, in_std, out_mean, out_std;

  static Normalization identity(std::size_t d_in, std::size_t d_out) {
    return {std::vector<T>(d_in, T(0)), std::vector<T>(d_in, T(1)), std::vector<T>(d_out, T(0)),
            std::vector<T>(d_out, T(1))};
  }

  template <typename U>
  Normalization<U> cast() const {
    auto conv = [](const std::vector<T>& v) { return std::vector<U>(v.begin(), v.end()); };
    return {conv(in_mean), conv(in_std), conv(out_mean), conv(out_std)};
  }

  bool operator==(const Normalization&) const = default;
};

struct TensorInfo {
  std::size_t id;
  std::string name;
  bool gating;
  std::size_t expert;  // meaningless for gating tensors
  std::size_t slot;
  bool weight;
};

template <typename T>
struct MoENetwork {
  NetworkConfig config;
  ParamSet<T> gating;
  ExpertBank<T> experts;
  Normalization<T> norm;

  /// Tensors are numbered gating slots first, then expert-major.
  std::size_t tensor_count() const { return kSlots * (1 + experts.size()); }

  Matrix<T>& tensor(std::size_t id) { return id < kSlots ? gating[id] : experts[(id - kSlots) / kSlots][id % kSlots]; }
  const Matrix<T>& tensor(std::size_t id) const {
    return id < kSlots ? gating[id] : experts[(id - kSlots) / kSlots][id % kSlots];
  }

  TensorInfo info(std::size_t id) const {
    const bool g = id < kSlots;
    const std::size_t expert = g ? 0 : (id - kSlots) / kSlots;
    const std::size_t slot = id % kSlots;
    std::string name = (g ? std::string("gating") : "expert" + std::to_string(expert)) + "." + kSlotNames[slot];
    return {id, std::move(name), g, expert, slot, is_weight_slot(slot)};
  }

  std::size_t parameter_count() const {
    std::size_t n = gating.count();
    for (const auto& e : experts) n += e.count();
    return n;
  }

  template <typename U>
  MoENetwork<U> cast() const {
    MoENetwork<U> out;
    out.config = config;
    out.gating = gating.template cast<U>();
    out.experts.reserve(experts.size());
    for (const auto& e : experts) out.experts.push_back(e.template cast<U>());
    out.norm = norm.template cast<U>();
    return out;
  }

  bool operator==(const MoENetwork&) const = default;
};

/// Closed-form parameter count for a configuration.
inline std::size_t parameter_count(const NetworkConfig& c) {
  const std::size_t h = c.h_size, g = c.g_hidden, k = c.n_experts, gi = c.gating_indices.size();
  const std::size_t expert = h * c.d_in + h * h + c.d_out * h + 2 * h + c.d_out;
  const std::size_t gate = gi * g + g + g * g + g + g * k + k;
  return k * expert + gate;
}

template <typename T>
void xavier_uniform(Matrix<T>& m, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(m.rows + m.cols));
  for (T& v : m.data) v = static_cast<T>(rng.uniform(-bound, bound));
}

template <typename T>
MoENetwork<T> init_network(const NetworkConfig& config, Rng& rng) {
  config.validate();
  MoENetwork<T> net;
  net.config = config;
  net.gating = make_param_set<T>(config.gating_indices.size(), config.g_hidden, config.g_hidden, config.n_experts);
  net.experts.assign(config.n_experts, make_param_set<T>(config.d_in, config.h_size, config.h_size, config.d_out));
  net.norm = Normalization<T>::identity(config.d_in, config.d_out);
  for (std::size_t id = 0; id < net.tensor_count(); ++id)
    if (is_weight_slot(id % kSlots)) xavier_uniform(net.tensor(id), rng);
  return net;
}

namespace detail {

template <typename T>
void dropout_inplace(std::vector<T>& v, double retention, Rng& rng) {
  if (retention >= 1.0) return;
  const T scale = static_cast<T>(1.0 / retention);
  for (T& x : v) x = rng.uniform() < retention ? x * scale : T(0);
}

/// y = W x + b for a single vector.
template <typename T>
std::vector<T> affine(const Matrix<T>& w, const Matrix<T>& b, std::span<const T> x) {
  std::vector<T> y = matvec(w, x);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += b.data[i];
  return y;
}

template <typename T>
void elu_inplace(std::vector<T>& v) {
  for (T& x : v) x = elu(x);
}

/// Three-layer ELU MLP; train mode drops each layer's input.
template <typename T>
std::vector<T> mlp3(const ParamSet<T>& p, std::vector<T> x, Mode mode, double retention, Rng* rng,
                    const char* what) {
  const auto layer = [&](std::size_t w, std::size_t b, bool act, int idx) {
    if (mode == Mode::train && rng) dropout_inplace(x, retention, *rng);
    x = affine(p[w], p[b], std::span<const T>(x));
    if (act) elu_inplace(x);
    if (!all_finite<T>(x))
      throw NumericError(std::string("non-finite activation in ") + what + " layer " + std::to_string(idx));
  };
  layer(W0, B0, true, 0);
  layer(W1, B1, true, 1);
  layer(W2, B2, false, 2);
  return x;
}

template <typename T>
std::vector<T> gather(std::span<const T> x, const std::vector<std::size_t>& idx) {
  std::vector<T> out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) out[i] = x[idx[i]];
  return out;
}

}  // namespace detail

template <typename T>
std::vector<T> gate(const MoENetwork<T>& net, std::span<const T> frame, Mode mode = Mode::eval, Rng* rng = nullptr) {
  if (frame.size() != net.config.d_in)
    throw ShapeError("gate: frame length " + std::to_string(frame.size()) + " != d_in " +
                     std::to_string(net.config.d_in));
  auto logits = detail::mlp3(net.gating, detail::gather(frame, net.config.gating_indices), mode,
                             net.config.dropout_retention, rng, "gating");
  softmax_inplace<T>(logits);
  return logits;
}

/// Tensorwise sum_i omega_i * expert_i.
template <typename T>
BlendedParams<T> blend(const ExpertBank<T>& experts, std::span<const T> omega) {
  if (omega.size() != experts.size())
    throw ShapeError("blend: omega length " + std::to_string(omega.size()) + " != expert count " +
                     std::to_string(experts.size()));
  if (experts.empty()) throw ShapeError("blend: empty expert bank");
  BlendedParams<T> out;
  for (std::size_t s = 0; s < kSlots; ++s) {
    out[s] = Matrix<T>(experts[0][s].rows, experts[0][s].cols);
    for (std::size_t i = 0; i < experts.size(); ++i) {
      if (experts[i][s].rows != out[s].rows || experts[i][s].cols != out[s].cols)
        throw ShapeError("blend: expert " + std::to_string(i) + " slot " + kSlotNames[s] + " has shape " +
                         experts[i][s].shape() + ", expected " + out[s].shape());
      if (omega[i] != T(0)) axpy<T>(omega[i], experts[i][s].data, out[s].data);
    }
  }
  return out;
}

/// Prediction network evaluated with given blend coefficients.
template <typename T>
std::vector<T> predict_with_omega(const MoENetwork<T>& net, std::span<const T> frame, std::span<const T> omega,
                                  Mode mode = Mode::eval, Rng* rng = nullptr) {
  if (frame.size() != net.config.d_in)
    throw ShapeError("predict: frame length " + std::to_string(frame.size()) + " != d_in " +
                     std::to_string(net.config.d_in));
  const BlendedParams<T> params = blend(net.experts, omega);
  return detail::mlp3(params, std::vector<T>(frame.begin(), frame.end()), mode, net.config.dropout_retention, rng,
                      "prediction");
}

/// Next-frame regression for a normalized input frame. Output is normalized.
template <typename T>
std::vector<T> predict(const MoENetwork<T>& net, std::span<const T> frame, Mode mode = Mode::eval,
                       Rng* rng = nullptr) {
  const auto omega = gate(net, frame, mode, rng);
  return predict_with_omega(net, frame, std::span<const T>(omega), mode, rng);
}

template <typename T>
std::vector<T> normalize_input(const MoENetwork<T>& net, std::span<const T> raw) {
  std::vector<T> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = (raw[i] - net.norm.in_mean[i]) / net.norm.in_std[i];
  return out;
}

template <typename T>
std::vector<T> denormalize_output(const MoENetwork<T>& net, std::span<const T> y) {
  std::vector<T> out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) out[i] = y[i] * net.norm.out_std[i] + net.norm.out_mean[i];
  return out;
}

}  // namespace mannprune
