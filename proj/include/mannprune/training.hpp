// Mean-squared-error training with explicit backpropagation.
//
// Every layer of the prediction network is linear in its parameters, so the
// batch forward pass evaluates each expert's layer on the batch and mixes the
// outputs per sample: W_blend x + b_blend = sum_i omega_i (W_i x + b_i).
// This is the same function as blending parameters first, but it keeps the
// per-expert matrices intact for batched products and sparse kernels.
#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mannprune/motion.hpp"
#include "mannprune/network.hpp"
#include "mannprune/optimizer.hpp"
#include "mannprune/pruning.hpp"

namespace mannprune {

namespace detail {

template <typename T>
Matrix<T> gather_columns(const Matrix<T>& x, const std::vector<std::size_t>& cols) {
  Matrix<T> out(x.rows, cols.size());
  for (std::size_t r = 0; r < x.rows; ++r)
    for (std::size_t k = 0; k < cols.size(); ++k) out(r, k) = x(r, cols[k]);
  return out;
}

/// Inverted dropout multipliers (0 or 1/p), one per element.
template <typename T>
Matrix<T> dropout_mask(std::size_t rows, std::size_t cols, double retention, Rng& rng) {
  Matrix<T> m(rows, cols, T(1));
  if (retention >= 1.0) return m;
  const T scale = static_cast<T>(1.0 / retention);
  for (T& v : m.data) v = rng.uniform() < retention ? scale : T(0);
  return m;
}

template <typename T>
void hadamard_inplace(Matrix<T>& a, const Matrix<T>& b) {
  for (std::size_t k = 0; k < a.data.size(); ++k) a.data[k] *= b.data[k];
}

template <typename T>
void add_bias_rows(Matrix<T>& z, const Matrix<T>& bias) {
  for (std::size_t r = 0; r < z.rows; ++r) axpy<T>(T(1), bias.data, z.row(r));
}

template <typename T>
Matrix<T> elu_matrix(const Matrix<T>& z) {
  Matrix<T> out(z.rows, z.cols);
  for (std::size_t k = 0; k < z.data.size(); ++k) out.data[k] = elu(z.data[k]);
  return out;
}

/// Activations kept for the backward pass.
template <typename T>
struct ForwardCache {
  // gating
  Matrix<T> g_in[3];  // dropped inputs of each gating layer
  Matrix<T> g_pre[2];
  Matrix<T> omega;
  // prediction network
  Matrix<T> p_in[3];
  Matrix<T> p_pre[2];
  std::vector<Matrix<T>> expert_out[3];  // W_i x + b_i per expert, per layer
  Matrix<T> drop_g[3], drop_p[3];
};

/// Affine layer over a batch for every expert, mixed by omega.
template <typename T>
Matrix<T> mixed_layer(const MoENetwork<T>& net, std::size_t w_slot, const Matrix<T>& in, const Matrix<T>& omega,
                      std::vector<Matrix<T>>* keep) {
  const std::size_t k_experts = net.experts.size();
  const std::size_t n_out = net.experts[0][w_slot].rows;
  Matrix<T> out(in.rows, n_out);
  if (keep) keep->assign(k_experts, Matrix<T>());
  for (std::size_t i = 0; i < k_experts; ++i) {
    Matrix<T> zi = matmul_bt(in, net.experts[i][w_slot]);
    add_bias_rows(zi, net.experts[i][w_slot + 1]);
    for (std::size_t b = 0; b < in.rows; ++b) axpy<T>(omega(b, i), zi.row(b), out.row(b));
    if (keep) (*keep)[i] = std::move(zi);
  }
  return out;
}

template <typename T>
Matrix<T> forward_batch(const MoENetwork<T>& net, const Matrix<T>& x, Mode mode, Rng* rng, ForwardCache<T>* cache) {
  const NetworkConfig& cfg = net.config;
  if (x.cols != cfg.d_in) throw ShapeError("forward: batch has " + std::to_string(x.cols) + " columns, d_in is " +
                                           std::to_string(cfg.d_in));
  const bool drop = mode == Mode::train && rng && cfg.dropout_retention < 1.0;
  const auto maybe_drop = [&](Matrix<T> in, Matrix<T>* mask_out) {
    if (drop) {
      Matrix<T> mask = dropout_mask<T>(in.rows, in.cols, cfg.dropout_retention, *rng);
      hadamard_inplace(in, mask);
      if (mask_out) *mask_out = std::move(mask);
    }
    return in;
  };

  // gating network
  Matrix<T> h = gather_columns(x, cfg.gating_indices);
  Matrix<T> logits;
  for (std::size_t l = 0; l < 3; ++l) {
    Matrix<T> in = maybe_drop(std::move(h), cache ? &cache->drop_g[l] : nullptr);
    Matrix<T> z = matmul_bt(in, net.gating[2 * l]);
    add_bias_rows(z, net.gating[2 * l + 1]);
    if (cache) cache->g_in[l] = std::move(in);
    if (l < 2) {
      h = elu_matrix(z);
      if (cache) cache->g_pre[l] = std::move(z);
    } else {
      logits = std::move(z);
    }
  }
  Matrix<T> omega = std::move(logits);
  for (std::size_t b = 0; b < omega.rows; ++b) softmax_inplace<T>(omega.row(b));

  // prediction network
  Matrix<T> a = x;
  Matrix<T> y;
  for (std::size_t l = 0; l < 3; ++l) {
    Matrix<T> in = maybe_drop(std::move(a), cache ? &cache->drop_p[l] : nullptr);
    Matrix<T> z = mixed_layer(net, 2 * l, in, omega, cache ? &cache->expert_out[l] : nullptr);
    if (cache) cache->p_in[l] = std::move(in);
    if (l < 2) {
      a = elu_matrix(z);
      if (cache) cache->p_pre[l] = std::move(z);
    } else {
      y = std::move(z);
    }
  }
  if (cache) cache->omega = std::move(omega);
  return y;
}

template <typename T>
void elu_backward_inplace(Matrix<T>& grad, const Matrix<T>& pre) {
  for (std::size_t k = 0; k < grad.data.size(); ++k) grad.data[k] *= elu_grad(pre.data[k]);
}

}  // namespace detail

/// Batched eval-mode forward pass on normalized inputs.
template <typename T>
Matrix<T> predict_batch(const MoENetwork<T>& net, const Matrix<T>& x) {
  return detail::forward_batch<T>(net, x, Mode::eval, nullptr, nullptr);
}

template <typename T>
T mse(const Matrix<T>& pred, const Matrix<T>& target) {
  if (pred.rows != target.rows || pred.cols != target.cols)
    throw ShapeError("mse: prediction " + pred.shape() + " vs target " + target.shape());
  double acc = 0.0;
  for (std::size_t k = 0; k < pred.data.size(); ++k) {
    const double d = static_cast<double>(pred.data[k]) - static_cast<double>(target.data[k]);
    acc += d * d;
  }
  return static_cast<T>(acc / static_cast<double>(pred.data.size()));
}

template <typename T>
struct LossAndGradients {
  T loss;
  Gradients<T> grads;
};

/// Mean squared error over batch and output dims and its exact gradient with
/// respect to every expert, gating, and bias tensor.
template <typename T>
LossAndGradients<T> forward_backward(const MoENetwork<T>& net, const Matrix<T>& batch_x, const Matrix<T>& batch_y,
                                     Rng& rng, Mode mode = Mode::train, std::size_t batch_index = 0) {
  if (batch_x.rows != batch_y.rows || batch_y.cols != net.config.d_out)
    throw ShapeError("forward_backward: batch shapes " + batch_x.shape() + " / " + batch_y.shape() +
                     " do not match network");
  detail::ForwardCache<T> c;
  const Matrix<T> pred = detail::forward_batch<T>(net, batch_x, mode, &rng, &c);
  const T loss = mse(pred, batch_y);
  if (!std::isfinite(static_cast<double>(loss)))
    throw NumericError("non-finite loss at batch " + std::to_string(batch_index));

  const std::size_t batch = batch_x.rows, k_experts = net.experts.size();
  const bool dropped = mode == Mode::train && net.config.dropout_retention < 1.0;
  Gradients<T> g = zeros_like(net);

  Matrix<T> dz(batch, net.config.d_out);
  const T scale = T(2) / static_cast<T>(batch * net.config.d_out);
  for (std::size_t k = 0; k < dz.data.size(); ++k) dz.data[k] = scale * (pred.data[k] - batch_y.data[k]);

  Matrix<T> d_omega(batch, k_experts);
  for (std::size_t l = 3; l-- > 0;) {
    const Matrix<T>& in = c.p_in[l];
    Matrix<T> d_in(batch, in.cols);
    for (std::size_t i = 0; i < k_experts; ++i) {
      const std::size_t w_id = kSlots * (1 + i) + 2 * l;
      Matrix<T>& dw = g[w_id];
      Matrix<T>& db = g[w_id + 1];
      const Matrix<T>& w = net.experts[i][2 * l];
      for (std::size_t b = 0; b < batch; ++b) {
        const T om = c.omega(b, i);
        const auto dzb = dz.row(b);
        d_omega(b, i) += dot<T>(dzb, c.expert_out[l][i].row(b));
        if (om == T(0)) continue;
        for (std::size_t j = 0; j < dzb.size(); ++j) {
          const T gj = om * dzb[j];
          if (gj == T(0)) continue;
          db.data[j] += gj;
          axpy<T>(gj, in.row(b), dw.row(j));
          axpy<T>(gj, w.row(j), d_in.row(b));
        }
      }
    }
    if (l == 0) break;
    if (dropped) detail::hadamard_inplace(d_in, c.drop_p[l]);
    detail::elu_backward_inplace(d_in, c.p_pre[l - 1]);
    dz = std::move(d_in);
  }

  // softmax backward
  Matrix<T> dg(batch, k_experts);
  for (std::size_t b = 0; b < batch; ++b) {
    T s = T(0);
    for (std::size_t i = 0; i < k_experts; ++i) s += c.omega(b, i) * d_omega(b, i);
    for (std::size_t i = 0; i < k_experts; ++i) dg(b, i) = c.omega(b, i) * (d_omega(b, i) - s);
  }
  for (std::size_t l = 3; l-- > 0;) {
    const Matrix<T>& in = c.g_in[l];
    Matrix<T>& dw = g[2 * l];
    Matrix<T>& db = g[2 * l + 1];
    const Matrix<T>& w = net.gating[2 * l];
    Matrix<T> d_in(batch, in.cols);
    for (std::size_t b = 0; b < batch; ++b) {
      const auto dgb = dg.row(b);
      for (std::size_t j = 0; j < dgb.size(); ++j) {
        const T gj = dgb[j];
        if (gj == T(0)) continue;
        db.data[j] += gj;
        axpy<T>(gj, in.row(b), dw.row(j));
        if (l > 0) axpy<T>(gj, w.row(j), d_in.row(b));
      }
    }
    if (l == 0) break;
    if (dropped) detail::hadamard_inplace(d_in, c.drop_g[l]);
    detail::elu_backward_inplace(d_in, c.g_pre[l - 1]);
    dg = std::move(d_in);
  }

  for (std::size_t id = 0; id < g.size(); ++id)
    if (!all_finite<T>(g[id].data))
      throw NumericError("non-finite gradient for " + net.info(id).name + " at batch " + std::to_string(batch_index));
  return {loss, std::move(g)};
}

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based, counted across resumes
  double train_loss = 0;
  double val_loss = 0;
  double annealing = 0;  // factor in effect for the epoch's last step
  double sparsity = 0;
  double wall_seconds = 0;
};

struct TrainReport {
  std::uint64_t seed = 0;
  std::uint64_t steps = 0;
  std::vector<EpochRecord> epochs;
  double final_sparsity = 0;
};

/// Optimizer and schedule position; enough to continue a run bit-identically.
struct TrainState {
  OptimizerState<float> optimizer;
  std::size_t epochs_done = 0;
};

struct TrainHooks {
  std::function<void(const EpochRecord&)> on_epoch;
};

inline void attach_normalization(MoENetwork<float>& net, const MotionDataset& data) { net.norm = data.stats; }

inline std::size_t steps_per_epoch(std::size_t samples, std::size_t batch) { return (samples + batch - 1) / batch; }

/// Trains `net` in place on the dataset's normalized pairs. With `prune`, the
/// pruning engine runs after every optimizer step. The caller attaches the
/// dataset statistics to the network (see attach_normalization).
inline TrainReport train(MoENetwork<float>& net, const MotionDataset& data, const TrainConfig& cfg,
                         PruneState* prune = nullptr, const TrainHooks& hooks = {}, TrainState* resume = nullptr) {
  cfg.validate();
  const std::size_t n = data.x_train.rows;
  if (n == 0) throw ConfigError("train: empty training set");
  if (cfg.batch_size > n)
    throw ConfigError("train: batch_size " + std::to_string(cfg.batch_size) + " exceeds training set size " +
                      std::to_string(n));
  if (data.x_train.cols != net.config.d_in || data.y_train.cols != net.config.d_out)
    throw ConfigError("train: dataset dimensions do not match the network");

  TrainState local;
  TrainState& st = resume ? *resume : local;
  if (st.optimizer.m.empty()) st.optimizer = OptimizerState<float>::zeros(net);

  TrainReport report;
  report.seed = cfg.seed;
  const std::size_t per_epoch = steps_per_epoch(n, cfg.batch_size);
  const std::uint64_t total_steps = static_cast<std::uint64_t>(cfg.epochs) * per_epoch;
  if (prune) apply_masks(net, *prune, &st.optimizer);

  std::vector<std::size_t> order(n);
  Matrix<float> bx, by;
  while (st.epochs_done < cfg.epochs) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::size_t epoch = st.epochs_done;
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng::derive(cfg.seed, 0x5348554646000000ULL + epoch).shuffle(order.begin(), order.end());
    double loss_sum = 0.0;
    for (std::size_t s = 0; s < per_epoch; ++s) {
      const std::size_t begin = s * cfg.batch_size, end = std::min(n, begin + cfg.batch_size);
      bx = Matrix<float>(end - begin, data.x_train.cols);
      by = Matrix<float>(end - begin, data.y_train.cols);
      for (std::size_t r = begin; r < end; ++r) {
        std::copy_n(data.x_train.row(order[r]).begin(), bx.cols, bx.row(r - begin).begin());
        std::copy_n(data.y_train.row(order[r]).begin(), by.cols, by.row(r - begin).begin());
      }
      const std::uint64_t step = st.optimizer.step + 1;
      Rng dropout = Rng::derive(cfg.seed, 0x44524f5000000000ULL + step);
      auto lg = forward_backward<float>(net, bx, by, dropout, Mode::train, static_cast<std::size_t>(step));
      loss_sum += static_cast<double>(lg.loss) * static_cast<double>(end - begin);
      st.optimizer.annealing = annealing_factor(static_cast<double>(step - 1) / static_cast<double>(per_epoch), cfg);
      adamwr_step<float>(st.optimizer, net, lg.grads, cfg, prune ? &prune->masks : nullptr);
      if (prune) on_step(*prune, net, step, total_steps, &st.optimizer);
    }
    ++st.epochs_done;
    EpochRecord rec;
    rec.epoch = st.epochs_done;
    rec.train_loss = loss_sum / static_cast<double>(n);
    rec.val_loss = data.x_val.rows ? static_cast<double>(mse(predict_batch(net, data.x_val), data.y_val)) : 0.0;
    rec.annealing = st.optimizer.annealing;
    rec.sparsity = prune ? prune->sparsity : 0.0;
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report.epochs.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec);
  }
  report.steps = st.optimizer.step;
  report.final_sparsity = prune ? prune->sparsity : 0.0;
  return report;
}

}  // namespace mannprune
