// Single-frame inference that keeps expert matrices separate, in dense and CSR form.
#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "mannprune/network.hpp"

namespace mannprune {

/// Prediction network evaluated as sum_i omega_i (W_i x + b_i) per layer, dense kernels.
template <typename T>
std::vector<T> predict_mixed(const MoENetwork<T>& net, std::span<const T> x, std::span<const T> omega) {
  if (x.size() != net.config.d_in) throw ShapeError("predict_mixed: frame length mismatch");
  if (omega.size() != net.experts.size()) throw ShapeError("predict_mixed: omega length mismatch");
  std::vector<T> a(x.begin(), x.end());
  for (std::size_t l = 0; l < 3; ++l) {
    std::vector<T> z(net.experts[0][2 * l].rows, T(0));
    for (std::size_t i = 0; i < net.experts.size(); ++i) {
      if (omega[i] == T(0)) continue;
      auto zi = matvec(net.experts[i][2 * l], std::span<const T>(a));
      axpy<T>(T(1), net.experts[i][2 * l + 1].data, zi);
      axpy<T>(omega[i], zi, z);
    }
    if (l < 2)
      for (T& v : z) v = elu(v);
    a = std::move(z);
  }
  return a;
}

/// CSR copy of every weight matrix; biases stay dense.
template <typename T>
struct SparseMoE {
  const MoENetwork<T>* dense = nullptr;
  std::array<CsrMatrix<T>, 3> gating;
  std::vector<std::array<CsrMatrix<T>, 3>> experts;

  explicit SparseMoE(const MoENetwork<T>& net) : dense(&net) {
    for (std::size_t l = 0; l < 3; ++l) gating[l] = csr_from_dense(net.gating[2 * l]);
    experts.resize(net.experts.size());
    for (std::size_t i = 0; i < net.experts.size(); ++i)
      for (std::size_t l = 0; l < 3; ++l) experts[i][l] = csr_from_dense(net.experts[i][2 * l]);
  }

  std::size_t nnz() const {
    std::size_t n = 0;
    for (const auto& g : gating) n += g.nnz();
    for (const auto& e : experts)
      for (const auto& m : e) n += m.nnz();
    return n;
  }

  std::vector<T> gate(std::span<const T> frame) const {
    const auto& net = *dense;
    std::vector<T> h(net.config.gating_indices.size());
    for (std::size_t k = 0; k < h.size(); ++k) h[k] = frame[net.config.gating_indices[k]];
    for (std::size_t l = 0; l < 3; ++l) {
      auto z = csr_matvec(gating[l], std::span<const T>(h));
      axpy<T>(T(1), net.gating[2 * l + 1].data, z);
      if (l < 2)
        for (T& v : z) v = elu(v);
      h = std::move(z);
    }
    softmax_inplace<T>(h);
    return h;
  }

  std::vector<T> predict(std::span<const T> x, std::span<const T> omega) const {
    const auto& net = *dense;
    if (x.size() != net.config.d_in) throw ShapeError("SparseMoE::predict: frame length mismatch");
    std::vector<T> a(x.begin(), x.end());
    std::vector<T> zi;
    for (std::size_t l = 0; l < 3; ++l) {
      std::vector<T> z(experts[0][l].rows, T(0));
      zi.resize(z.size());
      for (std::size_t i = 0; i < experts.size(); ++i) {
        if (omega[i] == T(0)) continue;
        csr_matvec_into<T>(experts[i][l], a, zi);
        axpy<T>(T(1), net.experts[i][2 * l + 1].data, zi);
        axpy<T>(omega[i], zi, z);
      }
      if (l < 2)
        for (T& v : z) v = elu(v);
      a = std::move(z);
    }
    return a;
  }
};

}  // namespace mannprune
