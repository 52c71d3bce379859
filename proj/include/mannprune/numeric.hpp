// Dense and CSR kernels, activations, and the counter-based RNG everything
// else is built on. All kernels are pure functions over their inputs.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mannprune {

struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Row-major dense matrix. Vectors are stored as n x 1.
template <typename T>
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, T fill = T(0)) : rows(r), cols(c), data(r * c, fill) {}
  Matrix(std::size_t r, std::size_t c, std::vector<T> values) : rows(r), cols(c), data(std::move(values)) {
    if (data.size() != r * c)
      throw ShapeError("matrix data length " + std::to_string(data.size()) + " does not match " +
                       std::to_string(r) + "x" + std::to_string(c));
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = T(1);
    return m;
  }

  T& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<T> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const T> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  std::size_t size() const { return data.size(); }
  std::string shape() const { return std::to_string(rows) + "x" + std::to_string(cols); }

  template <typename U>
  Matrix<U> cast() const {
    Matrix<U> out(rows, cols);
    std::transform(data.begin(), data.end(), out.data.begin(), [](T v) { return static_cast<U>(v); });
    return out;
  }

  bool operator==(const Matrix&) const = default;
};

template <typename T>
bool all_finite(std::span<const T> v) {
  return std::all_of(v.begin(), v.end(), [](T x) { return std::isfinite(x); });
}

template <typename T>
T dot(std::span<const T> a, std::span<const T> b) {
  const std::size_t n = a.size();
  const T* pa = a.data();
  const T* pb = b.data();
  T acc = T(0);
#pragma omp simd reduction(+ : acc)
  for (std::size_t i = 0; i < n; ++i) acc += pa[i] * pb[i];
  return acc;
}

template <typename T>
void axpy(T alpha, std::span<const T> x, std::span<T> y) {
  const std::size_t n = x.size();
  const T* px = x.data();
  T* py = y.data();
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) py[i] += alpha * px[i];
}

template <typename T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.cols != b.rows)
    throw ShapeError("matmul: shape mismatch " + a.shape() + " x " + b.shape());
  Matrix<T> out(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    auto orow = out.row(i);
    for (std::size_t k = 0; k < a.cols; ++k) {
      const T aik = a(i, k);
      if (aik != T(0)) axpy<T>(aik, b.row(k), orow);
    }
  }
  return out;
}

/// a * b^T, the layout used by every fully-connected layer (weights are out x in).
template <typename T>
Matrix<T> matmul_bt(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.cols != b.cols)
    throw ShapeError("matmul_bt: shape mismatch " + a.shape() + " x " + b.shape() + "^T");
  Matrix<T> out(a.rows, b.rows);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < b.rows; ++j) out(i, j) = dot<T>(a.row(i), b.row(j));
  return out;
}

template <typename T>
std::vector<T> matvec(const Matrix<T>& m, std::span<const T> x) {
  if (x.size() != m.cols)
    throw ShapeError("matvec: matrix " + m.shape() + " with vector of length " + std::to_string(x.size()));
  std::vector<T> y(m.rows);
  for (std::size_t r = 0; r < m.rows; ++r) y[r] = dot<T>(m.row(r), x);
  return y;
}

template <typename T>
Matrix<T> transpose(const Matrix<T>& m) {
  Matrix<T> t(m.cols, m.rows);
  for (std::size_t r = 0; r < m.rows; ++r)
    for (std::size_t c = 0; c < m.cols; ++c) t(c, r) = m(r, c);
  return t;
}

/// Compressed sparse row storage. Never stores explicit zeros.
template <typename T>
struct CsrMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> row_offsets{0};
  std::vector<std::uint32_t> col_indices;
  std::vector<T> values;

  std::size_t nnz() const { return values.size(); }
};

template <typename T>
CsrMatrix<T> csr_from_dense(const Matrix<T>& m, T zero_tol = T(0)) {
  if (zero_tol < T(0)) throw std::invalid_argument("csr_from_dense: zero_tol must be >= 0");
  CsrMatrix<T> out;
  out.rows = m.rows;
  out.cols = m.cols;
  out.row_offsets.assign(m.rows + 1, 0);
  for (std::size_t r = 0; r < m.rows; ++r) {
    for (std::size_t c = 0; c < m.cols; ++c) {
      const T v = m(r, c);
      if (std::abs(v) > zero_tol && v != T(0)) {
        out.col_indices.push_back(static_cast<std::uint32_t>(c));
        out.values.push_back(v);
      }
    }
    out.row_offsets[r + 1] = out.values.size();
  }
  return out;
}

template <typename T>
Matrix<T> to_dense(const CsrMatrix<T>& m) {
  Matrix<T> out(m.rows, m.cols);
  for (std::size_t r = 0; r < m.rows; ++r)
    for (std::size_t k = m.row_offsets[r]; k < m.row_offsets[r + 1]; ++k) out(r, m.col_indices[k]) = m.values[k];
  return out;
}

template <typename T>
void csr_matvec_into(const CsrMatrix<T>& m, std::span<const T> x, std::span<T> y) {
  if (x.size() != m.cols || y.size() != m.rows)
    throw ShapeError("csr_matvec: matrix " + std::to_string(m.rows) + "x" + std::to_string(m.cols) +
                     " with vector of length " + std::to_string(x.size()));
  const std::size_t* offs = m.row_offsets.data();
  const std::uint32_t* cols = m.col_indices.data();
  const T* vals = m.values.data();
  for (std::size_t r = 0; r < m.rows; ++r) {
    T acc = T(0);
    for (std::size_t k = offs[r]; k < offs[r + 1]; ++k) acc += vals[k] * x[cols[k]];
    y[r] = acc;
  }
}

template <typename T>
std::vector<T> csr_matvec(const CsrMatrix<T>& m, std::span<const T> x) {
  std::vector<T> y(m.rows);
  csr_matvec_into<T>(m, x, y);
  return y;
}

template <typename T>
T elu(T x) {
  return x > T(0) ? x : std::expm1(x);
}

template <typename T>
T elu_grad(T x) {
  return x > T(0) ? T(1) : std::exp(x);
}

template <typename T>
std::vector<T> elu(std::span<const T> x) {
  std::vector<T> y(x.size());
  std::transform(x.begin(), x.end(), y.begin(), [](T v) { return elu(v); });
  return y;
}

template <typename T>
void softmax_inplace(std::span<T> x) {
  if (x.empty()) return;
  const T mx = *std::max_element(x.begin(), x.end());
  T sum = T(0);
  for (T& v : x) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (T& v : x) v /= sum;
}

template <typename T>
std::vector<T> softmax(std::span<const T> x) {
  std::vector<T> y(x.begin(), x.end());
  softmax_inplace<T>(y);
  return y;
}

/// Counter-based generator: output n is SplitMix64's finalizer applied to
/// seed + (n+1) * golden-ratio increment, so streams are identical on every
/// platform and can be positioned by counter alone.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0, std::uint64_t counter = 0) : seed_(seed), counter_(counter) {}

  /// Independent stream derived from this seed and a stream id.
  static Rng derive(std::uint64_t seed, std::uint64_t stream) { return Rng(mix(seed ^ mix(stream + 0x632be59bd9b4e019ULL))); }

  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t next_u64() { return mix(seed_ + (++counter_) * 0x9e3779b97f4a7c15ULL); }

  /// Uniform in [0, 1) with 53 bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). Rejection sampling keeps it unbiased.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) return 0;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do x = next_u64();
    while (x >= limit);
    return x % n;
  }

  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  template <typename It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) std::iter_swap(first + (i - 1), first + below(i));
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_;
};

}  // namespace mannprune
