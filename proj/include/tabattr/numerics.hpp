#pragma once

// Dense matrices, weighted least squares and the seedable random stream used by
// every stochastic component.
//
// Random numbers: xoshiro256** seeded through SplitMix64. A stream remembers
// the seed it was built from; `split(label)` derives a child seed by mixing
// that seed with a 64-bit FNV-1a hash of the label, so children depend only on
// (parent seed, label) and never on how many numbers the parent has produced.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tabattr/errors.hpp"

namespace tabattr {

using Vector = std::vector<double>;

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw ShapeError("matrix data length " + std::to_string(data_.size()) +
                       " != " + std::to_string(rows_) + "x" +
                       std::to_string(cols_));
    }
  }

  static Matrix FromRows(const std::vector<Vector>& rows) {
    if (rows.empty()) return {};
    Matrix m(rows.size(), rows.front().size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != m.cols_) throw ShapeError("ragged rows");
      std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
    }
    return m;
  }

  static Matrix Identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }

  std::span<double> row(std::size_t r) {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }
  Vector row_vector(std::size_t r) const {
    auto s = row(r);
    return {s.begin(), s.end()};
  }

  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(),
                       [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " times " +
                     std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
    }
  }
  return out;
}

inline Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("max_abs_diff: length mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

namespace detail {

// In-place Cholesky of a symmetric matrix; false when a pivot is not
// comfortably positive relative to the largest diagonal entry.
inline bool cholesky(Matrix& a) {
  const std::size_t n = a.rows();
  double max_diag = 0.0;
  for (std::size_t i = 0; i < n; ++i) max_diag = std::max(max_diag, std::abs(a(i, i)));
  const double tol = 1e-13 * max_diag;
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= a(j, k) * a(j, k);
    if (!(d > tol) || !std::isfinite(d)) return false;
    const double l = std::sqrt(d);
    a(j, j) = l;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= a(i, k) * a(j, k);
      a(i, j) = s / l;
    }
  }
  return true;
}

inline Vector cholesky_solve(const Matrix& l, Vector rhs) {
  const std::size_t n = l.rows();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < i; ++k) rhs[i] -= l(i, k) * rhs[k];
    rhs[i] /= l(i, i);
  }
  for (std::size_t i = n; i-- > 0;) {
    for (std::size_t k = i + 1; k < n; ++k) rhs[i] -= l(k, i) * rhs[k];
    rhs[i] /= l(i, i);
  }
  return rhs;
}

}  // namespace detail

// Minimizes sum_i w_i (y_i - X_i beta)^2 through the normal equations. When the
// Cholesky factorization fails, 1e-10 * trace / n is added to the diagonal and
// the factorization is retried once.
inline Vector solve_wls(const Matrix& design, std::span<const double> targets,
                        std::span<const double> weights) {
  const std::size_t n = design.rows();
  const std::size_t p = design.cols();
  if (targets.size() != n || weights.size() != n) {
    throw ShapeError("solve_wls: design has " + std::to_string(n) +
                     " rows but targets/weights have " +
                     std::to_string(targets.size()) + "/" +
                     std::to_string(weights.size()));
  }
  if (p == 0) return {};
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw ParameterError("solve_wls: weights must be finite and >= 0");
    }
  }

  Matrix normal(p, p);
  Vector rhs(p, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double w = weights[i];
    if (w == 0.0) continue;
    auto xi = design.row(i);
    for (std::size_t a = 0; a < p; ++a) {
      const double wa = w * xi[a];
      rhs[a] += wa * targets[i];
      for (std::size_t b = 0; b <= a; ++b) normal(a, b) += wa * xi[b];
    }
  }
  for (std::size_t a = 0; a < p; ++a)
    for (std::size_t b = 0; b < a; ++b) normal(b, a) = normal(a, b);

  Matrix factor = normal;
  if (!detail::cholesky(factor)) {
    double trace = 0.0;
    for (std::size_t a = 0; a < p; ++a) trace += normal(a, a);
    const double ridge = 1e-10 * trace / static_cast<double>(p);
    factor = normal;
    for (std::size_t a = 0; a < p; ++a) factor(a, a) += ridge;
    if (!(ridge > 0.0) || !detail::cholesky(factor)) {
      throw SingularError("solve_wls: normal equations are singular");
    }
  }

  Vector beta = detail::cholesky_solve(factor, rhs);
  // One step of iterative refinement against the unregularized system.
  Vector residual = rhs;
  for (std::size_t a = 0; a < p; ++a)
    for (std::size_t b = 0; b < p; ++b) residual[a] -= normal(a, b) * beta[b];
  const Vector correction = detail::cholesky_solve(factor, residual);
  for (std::size_t a = 0; a < p; ++a) beta[a] += correction[a];
  return beta;
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed) {
    std::uint64_t sm = seed;
    for (auto& s : state_) s = splitmix64(sm);
  }

  std::uint64_t seed() const { return seed_; }

  Rng split(std::string_view label) const { return split_hash(fnv1a64(label)); }
  Rng split(std::uint64_t index) const {
    return split_hash(index * 0xd1342543de82ef95ULL + 0x2545f4914f6cdd1dULL);
  }

  std::uint64_t next() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform on [0, 1).
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) {
    if (!std::isfinite(lo) || !std::isfinite(hi) || lo > hi) {
      throw ParameterError("rng uniform: invalid bounds [" + std::to_string(lo) +
                           ", " + std::to_string(hi) + "]");
    }
    if (lo == hi) return lo;
    const double v = lo + (hi - lo) * uniform01();
    return std::min(v, hi);
  }

  // Box-Muller without caching the second variate, so each call consumes
  // exactly two 64-bit outputs.
  double normal(double mean, double sd) {
    if (!std::isfinite(mean) || !std::isfinite(sd) || sd < 0.0) {
      throw ParameterError("rng normal: invalid parameters");
    }
    const double u1 = 1.0 - uniform01();
    const double u2 = uniform01();
    const double z = std::sqrt(-2.0 * std::log(u1)) *
                     std::cos(2.0 * std::numbers::pi * u2);
    if (sd == 0.0) return mean;
    return mean + sd * z;
  }

  // Uniform integer in [0, n), rejection sampling on the top bits.
  std::uint64_t index(std::uint64_t n) {
    if (n == 0) throw ParameterError("rng index: empty range");
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t v;
    do {
      v = next();
    } while (v >= limit);
    return v % n;
  }

  std::vector<std::size_t> permutation(std::size_t n) {
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) {
      std::swap(p[i - 1], p[index(i)]);
    }
    return p;
  }

  // k distinct indices from [0, n), in draw order (partial Fisher-Yates).
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k) {
    if (k > n) throw ParameterError("rng sample: k exceeds n");
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), std::size_t{0});
    for (std::size_t i = 0; i < k; ++i) {
      std::swap(p[i], p[i + index(n - i)]);
    }
    p.resize(k);
    return p;
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  Rng split_hash(std::uint64_t h) const {
    std::uint64_t sm = seed_ ^ (h * 0x9e3779b97f4a7c15ULL);
    return Rng(splitmix64(sm));
  }

  std::uint64_t seed_;
  std::uint64_t state_[4];
};

}  // namespace tabattr
