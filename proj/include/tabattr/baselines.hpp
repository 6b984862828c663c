#pragma once

// Baseline (reference input) generators and the static/dynamic,
// deterministic/stochastic taxonomy.
//
// Random draws come in two scopes:
//  * per observation (blurred, gaussian, uniform): the method draws from a
//    child stream keyed by the observation's values, rng.split(fingerprint(x)),
//    so every observation gets its own draw;
//  * per run (expectation): the reference sample is drawn from the caller's
//    stream directly and is shared by every observation explained with it.
// The caller's stream therefore decides run-to-run variation, and the scope
// decides whether distinct observations see distinct draws.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "tabattr/data.hpp"
#include "tabattr/errors.hpp"
#include "tabattr/numerics.hpp"

namespace tabattr {

// Fixed reference value. An empty `values` means every feature takes `fill`.
struct ConstantBaseline {
  Vector values;
  double fill = 0.0;
};

// Training row furthest from x in l1 distance.
struct MaxDistanceBaseline {};

// Gaussian blur along random feature orders, averaged over the orders.
struct BlurredBaseline {
  double sigma = 1.0;
  std::size_t radius = 2;
  std::size_t permutations = 1000;
};

// x plus independent N(0, sigma^2) noise per feature.
struct GaussianBaseline {
  double sigma = 1.0;
};

// Independent uniform draw per feature. Empty `ranges` means the dataset's
// valid ranges.
struct UniformBaseline {
  std::vector<Range> ranges;
};

// Mean of a random sample of training rows.
struct ExpectationBaseline {
  std::size_t sample_size = 100;
};

using BaselineSpec =
    std::variant<ConstantBaseline, MaxDistanceBaseline, BlurredBaseline,
                 GaussianBaseline, UniformBaseline, ExpectationBaseline>;

inline std::string method_name(const BaselineSpec& spec) {
  struct {
    std::string operator()(const ConstantBaseline&) const { return "constant"; }
    std::string operator()(const MaxDistanceBaseline&) const { return "max_distance"; }
    std::string operator()(const BlurredBaseline&) const { return "blurred"; }
    std::string operator()(const GaussianBaseline&) const { return "gaussian"; }
    std::string operator()(const UniformBaseline&) const { return "uniform"; }
    std::string operator()(const ExpectationBaseline&) const { return "expectation"; }
  } visitor;
  return std::visit(visitor, spec);
}

// Canonical text including parameters; stable across runs, used to derive
// random streams.
inline std::string describe(const BaselineSpec& spec) {
  struct {
    std::string operator()(const ConstantBaseline& b) const {
      if (b.values.empty()) return "constant(fill=" + format_real(b.fill) + ")";
      std::string s = "constant(";
      for (std::size_t i = 0; i < b.values.size(); ++i)
        s += (i ? "," : "") + format_real(b.values[i]);
      return s + ")";
    }
    std::string operator()(const MaxDistanceBaseline&) const { return "max_distance()"; }
    std::string operator()(const BlurredBaseline& b) const {
      return "blurred(sigma=" + format_real(b.sigma) +
             ",radius=" + std::to_string(b.radius) +
             ",permutations=" + std::to_string(b.permutations) + ")";
    }
    std::string operator()(const GaussianBaseline& b) const {
      return "gaussian(sigma=" + format_real(b.sigma) + ")";
    }
    std::string operator()(const UniformBaseline& b) const {
      std::string s = "uniform(";
      for (std::size_t i = 0; i < b.ranges.size(); ++i)
        s += (i ? ";" : "") + format_real(b.ranges[i].lo) + "," + format_real(b.ranges[i].hi);
      return s + ")";
    }
    std::string operator()(const ExpectationBaseline& b) const {
      return "expectation(sample_size=" + std::to_string(b.sample_size) + ")";
    }
  } visitor;
  return std::visit(visitor, spec);
}

inline void validate(const BaselineSpec& spec) {
  struct {
    void operator()(const ConstantBaseline& b) const {
      if (!std::isfinite(b.fill)) throw ParameterError("constant baseline: non-finite value");
      for (double v : b.values)
        if (!std::isfinite(v)) throw ParameterError("constant baseline: non-finite value");
    }
    void operator()(const MaxDistanceBaseline&) const {}
    void operator()(const BlurredBaseline& b) const {
      if (!(b.sigma >= 0.0) || !std::isfinite(b.sigma))
        throw ParameterError("blurred baseline: sigma must be >= 0");
      if (b.permutations < 1) throw ParameterError("blurred baseline: permutations must be >= 1");
    }
    void operator()(const GaussianBaseline& b) const {
      if (!(b.sigma >= 0.0) || !std::isfinite(b.sigma))
        throw ParameterError("gaussian baseline: sigma must be >= 0");
    }
    void operator()(const UniformBaseline& b) const {
      for (const auto& r : b.ranges)
        if (!(r.lo <= r.hi)) throw ParameterError("uniform baseline: range with lo > hi");
    }
    void operator()(const ExpectationBaseline& b) const {
      if (b.sample_size < 1) throw ParameterError("expectation baseline: sample_size must be >= 1");
    }
  } visitor;
  std::visit(visitor, spec);
}

struct BaselineVector {
  Vector values;
  std::string method;
};

enum class Spatial { kStatic, kDynamic };
enum class Variability { kDeterministic, kStochastic };

inline const char* to_string(Spatial s) { return s == Spatial::kStatic ? "static" : "dynamic"; }
inline const char* to_string(Variability v) {
  return v == Variability::kDeterministic ? "deterministic" : "stochastic";
}

struct TaxonomyLabel {
  Spatial spatial;
  Variability variability;
  friend bool operator==(const TaxonomyLabel&, const TaxonomyLabel&) = default;
};

inline TaxonomyLabel declared_taxonomy(const BaselineSpec& spec) {
  struct {
    TaxonomyLabel operator()(const ConstantBaseline&) const {
      return {Spatial::kStatic, Variability::kDeterministic};
    }
    TaxonomyLabel operator()(const MaxDistanceBaseline&) const {
      return {Spatial::kDynamic, Variability::kDeterministic};
    }
    TaxonomyLabel operator()(const BlurredBaseline&) const {
      return {Spatial::kDynamic, Variability::kStochastic};
    }
    TaxonomyLabel operator()(const GaussianBaseline&) const {
      return {Spatial::kDynamic, Variability::kStochastic};
    }
    TaxonomyLabel operator()(const UniformBaseline&) const {
      return {Spatial::kDynamic, Variability::kStochastic};
    }
    TaxonomyLabel operator()(const ExpectationBaseline&) const {
      return {Spatial::kStatic, Variability::kStochastic};
    }
  } visitor;
  return std::visit(visitor, spec);
}

// 64-bit hash of the exact bit patterns of x.
inline std::uint64_t fingerprint(std::span<const double> x) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double v : x) {
    if (v == 0.0) v = 0.0;  // fold -0.0 into +0.0
    std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    for (int b = 0; b < 8; ++b) {
      h ^= (bits >> (8 * b)) & 0xffU;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

// Normalized truncated Gaussian kernel of length 2*radius+1. sigma = 0 gives
// the identity kernel.
inline Vector gaussian_kernel(double sigma, std::size_t radius) {
  Vector k(2 * radius + 1, 0.0);
  if (sigma == 0.0) {
    k[radius] = 1.0;
    return k;
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < k.size(); ++i) {
    const double d = static_cast<double>(i) - static_cast<double>(radius);
    sum += (k[i] = std::exp(-0.5 * d * d / (sigma * sigma)));
  }
  for (double& v : k) v /= sum;
  return k;
}

// Lays x out along `order` (position p holds x[order[p]]), convolves with the
// kernel under clamp-to-edge padding and maps the result back to feature
// positions.
inline Vector blur_along_order(std::span<const double> x,
                               std::span<const std::size_t> order,
                               const Vector& kernel) {
  const std::size_t m = x.size();
  const auto radius = static_cast<std::ptrdiff_t>(kernel.size() / 2);
  Vector out(m, 0.0);
  for (std::size_t p = 0; p < m; ++p) {
    double acc = 0.0;
    for (std::ptrdiff_t d = -radius; d <= radius; ++d) {
      const std::ptrdiff_t q = std::clamp<std::ptrdiff_t>(
          static_cast<std::ptrdiff_t>(p) + d, 0, static_cast<std::ptrdiff_t>(m) - 1);
      acc += kernel[static_cast<std::size_t>(d + radius)] * x[order[static_cast<std::size_t>(q)]];
    }
    out[order[p]] = acc;
  }
  return out;
}

// Training rows making up the expectation baseline's reference sample, in
// draw order. Sizes beyond the training split are clamped to it.
inline std::vector<std::size_t> expectation_sample(const ExpectationBaseline& spec,
                                                   const Dataset& ds, Rng rng) {
  if (ds.train.empty()) throw DataError("expectation baseline: empty training split");
  const std::size_t s = std::min(spec.sample_size, ds.train.size());
  const auto pick = rng.sample_without_replacement(ds.train.size(), s);
  std::vector<std::size_t> rows;
  rows.reserve(s);
  for (std::size_t i : pick) rows.push_back(ds.train[i]);
  return rows;
}

namespace detail {

struct Generator {
  std::span<const double> x;
  const Dataset& ds;
  Rng rng;

  Vector operator()(const ConstantBaseline& b) const {
    if (b.values.empty()) return Vector(x.size(), b.fill);
    if (b.values.size() != x.size()) {
      throw ShapeError("constant baseline has " + std::to_string(b.values.size()) +
                       " values, observation has " + std::to_string(x.size()));
    }
    return b.values;
  }

  Vector operator()(const MaxDistanceBaseline&) const {
    if (ds.train.empty()) throw DataError("max_distance baseline: empty training split");
    std::size_t best_row = ds.train.front();
    double best = -1.0;
    for (std::size_t r : ds.train) {
      auto row = ds.features.row(r);
      double d = 0.0;
      for (std::size_t j = 0; j < x.size(); ++j) d += std::abs(row[j] - x[j]);
      if (d > best || (d == best && r < best_row)) best = d, best_row = r;
    }
    return ds.features.row_vector(best_row);
  }

  Vector operator()(const BlurredBaseline& b) const {
    const Vector kernel = gaussian_kernel(b.sigma, b.radius);
    Rng local = rng.split(fingerprint(x));
    Vector acc(x.size(), 0.0);
    for (std::size_t p = 0; p < b.permutations; ++p) {
      const auto order = local.permutation(x.size());
      const Vector blurred = blur_along_order(x, order, kernel);
      for (std::size_t j = 0; j < x.size(); ++j) acc[j] += blurred[j];
    }
    for (double& v : acc) v /= static_cast<double>(b.permutations);
    return acc;
  }

  Vector operator()(const GaussianBaseline& b) const {
    Rng local = rng.split(fingerprint(x));
    Vector out(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) out[j] = local.normal(x[j], b.sigma);
    return out;
  }

  Vector operator()(const UniformBaseline& b) const {
    const auto& ranges = b.ranges.empty() ? ds.ranges : b.ranges;
    if (ranges.size() != x.size()) {
      throw ShapeError("uniform baseline: " + std::to_string(ranges.size()) +
                       " ranges for " + std::to_string(x.size()) + " features");
    }
    Rng local = rng.split(fingerprint(x));
    Vector out(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) out[j] = local.uniform(ranges[j].lo, ranges[j].hi);
    return out;
  }

  Vector operator()(const ExpectationBaseline& b) const {
    const auto rows = expectation_sample(b, ds, rng);
    Vector mean(x.size(), 0.0);
    for (std::size_t r : rows) {
      auto row = ds.features.row(r);
      for (std::size_t j = 0; j < x.size(); ++j) mean[j] += row[j];
    }
    for (double& v : mean) v /= static_cast<double>(rows.size());
    return mean;
  }
};

}  // namespace detail

inline BaselineVector generate(const BaselineSpec& spec, std::span<const double> x,
                               const Dataset& ds, const Rng& rng) {
  if (x.size() != ds.num_features()) {
    throw ShapeError("baseline: observation has " + std::to_string(x.size()) +
                     " features, dataset has " + std::to_string(ds.num_features()));
  }
  validate(spec);
  return {std::visit(detail::Generator{x, ds, rng}, spec), method_name(spec)};
}

struct StaticVerdict {
  Spatial verdict = Spatial::kStatic;
  // Rows of the first pair whose baselines differed.
  std::optional<std::pair<std::size_t, std::size_t>> witness;
};

struct DeterministicVerdict {
  Variability verdict = Variability::kDeterministic;
  std::optional<std::pair<Vector, Vector>> witness;
};

inline bool baselines_equal(const Vector& a, const Vector& b, double tol = 1e-12) {
  return a.size() == b.size() && max_abs_diff(a, b) <= tol;
}

// Definition check over observation pairs: both members of a pair are given
// the same random stream, so only the dependence on the observation varies.
inline StaticVerdict check_static(const BaselineSpec& spec, const Dataset& ds,
                                  std::size_t n_pairs, const Rng& rng) {
  if (n_pairs < 1) throw ParameterError("check_static: n_pairs must be >= 1");
  if (ds.rows() < 2) throw DataError("check_static: need at least two observations");
  Rng picker = rng.split("pairs");
  const Rng noise = rng.split("noise");
  for (std::size_t k = 0; k < n_pairs; ++k) {
    const auto pair = picker.sample_without_replacement(ds.rows(), 2);
    const Rng shared = noise.split(k);
    const auto bi = generate(spec, ds.features.row(pair[0]), ds, shared);
    const auto bj = generate(spec, ds.features.row(pair[1]), ds, shared);
    if (!baselines_equal(bi.values, bj.values)) {
      return {Spatial::kDynamic, std::make_pair(pair[0], pair[1])};
    }
  }
  return {};
}

// Repeated generation for one observation with independent child streams.
inline DeterministicVerdict check_deterministic(const BaselineSpec& spec,
                                                std::span<const double> x,
                                                const Dataset& ds, std::size_t n_runs,
                                                const Rng& rng) {
  if (n_runs < 2) throw ParameterError("check_deterministic: n_runs must be >= 2");
  const auto first = generate(spec, x, ds, rng.split(std::uint64_t{0}));
  for (std::size_t k = 1; k < n_runs; ++k) {
    const auto next = generate(spec, x, ds, rng.split(k));
    if (!baselines_equal(first.values, next.values)) {
      return {Variability::kStochastic, std::make_pair(first.values, next.values)};
    }
  }
  return {};
}

}  // namespace tabattr
