#pragma once

// Local attribution methods for the MLP: Integrated Gradients, DeepLIFT
// (Rescale rule), KernelSHAP and DeepSHAP. Gradient-based methods explain the
// target logit (see Target); KernelSHAP explains any batched value function.

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tabattr/baselines.hpp"
#include "tabattr/data.hpp"
#include "tabattr/errors.hpp"
#include "tabattr/model.hpp"
#include "tabattr/numerics.hpp"

namespace tabattr {

enum class AttributionMethod { kIntegratedGradients, kDeepLift, kKernelShap, kDeepShap };

inline std::string to_string(AttributionMethod m) {
  switch (m) {
    case AttributionMethod::kIntegratedGradients: return "ig";
    case AttributionMethod::kDeepLift: return "deeplift";
    case AttributionMethod::kKernelShap: return "kernel_shap";
    case AttributionMethod::kDeepShap: return "deep_shap";
  }
  return "unknown";
}

inline std::optional<AttributionMethod> parse_attribution_method(std::string_view s) {
  if (s == "ig") return AttributionMethod::kIntegratedGradients;
  if (s == "deeplift") return AttributionMethod::kDeepLift;
  if (s == "kernel_shap") return AttributionMethod::kKernelShap;
  if (s == "deep_shap") return AttributionMethod::kDeepShap;
  return std::nullopt;
}

enum class ShapValue { kProbability, kLogit };

struct AttributionConfig {
  std::size_t ig_steps = 300;
  std::size_t kshap_samples = 2048;
  std::size_t kshap_exhaustive_threshold = 12;
  ShapValue kshap_value = ShapValue::kProbability;
  // 0: DeepSHAP uses the expectation baseline's own sample size.
  std::size_t deepshap_background_size = 0;
  // Baseline draws averaged per observation (only matters for stochastic
  // baselines).
  std::size_t baseline_draws = 1;
  double deeplift_epsilon = 1e-9;

  void validate(std::size_t num_features) const {
    if (ig_steps < 1) throw ParameterError("attribution: ig_steps must be >= 1");
    if (kshap_exhaustive_threshold < 1)
      throw ParameterError("attribution: kshap_exhaustive_threshold must be >= 1");
    if (num_features > kshap_exhaustive_threshold && kshap_samples < num_features + 2)
      throw ParameterError("attribution: kshap_samples must be >= M + 2 when sampling");
    if (baseline_draws < 1) throw ParameterError("attribution: baseline_draws must be >= 1");
  }
};

struct AttributionVector {
  Vector values;
  int target_class = 0;
  AttributionMethod method = AttributionMethod::kIntegratedGradients;
  // For DeepSHAP this is the mean of the background set.
  BaselineVector baseline_used;
  std::size_t background_size = 1;
};

namespace detail {

inline void check_pair(std::span<const double> x, std::span<const double> b,
                       std::size_t m) {
  if (x.size() != m || b.size() != m) {
    throw ShapeError("attribution: expected " + std::to_string(m) +
                     " features, got x=" + std::to_string(x.size()) +
                     " b=" + std::to_string(b.size()));
  }
}

}  // namespace detail

// a_i = (x_i - b_i) * mean_k dF/dx_i at b + (k - 1/2)/m (x - b), k = 1..m.
inline Vector integrated_gradients(const MLPModel& model, std::span<const double> x,
                                   std::span<const double> b, const Target& target,
                                   std::size_t steps) {
  detail::check_pair(x, b, model.inputs());
  if (steps < 1) throw ParameterError("integrated_gradients: steps must be >= 1");
  const std::size_t m = x.size();
  Vector diff(m), point(m), total(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) diff[i] = x[i] - b[i];
  if (std::all_of(diff.begin(), diff.end(), [](double d) { return d == 0.0; })) return total;
  for (std::size_t k = 1; k <= steps; ++k) {
    const double alpha = (static_cast<double>(k) - 0.5) / static_cast<double>(steps);
    for (std::size_t i = 0; i < m; ++i) point[i] = b[i] + alpha * diff[i];
    const Vector g = model.input_gradient(point, target);
    for (std::size_t i = 0; i < m; ++i) total[i] += g[i];
  }
  for (std::size_t i = 0; i < m; ++i) total[i] = diff[i] * total[i] / static_cast<double>(steps);
  return total;
}

// Rescale rule through the single hidden ReLU layer. Hidden multiplier
// (ReLU(z) - ReLU(z0)) / (z - z0), or the ReLU derivative at z when
// |z - z0| <= epsilon.
inline Vector deeplift_rescale(const MLPModel& model, std::span<const double> x,
                               std::span<const double> b, const Target& target,
                               double epsilon = 1e-9) {
  detail::check_pair(x, b, model.inputs());
  const Vector z = model.hidden_preactivation(x);
  const Vector z0 = model.hidden_preactivation(b);
  const std::size_t hdim = model.hidden();
  Vector contrib(hdim);
  for (std::size_t h = 0; h < hdim; ++h) {
    const double dz = z[h] - z0[h];
    double mult;
    if (std::abs(dz) > epsilon) {
      mult = (std::max(z[h], 0.0) - std::max(z0[h], 0.0)) / dz;
    } else {
      mult = z[h] > 0.0 ? 1.0 : 0.0;
    }
    contrib[h] = mult * model.w2()(h, target.output) * target.sign;
  }
  Vector a(x.size(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - b[i];
    if (dx == 0.0) continue;
    auto w = model.w1().row(i);
    double s = 0.0;
    for (std::size_t h = 0; h < hdim; ++h) s += w[h] * contrib[h];
    a[i] = dx * s;
  }
  return a;
}

// Mean of DeepLIFT attributions over a background set.
inline Vector deep_shap(const MLPModel& model, std::span<const double> x,
                        const std::vector<Vector>& background, const Target& target,
                        double epsilon = 1e-9) {
  if (background.empty()) throw ParameterError("deep_shap: empty background");
  Vector mean(x.size(), 0.0);
  for (const auto& b : background) {
    const Vector a = deeplift_rescale(model, x, b, target, epsilon);
    for (std::size_t i = 0; i < a.size(); ++i) mean[i] += a[i];
  }
  for (double& v : mean) v /= static_cast<double>(background.size());
  return mean;
}

// Maps a batch of rows to one scalar per row.
using ValueFunction = std::function<Vector(const Matrix&)>;

// Shapley kernel weight of a coalition of size s out of m features.
inline double shapley_kernel_weight(std::size_t m, std::size_t s) {
  double binom = 1.0;
  for (std::size_t k = 1; k <= s; ++k)
    binom = binom * static_cast<double>(m - s + k) / static_cast<double>(k);
  return static_cast<double>(m - 1) /
         (binom * static_cast<double>(s) * static_cast<double>(m - s));
}

// KernelSHAP: Shapley-kernel weighted regression over coalitions, with the
// efficiency constraint v(full) - v(empty) enforced by eliminating the last
// feature. All 2^M - 2 proper coalitions are enumerated when
// M <= exhaustive_threshold; otherwise `samples` coalitions are drawn with
// probability proportional to their kernel weight.
inline Vector kernel_shap(const ValueFunction& value, std::span<const double> x,
                          std::span<const double> b, std::size_t exhaustive_threshold,
                          std::size_t samples, Rng rng) {
  const std::size_t m = x.size();
  detail::check_pair(x, b, m);
  if (m == 0) return {};

  Matrix ends(2, m);
  std::copy(b.begin(), b.end(), ends.row(0).begin());
  std::copy(x.begin(), x.end(), ends.row(1).begin());
  const Vector end_values = value(ends);
  const double v_empty = end_values.at(0), v_full = end_values.at(1);
  const double total = v_full - v_empty;
  if (m == 1) return {total};

  std::vector<std::vector<char>> masks;
  Vector weights;
  if (m <= exhaustive_threshold) {
    if (m >= 63) throw ParameterError("kernel_shap: too many features to enumerate");
    const std::uint64_t count = (std::uint64_t{1} << m) - 1;
    for (std::uint64_t bits = 1; bits < count; ++bits) {
      std::vector<char> z(m);
      std::size_t size = 0;
      for (std::size_t j = 0; j < m; ++j) size += (z[j] = static_cast<char>((bits >> j) & 1U));
      masks.push_back(std::move(z));
      weights.push_back(shapley_kernel_weight(m, size));
    }
  } else {
    if (samples < m + 2) throw ParameterError("kernel_shap: need at least M + 2 samples");
    Vector size_cdf(m - 1);
    double acc = 0.0;
    for (std::size_t s = 1; s < m; ++s) {
      acc += static_cast<double>(m - 1) / (static_cast<double>(s) * static_cast<double>(m - s));
      size_cdf[s - 1] = acc;
    }
    for (std::size_t k = 0; k < samples; ++k) {
      const double u = rng.uniform01() * acc;
      const std::size_t s =
          1 + static_cast<std::size_t>(std::upper_bound(size_cdf.begin(), size_cdf.end(), u) -
                                       size_cdf.begin());
      std::vector<char> z(m, 0);
      for (std::size_t j : rng.sample_without_replacement(m, std::min(s, m - 1))) z[j] = 1;
      masks.push_back(std::move(z));
      weights.push_back(1.0);
    }
  }

  Matrix hybrid(masks.size(), m);
  for (std::size_t r = 0; r < masks.size(); ++r)
    for (std::size_t j = 0; j < m; ++j) hybrid(r, j) = masks[r][j] ? x[j] : b[j];
  const Vector values = value(hybrid);
  if (values.size() != masks.size()) throw ShapeError("kernel_shap: value function size mismatch");

  const std::size_t last = m - 1;
  Matrix design(masks.size(), last);
  Vector targets(masks.size());
  for (std::size_t r = 0; r < masks.size(); ++r) {
    const double z_last = masks[r][last];
    for (std::size_t j = 0; j < last; ++j) design(r, j) = masks[r][j] - z_last;
    targets[r] = values[r] - v_empty - z_last * total;
  }
  Vector phi = solve_wls(design, targets, weights);
  double sum = 0.0;
  for (double p : phi) sum += p;
  phi.push_back(total - sum);
  return phi;
}

// Value function for a model: class probability or target logit.
inline ValueFunction model_value_function(const MLPModel& model, const Target& target,
                                          ShapValue kind) {
  return [&model, target, kind](const Matrix& batch) {
    Vector out(batch.rows());
    if (kind == ShapValue::kProbability) {
      const Matrix p = model.predict_proba(batch);
      for (std::size_t r = 0; r < batch.rows(); ++r)
        out[r] = p(r, static_cast<std::size_t>(target.class_index));
    } else {
      for (std::size_t r = 0; r < batch.rows(); ++r)
        out[r] = model.target_logit(batch.row(r), target);
    }
    return out;
  };
}

template <Predictor P>
ValueFunction probability_value_function(const P& predictor, std::size_t class_index) {
  return [&predictor, class_index](const Matrix& batch) {
    const Matrix p = predictor.predict_proba(batch);
    Vector out(batch.rows());
    for (std::size_t r = 0; r < batch.rows(); ++r) out[r] = p(r, class_index);
    return out;
  };
}

inline Vector kernel_shap(const MLPModel& model, std::span<const double> x,
                          std::span<const double> b, const Target& target,
                          const AttributionConfig& config, Rng rng) {
  return kernel_shap(model_value_function(model, target, config.kshap_value), x, b,
                     config.kshap_exhaustive_threshold, config.kshap_samples, rng);
}

// Generates the baseline for x, explains the model's predicted class with the
// chosen method and averages over `config.baseline_draws` baseline draws.
// DeepSHAP under the expectation baseline uses the drawn reference rows as its
// background instead of their mean.
inline AttributionVector attribute(AttributionMethod method, const MLPModel& model,
                                   std::span<const double> x, const BaselineSpec& spec,
                                   const Dataset& ds, const AttributionConfig& config,
                                   const Rng& rng) {
  config.validate(x.size());
  const int cls = model.predict_class(x);
  const Target target = model.target_for_class(cls);

  AttributionVector result;
  result.target_class = cls;
  result.method = method;
  result.values.assign(x.size(), 0.0);
  Vector baseline_mean(x.size(), 0.0);
  std::size_t background_size = 1;

  for (std::size_t d = 0; d < config.baseline_draws; ++d) {
    const Rng draw = rng.split("baseline").split(d);
    Vector a;
    Vector used;
    const auto* expectation = std::get_if<ExpectationBaseline>(&spec);
    if (method == AttributionMethod::kDeepShap && expectation != nullptr) {
      ExpectationBaseline sized = *expectation;
      if (config.deepshap_background_size > 0) sized.sample_size = config.deepshap_background_size;
      std::vector<Vector> background;
      for (std::size_t r : expectation_sample(sized, ds, draw))
        background.push_back(ds.features.row_vector(r));
      a = deep_shap(model, x, background, target, config.deeplift_epsilon);
      used.assign(x.size(), 0.0);
      for (const auto& row : background)
        for (std::size_t j = 0; j < used.size(); ++j) used[j] += row[j];
      for (double& v : used) v /= static_cast<double>(background.size());
      background_size = background.size();
    } else {
      used = generate(spec, x, ds, draw).values;
      switch (method) {
        case AttributionMethod::kIntegratedGradients:
          a = integrated_gradients(model, x, used, target, config.ig_steps);
          break;
        case AttributionMethod::kDeepLift:
          a = deeplift_rescale(model, x, used, target, config.deeplift_epsilon);
          break;
        case AttributionMethod::kKernelShap:
          a = kernel_shap(model, x, used, target, config, rng.split("kernel_shap").split(d));
          break;
        case AttributionMethod::kDeepShap:
          a = deep_shap(model, x, {used}, target, config.deeplift_epsilon);
          break;
      }
    }
    for (std::size_t j = 0; j < a.size(); ++j) {
      result.values[j] += a[j];
      baseline_mean[j] += used[j];
    }
  }
  const double draws = static_cast<double>(config.baseline_draws);
  if (config.baseline_draws > 1) {
    for (double& v : result.values) v /= draws;
    for (double& v : baseline_mean) v /= draws;
  }
  result.baseline_used = {std::move(baseline_mean), method_name(spec)};
  result.background_size = background_size;
  return result;
}

}  // namespace tabattr
