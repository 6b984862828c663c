#pragma once

// Top-K ablation: rank features by attribution, replace the top K percent of
// each test row with noise, and track the F1 score as K grows.
//
// Noise for a masked row is drawn feature by feature in index order from a
// stream keyed by (K, row, repeat), independent of the ranking, so two curves
// that mask the same features of a row see the same noise values.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "tabattr/attribution.hpp"
#include "tabattr/data.hpp"
#include "tabattr/errors.hpp"
#include "tabattr/model.hpp"
#include "tabattr/numerics.hpp"

namespace tabattr {

enum class RankingMode { kSigned, kAbsolute };
enum class F1Scheme { kBinaryPositive, kMacro };

struct FeatureRanking {
  std::vector<std::size_t> order;
};

inline FeatureRanking rank_features(std::span<const double> attribution, RankingMode mode) {
  FeatureRanking r;
  r.order.resize(attribution.size());
  std::iota(r.order.begin(), r.order.end(), std::size_t{0});
  auto key = [&](std::size_t i) {
    return mode == RankingMode::kAbsolute ? std::abs(attribution[i]) : attribution[i];
  };
  std::stable_sort(r.order.begin(), r.order.end(),
                   [&](std::size_t a, std::size_t b) { return key(a) > key(b); });
  return r;
}

inline std::size_t masked_count(std::size_t num_features, double k_percent) {
  return static_cast<std::size_t>(
      std::ceil(static_cast<double>(num_features) * k_percent / 100.0 - 1e-9));
}

// Replaces the first ceil(M * k / 100) ranked features: continuous ones with a
// standard normal draw, categorical ones with a uniform category code.
inline Vector mask_top_k(std::span<const double> x, const FeatureRanking& ranking,
                         double k_percent, const Dataset& ds, Rng rng) {
  if (!(k_percent >= 0.0 && k_percent <= 100.0)) {
    throw ParameterError("mask_top_k: k_percent must lie in [0, 100]");
  }
  if (ranking.order.size() != x.size() || x.size() != ds.num_features()) {
    throw ShapeError("mask_top_k: ranking, observation and dataset widths differ");
  }
  Vector noise(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) {
    if (ds.kind(j) == FeatureKind::kCategorical) {
      noise[j] = static_cast<double>(rng.index(ds.category_count(j)));
    } else {
      noise[j] = rng.normal(0.0, 1.0);
    }
  }
  Vector out(x.begin(), x.end());
  const std::size_t count = masked_count(x.size(), k_percent);
  for (std::size_t p = 0; p < count; ++p) out[ranking.order[p]] = noise[ranking.order[p]];
  return out;
}

inline double f1_score(std::span<const int> predictions, std::span<const int> labels,
                       F1Scheme scheme, std::size_t num_classes = 2) {
  if (predictions.size() != labels.size()) throw ShapeError("f1_score: length mismatch");
  if (predictions.empty()) throw ParameterError("f1_score: empty input");
  auto f1_for = [&](int cls) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const bool p = predictions[i] == cls, l = labels[i] == cls;
      tp += p && l;
      fp += p && !l;
      fn += !p && l;
    }
    if (tp == 0) return 0.0;
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
    return 2.0 * precision * recall / (precision + recall);
  };
  if (scheme == F1Scheme::kBinaryPositive) return f1_for(1);
  double sum = 0.0;
  for (std::size_t c = 0; c < num_classes; ++c) sum += f1_for(static_cast<int>(c));
  return sum / static_cast<double>(num_classes);
}

inline F1Scheme default_scheme(std::size_t num_classes) {
  return num_classes == 2 ? F1Scheme::kBinaryPositive : F1Scheme::kMacro;
}

struct AblationCurve {
  std::vector<double> k_grid;
  // Mean and population standard deviation over the noise repeats.
  std::vector<double> f1_mean;
  std::vector<double> f1_std;
  std::string dataset;
  std::string attribution_method;
  std::string baseline_method;
  std::uint64_t seed = 0;
};

struct AggregateCurve {
  std::vector<double> k_grid;
  std::vector<double> mean_f1;
  std::vector<double> std_f1;
  std::size_t source_count = 0;
};

inline std::vector<double> default_k_grid() {
  return {0, 10, 20, 30, 40, 50, 60, 70, 80, 90};
}

inline void validate_k_grid(const std::vector<double>& grid) {
  if (grid.empty() || grid.front() != 0.0) {
    throw ParameterError("k_grid must start at 0");
  }
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] >= 0.0 && grid[i] <= 100.0)) throw ParameterError("k_grid values must lie in [0, 100]");
    if (i > 0 && !(grid[i] > grid[i - 1])) throw ParameterError("k_grid must be strictly increasing");
  }
}

struct AblationSettings {
  std::vector<double> k_grid = default_k_grid();
  std::size_t repeats = 10;
};

namespace detail {

// Shared protocol: ranking_for(i) gives the ranking of rows[i].
template <typename RankingFor>
AblationCurve run_ablation(const MLPModel& model, const Dataset& ds,
                           std::span<const std::size_t> rows, RankingFor&& ranking_for,
                           const AblationSettings& settings, const Rng& noise) {
  validate_k_grid(settings.k_grid);
  if (settings.repeats < 1) throw ParameterError("ablation: repeats must be >= 1");
  if (rows.empty()) throw ParameterError("ablation: no rows to evaluate");
  const F1Scheme scheme = default_scheme(ds.num_classes);
  const auto labels = ds.labels_of(rows);
  const Matrix clean = ds.subset(rows);
  const double clean_f1 = f1_score(model.predict_class(clean), labels, scheme, ds.num_classes);

  std::vector<FeatureRanking> rankings;
  rankings.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rankings.push_back(ranking_for(i));

  AblationCurve curve;
  curve.k_grid = settings.k_grid;
  curve.seed = noise.seed();
  for (std::size_t ki = 0; ki < settings.k_grid.size(); ++ki) {
    const double k = settings.k_grid[ki];
    if (masked_count(ds.num_features(), k) == 0) {
      curve.f1_mean.push_back(clean_f1);
      curve.f1_std.push_back(0.0);
      continue;
    }
    const Rng k_stream = noise.split(ki);
    std::vector<double> scores;
    for (std::size_t rep = 0; rep < settings.repeats; ++rep) {
      Matrix masked(rows.size(), ds.num_features());
      for (std::size_t i = 0; i < rows.size(); ++i) {
        const Vector m = mask_top_k(clean.row(i), rankings[i], k, ds,
                                    k_stream.split(rows[i]).split(rep));
        std::copy(m.begin(), m.end(), masked.row(i).begin());
      }
      scores.push_back(f1_score(model.predict_class(masked), labels, scheme, ds.num_classes));
    }
    double mean = 0.0;
    for (double s : scores) mean += s;
    mean /= static_cast<double>(scores.size());
    double var = 0.0;
    for (double s : scores) var += (s - mean) * (s - mean);
    curve.f1_mean.push_back(mean);
    curve.f1_std.push_back(std::sqrt(var / static_cast<double>(scores.size())));
  }
  return curve;
}

}  // namespace detail

// One attribution per evaluated row; each row is masked along its own ranking.
inline AblationCurve ablation_curve(const MLPModel& model, const Dataset& ds,
                                    std::span<const std::size_t> rows,
                                    const std::vector<AttributionVector>& attributions,
                                    RankingMode mode, const AblationSettings& settings,
                                    const Rng& noise) {
  if (attributions.size() != rows.size()) {
    throw ShapeError("ablation_curve: " + std::to_string(attributions.size()) +
                     " attributions for " + std::to_string(rows.size()) + " rows");
  }
  return detail::run_ablation(
      model, ds, rows, [&](std::size_t i) { return rank_features(attributions[i].values, mode); },
      settings, noise);
}

// Same protocol with a fresh uniformly random ranking per row.
inline AblationCurve random_control_curve(const MLPModel& model, const Dataset& ds,
                                          std::span<const std::size_t> rows,
                                          const AblationSettings& settings, const Rng& noise,
                                          const Rng& ranking) {
  return detail::run_ablation(
      model, ds, rows,
      [&](std::size_t i) {
        Rng r = ranking.split(rows[i]);
        return FeatureRanking{r.permutation(ds.num_features())};
      },
      settings, noise);
}

inline AggregateCurve aggregate_curves(const std::vector<AblationCurve>& curves) {
  if (curves.empty()) throw ParameterError("aggregate_curves: no curves");
  AggregateCurve agg;
  agg.k_grid = curves.front().k_grid;
  agg.source_count = curves.size();
  for (const auto& c : curves) {
    if (c.k_grid != agg.k_grid || c.f1_mean.size() != agg.k_grid.size()) {
      throw ParameterError("aggregate_curves: curves have mismatched k grids");
    }
  }
  const double n = static_cast<double>(curves.size());
  for (std::size_t k = 0; k < agg.k_grid.size(); ++k) {
    double mean = 0.0;
    for (const auto& c : curves) mean += c.f1_mean[k];
    mean /= n;
    double var = 0.0;
    for (const auto& c : curves) var += (c.f1_mean[k] - mean) * (c.f1_mean[k] - mean);
    agg.mean_f1.push_back(mean);
    agg.std_f1.push_back(std::sqrt(var / n));
  }
  return agg;
}

// Trapezoidal area under the F1 curve over the grid, divided by the grid span.
// Lower means the ranking destroyed performance faster.
inline double normalized_area(const std::vector<double>& k_grid, const std::vector<double>& f1) {
  if (k_grid.size() < 2) return f1.empty() ? 0.0 : f1.front();
  double area = 0.0;
  for (std::size_t i = 1; i < k_grid.size(); ++i)
    area += 0.5 * (f1[i] + f1[i - 1]) * (k_grid[i] - k_grid[i - 1]);
  return area / (k_grid.back() - k_grid.front());
}

}  // namespace tabattr
