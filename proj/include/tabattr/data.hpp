#pragma once

// CSV ingestion and preprocessing for tabular classification data.
//
// Pipeline: load_csv -> drop_high_missing -> split_train_test. The split step
// owns every statistic that has to be fit on training rows only: mean/mode
// imputation of the surviving missing cells, first-appearance category codes,
// and standardization of continuous features (population standard deviation,
// zero-variance columns keep std 1).
//
// Schema file format, one declaration per line, '#' starts a comment:
//
//   feature name=age kind=continuous range=18,96
//   feature name=sex kind=categorical categories=Female,Male
//   label name=two_year_recid
//   ignore name=id
//
// Values cannot contain whitespace. `range` is optional and given in raw
// (unstandardized) units. `categories` is optional; when present, values
// outside the set are rejected at load time.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "tabattr/errors.hpp"
#include "tabattr/numerics.hpp"

namespace tabattr {

enum class FeatureKind { kContinuous, kCategorical };

inline const char* to_string(FeatureKind k) {
  return k == FeatureKind::kContinuous ? "continuous" : "categorical";
}

struct Range {
  double lo = 0.0;
  double hi = 0.0;
  friend bool operator==(const Range&, const Range&) = default;
};

struct FeatureSpec {
  std::string name;
  FeatureKind kind = FeatureKind::kContinuous;
  std::optional<Range> range;
  std::vector<std::string> categories;
};

struct FeatureSchema {
  std::vector<FeatureSpec> features;
  std::string label;
  std::vector<std::string> ignored;

  std::size_t size() const { return features.size(); }

  bool has_categorical() const {
    return std::any_of(features.begin(), features.end(), [](const auto& f) {
      return f.kind == FeatureKind::kCategorical;
    });
  }

  void validate() const {
    if (label.empty()) throw SchemaError("schema: no label column declared");
    std::set<std::string> seen{label};
    for (const auto& f : features) {
      if (f.name.empty()) throw SchemaError("schema: feature with empty name");
      if (!seen.insert(f.name).second) {
        throw SchemaError("schema: duplicate column name '" + f.name + "'");
      }
      if (f.range && !(f.range->lo <= f.range->hi)) {
        throw SchemaError("schema: feature '" + f.name + "' has lo > hi");
      }
      if (f.kind == FeatureKind::kCategorical && f.range) {
        throw SchemaError("schema: categorical feature '" + f.name +
                          "' cannot declare a range");
      }
    }
    for (const auto& name : ignored) {
      if (!seen.insert(name).second) {
        throw SchemaError("schema: duplicate column name '" + name + "'");
      }
    }
  }
};

namespace detail {

inline std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::optional<double> parse_double(const std::string& text) {
  const std::string s = trim(text);
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const char* first = s.data();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    return std::nullopt;
  }
  return v;
}

// RFC 4180 style record splitting: quoted fields, doubled quotes inside them.
// Returns false at end of input.
inline bool read_csv_record(std::istream& in, std::vector<std::string>& fields,
                            std::size_t& line_no) {
  fields.clear();
  std::string line;
  if (!std::getline(in, line)) return false;
  ++line_no;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0;; ++i) {
    if (i == line.size()) {
      if (quoted) {
        std::string next;
        if (!std::getline(in, next)) {
          throw IngestionError("line " + std::to_string(line_no) +
                               ": unterminated quoted field");
        }
        ++line_no;
        field.push_back('\n');
        line = std::move(next);
        i = static_cast<std::size_t>(-1);
        continue;
      }
      break;
    }
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c != '\r') {
      field.push_back(c);
    }
  }
  fields.push_back(std::move(field));
  return true;
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace detail

// Full-precision decimal rendering; round-trips every double.
inline std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline FeatureSchema parse_schema(std::istream& in) {
  FeatureSchema schema;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream tokens(line);
    std::string directive;
    if (!(tokens >> directive)) continue;
    std::map<std::string, std::string> kv;
    std::string tok;
    while (tokens >> tok) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos || eq == 0) {
        throw SchemaError("schema line " + std::to_string(line_no) +
                          ": expected key=value, got '" + tok + "'");
      }
      kv[tok.substr(0, eq)] = tok.substr(eq + 1);
    }
    auto require = [&](const std::string& key) {
      auto it = kv.find(key);
      if (it == kv.end() || it->second.empty()) {
        throw SchemaError("schema line " + std::to_string(line_no) +
                          ": missing '" + key + "'");
      }
      return it->second;
    };
    if (directive == "label") {
      if (!schema.label.empty()) {
        throw SchemaError("schema line " + std::to_string(line_no) +
                          ": second label declaration");
      }
      schema.label = require("name");
    } else if (directive == "ignore") {
      schema.ignored.push_back(require("name"));
    } else if (directive == "feature") {
      FeatureSpec f;
      f.name = require("name");
      const std::string kind = require("kind");
      if (kind == "continuous") {
        f.kind = FeatureKind::kContinuous;
      } else if (kind == "categorical") {
        f.kind = FeatureKind::kCategorical;
      } else {
        throw SchemaError("schema line " + std::to_string(line_no) +
                          ": unknown kind '" + kind + "'");
      }
      if (auto it = kv.find("range"); it != kv.end()) {
        auto parts = detail::split_on(it->second, ',');
        std::optional<double> lo, hi;
        if (parts.size() == 2) {
          lo = detail::parse_double(parts[0]);
          hi = detail::parse_double(parts[1]);
        }
        if (!lo || !hi) {
          throw SchemaError("schema line " + std::to_string(line_no) +
                            ": range must be 'lo,hi'");
        }
        f.range = Range{*lo, *hi};
      }
      if (auto it = kv.find("categories"); it != kv.end()) {
        f.categories = detail::split_on(it->second, ',');
        std::set<std::string> uniq(f.categories.begin(), f.categories.end());
        if (uniq.size() != f.categories.size() || uniq.count("")) {
          throw SchemaError("schema line " + std::to_string(line_no) +
                            ": categories must be unique and non-empty");
        }
      }
      schema.features.push_back(std::move(f));
    } else {
      throw SchemaError("schema line " + std::to_string(line_no) +
                        ": unknown directive '" + directive + "'");
    }
  }
  schema.validate();
  return schema;
}

inline FeatureSchema load_schema(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open schema file '" + path + "'");
  return parse_schema(in);
}

inline void write_schema(const FeatureSchema& schema, std::ostream& out) {
  for (const auto& f : schema.features) {
    out << "feature name=" << f.name << " kind=" << to_string(f.kind);
    if (f.range) out << " range=" << format_real(f.range->lo) << "," << format_real(f.range->hi);
    if (!f.categories.empty()) {
      out << " categories=";
      for (std::size_t i = 0; i < f.categories.size(); ++i)
        out << (i ? "," : "") << f.categories[i];
    }
    out << "\n";
  }
  out << "label name=" << schema.label << "\n";
  for (const auto& name : schema.ignored) out << "ignore name=" << name << "\n";
}

// One column of a raw table. Continuous columns use `numeric`; categorical
// columns keep their text until encoded, after which `numeric` holds codes and
// `categories[code]` the original value.
struct RawColumn {
  std::vector<double> numeric;
  std::vector<std::string> text;
  std::vector<bool> missing;
  std::vector<std::string> categories;

  std::size_t missing_count() const {
    return static_cast<std::size_t>(std::count(missing.begin(), missing.end(), true));
  }
};

struct RawTable {
  FeatureSchema schema;
  std::vector<RawColumn> columns;
  std::vector<std::string> labels;

  std::size_t rows() const { return labels.size(); }
  std::size_t cols() const { return columns.size(); }
};

inline RawTable read_csv(std::istream& in, const FeatureSchema& schema,
                         const std::string& missing_token = "NA") {
  schema.validate();
  std::vector<std::string> header;
  std::size_t line_no = 0;
  if (!detail::read_csv_record(in, header, line_no)) {
    throw SchemaError("csv: empty input, expected a header row");
  }
  for (auto& h : header) h = detail::trim(h);
  if (!header.empty() && header[0].rfind("\xEF\xBB\xBF", 0) == 0) header[0].erase(0, 3);

  std::unordered_map<std::string, std::size_t> position;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (!position.emplace(header[i], i).second) {
      throw SchemaError("csv: duplicate header column '" + header[i] + "'");
    }
  }
  std::set<std::string> known{schema.label};
  known.insert(schema.ignored.begin(), schema.ignored.end());
  for (const auto& f : schema.features) known.insert(f.name);
  for (const auto& h : header) {
    if (!known.count(h)) {
      throw SchemaError("csv: header column '" + h + "' is not in the schema");
    }
  }
  auto column_of = [&](const std::string& name) {
    auto it = position.find(name);
    if (it == position.end()) {
      throw SchemaError("csv: schema column '" + name + "' missing from header");
    }
    return it->second;
  };
  const std::size_t label_pos = column_of(schema.label);
  std::vector<std::size_t> feature_pos;
  for (const auto& f : schema.features) feature_pos.push_back(column_of(f.name));
  for (const auto& name : schema.ignored) column_of(name);

  std::vector<std::set<std::string>> allowed(schema.size());
  for (std::size_t j = 0; j < schema.size(); ++j)
    allowed[j].insert(schema.features[j].categories.begin(),
                      schema.features[j].categories.end());

  RawTable table;
  table.schema = schema;
  table.columns.resize(schema.size());
  std::vector<std::string> fields;
  std::size_t data_row = 0;
  while (detail::read_csv_record(in, fields, line_no)) {
    if (fields.size() == 1 && detail::trim(fields[0]).empty()) continue;
    ++data_row;
    if (fields.size() != header.size()) {
      throw IngestionError("csv row " + std::to_string(data_row) + " (line " +
                           std::to_string(line_no) + "): expected " +
                           std::to_string(header.size()) + " fields, got " +
                           std::to_string(fields.size()));
    }
    const std::string label = detail::trim(fields[label_pos]);
    if (label.empty() || label == missing_token) {
      throw IngestionError("csv row " + std::to_string(data_row) +
                           ", column '" + schema.label + "': missing label");
    }
    table.labels.push_back(label);
    for (std::size_t j = 0; j < schema.size(); ++j) {
      const auto& spec = schema.features[j];
      auto& col = table.columns[j];
      const std::string cell = detail::trim(fields[feature_pos[j]]);
      const bool is_missing = cell.empty() || cell == missing_token;
      col.missing.push_back(is_missing);
      if (spec.kind == FeatureKind::kContinuous) {
        double v = 0.0;
        if (!is_missing) {
          auto parsed = detail::parse_double(cell);
          if (!parsed) {
            throw IngestionError("csv row " + std::to_string(data_row) +
                                 ", column '" + spec.name +
                                 "': cannot parse '" + cell + "' as a number");
          }
          v = *parsed;
        }
        col.numeric.push_back(v);
      } else {
        if (!is_missing && !allowed[j].empty() && !allowed[j].count(cell)) {
          throw IngestionError("csv row " + std::to_string(data_row) +
                               ", column '" + spec.name + "': value '" + cell +
                               "' is not a declared category");
        }
        col.text.push_back(is_missing ? std::string{} : cell);
      }
    }
  }
  if (table.rows() == 0) throw DataError("csv: no data rows");
  return table;
}

inline RawTable load_csv(const std::string& path, const FeatureSchema& schema,
                         const std::string& missing_token = "NA") {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open csv file '" + path + "'");
  return read_csv(in, schema, missing_token);
}

struct MissingnessEntry {
  std::string feature;
  std::size_t missing = 0;
  std::size_t total = 0;
  bool dropped = false;
};

struct MissingnessReport {
  std::size_t threshold = 0;
  std::vector<MissingnessEntry> entries;

  std::size_t dropped_count() const {
    return static_cast<std::size_t>(std::count_if(
        entries.begin(), entries.end(), [](const auto& e) { return e.dropped; }));
  }
};

// Removes every feature whose missing count exceeds `threshold`.
inline std::pair<RawTable, MissingnessReport> drop_high_missing(
    const RawTable& table, std::size_t threshold) {
  MissingnessReport report;
  report.threshold = threshold;
  RawTable out;
  out.labels = table.labels;
  out.schema.label = table.schema.label;
  out.schema.ignored = table.schema.ignored;
  for (std::size_t j = 0; j < table.cols(); ++j) {
    const std::size_t missing = table.columns[j].missing_count();
    const bool drop = missing > threshold;
    report.entries.push_back(
        {table.schema.features[j].name, missing, table.rows(), drop});
    if (!drop) {
      out.schema.features.push_back(table.schema.features[j]);
      out.columns.push_back(table.columns[j]);
    } else {
      out.schema.ignored.push_back(table.schema.features[j].name);
    }
  }
  if (out.cols() == 0) {
    throw DataError("drop_high_missing: every feature exceeds " +
                    std::to_string(threshold) + " missing values");
  }
  return {std::move(out), std::move(report)};
}

// Maps category strings to integer codes in first-appearance order over the
// rows it was fit on.
class CategoryEncoder {
 public:
  CategoryEncoder() = default;

  static CategoryEncoder Fit(const std::vector<std::string>& values,
                             std::span<const std::size_t> rows,
                             const std::vector<bool>* missing = nullptr) {
    CategoryEncoder enc;
    for (std::size_t r : rows) {
      if (missing && (*missing)[r]) continue;
      if (enc.codes_.emplace(values[r], enc.categories_.size()).second) {
        enc.categories_.push_back(values[r]);
      }
    }
    return enc;
  }

  std::size_t transform(const std::string& value) const {
    auto it = codes_.find(value);
    if (it == codes_.end()) {
      throw EncodingError("unseen category '" + value + "'");
    }
    return it->second;
  }

  const std::vector<std::string>& categories() const { return categories_; }
  std::size_t size() const { return categories_.size(); }

 private:
  std::unordered_map<std::string, std::size_t> codes_;
  std::vector<std::string> categories_;
};

namespace detail {

inline std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> r(n);
  std::iota(r.begin(), r.end(), std::size_t{0});
  return r;
}

}  // namespace detail

// Replaces every categorical column's text by codes fitted on `fit_rows`.
// Missing categorical cells must have been imputed beforehand.
inline RawTable encode_categoricals(const RawTable& table,
                                    std::span<const std::size_t> fit_rows) {
  RawTable out = table;
  for (std::size_t j = 0; j < out.cols(); ++j) {
    const auto& spec = out.schema.features[j];
    if (spec.kind != FeatureKind::kCategorical) continue;
    auto& col = out.columns[j];
    const auto enc = CategoryEncoder::Fit(col.text, fit_rows, &col.missing);
    if (enc.size() == 0) {
      throw EncodingError("feature '" + spec.name +
                          "' has no observed category on the fitting rows");
    }
    col.numeric.assign(out.rows(), 0.0);
    for (std::size_t r = 0; r < out.rows(); ++r) {
      try {
        col.numeric[r] = static_cast<double>(enc.transform(col.text[r]));
      } catch (const EncodingError& e) {
        throw EncodingError("feature '" + spec.name + "', row " +
                            std::to_string(r + 1) + ": " + e.what());
      }
    }
    col.categories = enc.categories();
  }
  return out;
}

inline RawTable encode_categoricals(const RawTable& table) {
  const auto rows = detail::all_rows(table.rows());
  return encode_categoricals(table, rows);
}

struct PreprocessStats {
  // Per feature; categorical features carry mean 0 and std 1 (not standardized).
  Vector mean;
  Vector std;
  // Per feature; empty for continuous features.
  std::vector<std::vector<std::string>> categories;
  std::vector<std::string> class_names;
};

struct Dataset {
  Matrix features;
  std::vector<int> labels;
  std::size_t num_classes = 0;
  FeatureSchema schema;
  // Per-feature valid range in standardized units; for categorical features
  // [0, k-1].
  std::vector<Range> ranges;
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  PreprocessStats stats;
  MissingnessReport missingness;

  std::size_t rows() const { return features.rows(); }
  std::size_t num_features() const { return features.cols(); }

  FeatureKind kind(std::size_t j) const { return schema.features[j].kind; }
  std::size_t category_count(std::size_t j) const {
    return stats.categories[j].size();
  }

  Matrix subset(std::span<const std::size_t> rows) const {
    Matrix m(rows.size(), num_features());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      auto src = features.row(rows[i]);
      std::copy(src.begin(), src.end(), m.row(i).begin());
    }
    return m;
  }

  std::vector<int> labels_of(std::span<const std::size_t> rows) const {
    std::vector<int> out;
    out.reserve(rows.size());
    for (std::size_t r : rows) out.push_back(labels[r]);
    return out;
  }
};

namespace detail {

// Class names sorted numerically when every label is an integer, else
// lexicographically.
inline std::vector<std::string> class_order(const std::vector<std::string>& labels) {
  std::set<std::string> uniq(labels.begin(), labels.end());
  std::vector<std::string> names(uniq.begin(), uniq.end());
  bool all_int = true;
  for (const auto& n : names) {
    long long v;
    auto [p, ec] = std::from_chars(n.data(), n.data() + n.size(), v);
    if (ec != std::errc() || p != n.data() + n.size()) {
      all_int = false;
      break;
    }
  }
  if (all_int) {
    std::sort(names.begin(), names.end(), [](const auto& a, const auto& b) {
      return std::stoll(a) < std::stoll(b);
    });
  }
  return names;
}

}  // namespace detail

// Shuffled split with floor(n * train_fraction) training rows. Imputation,
// category codes and standardization statistics all come from training rows.
inline Dataset split_train_test(const RawTable& table, double train_fraction,
                                Rng rng) {
  const std::size_t n = table.rows();
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ParameterError("split_train_test: train_fraction must lie in (0, 1)");
  }
  if (n < 2) throw ParameterError("split_train_test: need at least 2 rows");
  const auto n_train = static_cast<std::size_t>(
      std::floor(static_cast<double>(n) * train_fraction));
  if (n_train == 0 || n_train == n) {
    throw ParameterError("split_train_test: fraction " +
                         std::to_string(train_fraction) + " leaves a split empty");
  }
  if (table.cols() == 0) throw DataError("split_train_test: no features");

  Dataset ds;
  ds.schema = table.schema;
  const auto perm = rng.permutation(n);
  ds.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  ds.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());

  // Impute.
  RawTable work = table;
  for (std::size_t j = 0; j < work.cols(); ++j) {
    auto& col = work.columns[j];
    if (col.missing_count() == 0) continue;
    const auto& spec = work.schema.features[j];
    if (spec.kind == FeatureKind::kContinuous) {
      double sum = 0.0;
      std::size_t count = 0;
      for (std::size_t r : ds.train)
        if (!col.missing[r]) sum += col.numeric[r], ++count;
      if (count == 0) {
        throw DataError("feature '" + spec.name + "' is missing on every training row");
      }
      const double fill = sum / static_cast<double>(count);
      for (std::size_t r = 0; r < n; ++r)
        if (col.missing[r]) col.numeric[r] = fill;
    } else {
      std::unordered_map<std::string, std::size_t> counts;
      std::string mode;
      std::size_t best = 0;
      for (std::size_t r : ds.train) {
        if (col.missing[r]) continue;
        const std::size_t c = ++counts[col.text[r]];
        if (c > best) best = c, mode = col.text[r];
      }
      if (best == 0) {
        throw DataError("feature '" + spec.name + "' is missing on every training row");
      }
      for (std::size_t r = 0; r < n; ++r)
        if (col.missing[r]) col.text[r] = mode;
    }
    std::fill(col.missing.begin(), col.missing.end(), false);
  }

  work = encode_categoricals(work, ds.train);

  const std::size_t m = work.cols();
  ds.features = Matrix(n, m);
  ds.stats.mean.assign(m, 0.0);
  ds.stats.std.assign(m, 1.0);
  ds.stats.categories.resize(m);
  ds.ranges.resize(m);
  for (std::size_t j = 0; j < m; ++j) {
    const auto& col = work.columns[j];
    const auto& spec = work.schema.features[j];
    if (spec.kind == FeatureKind::kContinuous) {
      double mean = 0.0;
      for (std::size_t r : ds.train) mean += col.numeric[r];
      mean /= static_cast<double>(n_train);
      double var = 0.0;
      for (std::size_t r : ds.train) var += (col.numeric[r] - mean) * (col.numeric[r] - mean);
      var /= static_cast<double>(n_train);
      double sd = std::sqrt(var);
      if (!(sd > 0.0)) sd = 1.0;
      ds.stats.mean[j] = mean;
      ds.stats.std[j] = sd;
      for (std::size_t r = 0; r < n; ++r) ds.features(r, j) = (col.numeric[r] - mean) / sd;
    } else {
      ds.stats.categories[j] = col.categories;
      for (std::size_t r = 0; r < n; ++r) ds.features(r, j) = col.numeric[r];
    }
    if (spec.kind == FeatureKind::kCategorical) {
      ds.ranges[j] = {0.0, static_cast<double>(col.categories.size() - 1)};
    } else if (spec.range) {
      ds.ranges[j] = {(spec.range->lo - ds.stats.mean[j]) / ds.stats.std[j],
                      (spec.range->hi - ds.stats.mean[j]) / ds.stats.std[j]};
    } else {
      double lo = ds.features(ds.train.front(), j), hi = lo;
      for (std::size_t r : ds.train) {
        lo = std::min(lo, ds.features(r, j));
        hi = std::max(hi, ds.features(r, j));
      }
      ds.ranges[j] = {lo, hi};
    }
  }

  ds.stats.class_names = detail::class_order(table.labels);
  std::unordered_map<std::string, int> class_index;
  for (std::size_t c = 0; c < ds.stats.class_names.size(); ++c)
    class_index[ds.stats.class_names[c]] = static_cast<int>(c);
  ds.labels.reserve(n);
  for (const auto& l : table.labels) ds.labels.push_back(class_index.at(l));
  ds.num_classes = ds.stats.class_names.size();
  if (ds.num_classes < 2) throw DataError("dataset has fewer than two classes");
  return ds;
}

// n rows from the test split with per-class counts allocated by largest
// remainder (ties toward the lower class index). Returned in ascending row
// order.
inline std::vector<std::size_t> stratified_sample(const Dataset& ds, std::size_t n,
                                                  Rng rng) {
  if (n > ds.test.size()) {
    throw ParameterError("stratified_sample: requested " + std::to_string(n) +
                         " rows but the test split has " +
                         std::to_string(ds.test.size()));
  }
  std::vector<std::vector<std::size_t>> by_class(ds.num_classes);
  for (std::size_t r : ds.test) by_class[static_cast<std::size_t>(ds.labels[r])].push_back(r);

  const double total = static_cast<double>(ds.test.size());
  std::vector<std::size_t> quota(ds.num_classes);
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < ds.num_classes; ++c) {
    const double exact = static_cast<double>(n) * static_cast<double>(by_class[c].size()) / total;
    quota[c] = static_cast<std::size_t>(std::floor(exact));
    assigned += quota[c];
    remainders.emplace_back(exact - std::floor(exact), c);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < n; ++i) {
    const std::size_t c = remainders[i % remainders.size()].second;
    if (quota[c] < by_class[c].size()) ++quota[c], ++assigned;
  }

  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < ds.num_classes; ++c) {
    auto pick = rng.split(c).sample_without_replacement(by_class[c].size(), quota[c]);
    for (std::size_t i : pick) out.push_back(by_class[c][i]);
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Features i.i.d. standard normal; label 1 iff the informative features sum
// to a positive value.
inline RawTable synth_raw_table(std::size_t n, std::size_t num_features,
                                const std::vector<std::size_t>& informative, Rng rng) {
  if (informative.empty()) throw ParameterError("synth: informative set is empty");
  for (std::size_t j : informative) {
    if (j >= num_features) throw ParameterError("synth: informative index out of range");
  }
  RawTable t;
  for (std::size_t j = 0; j < num_features; ++j) {
    t.schema.features.push_back({"x" + std::to_string(j), FeatureKind::kContinuous, {}, {}});
  }
  t.schema.label = "y";
  t.columns.resize(num_features);
  for (auto& c : t.columns) {
    c.numeric.reserve(n);
    c.missing.assign(n, false);
  }
  for (std::size_t r = 0; r < n; ++r) {
    double signal = 0.0;
    for (std::size_t j = 0; j < num_features; ++j) {
      const double v = rng.normal(0.0, 1.0);
      t.columns[j].numeric.push_back(v);
    }
    for (std::size_t j : informative) signal += t.columns[j].numeric.back();
    t.labels.push_back(signal > 0.0 ? "1" : "0");
  }
  return t;
}

inline Dataset synth_dataset(std::size_t n, std::size_t num_features,
                             const std::vector<std::size_t>& informative, Rng rng,
                             double train_fraction = 0.8) {
  auto raw = synth_raw_table(n, num_features, informative, rng.split("features"));
  return split_train_test(raw, train_fraction, rng.split("split"));
}

// Writes the preprocessed feature matrix (categorical features as their
// original category text) plus the label column.
inline void write_csv(const Dataset& ds, std::ostream& out) {
  for (const auto& f : ds.schema.features) out << detail::csv_escape(f.name) << ",";
  out << detail::csv_escape(ds.schema.label) << "\n";
  for (std::size_t r = 0; r < ds.rows(); ++r) {
    for (std::size_t j = 0; j < ds.num_features(); ++j) {
      if (ds.kind(j) == FeatureKind::kCategorical) {
        out << detail::csv_escape(
            ds.stats.categories[j][static_cast<std::size_t>(ds.features(r, j))]);
      } else {
        out << format_real(ds.features(r, j));
      }
      out << ",";
    }
    out << detail::csv_escape(ds.stats.class_names[static_cast<std::size_t>(ds.labels[r])])
        << "\n";
  }
}

inline void write_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  write_csv(ds, out);
}

}  // namespace tabattr
