#pragma once

// Experiment driver: a JSON config enumerates datasets, model settings,
// baselines, attribution methods and the ablation protocol; `run_experiment`
// evaluates every (dataset, method, baseline) cell and writes
//
//   <out>/datasets/<dataset>/model.txt
//   <out>/datasets/<dataset>/attributions/<method>__<baseline>.csv
//   <out>/datasets/<dataset>/curves/<method>__<baseline>.csv
//   <out>/datasets/<dataset>/curves/random_control.csv
//   <out>/aggregate.csv                     mean/std over datasets
//   <out>/aggregate_random_control.csv
//   <out>/auc_report.csv                    area under each curve vs control
//   <out>/manifest.json                     config, seeds, timings, checksums
//
// Every random stream hangs off the master seed by label (dataset name, stage,
// method, canonical baseline description, row), so adding a baseline or a
// method leaves the other cells' numbers unchanged.

#include <openssl/evp.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "tabattr/ablation.hpp"
#include "tabattr/attribution.hpp"
#include "tabattr/baselines.hpp"
#include "tabattr/data.hpp"
#include "tabattr/errors.hpp"
#include "tabattr/model.hpp"
#include "tabattr/numerics.hpp"

namespace tabattr {

inline constexpr const char* kVersion = "0.1.0";

struct SyntheticSource {
  std::size_t rows = 2000;
  std::size_t features = 10;
  std::vector<std::size_t> informative = {0, 1};
};

struct DatasetConfig {
  std::string name;
  std::string csv_path;
  std::string schema_path;
  std::optional<SyntheticSource> synthetic;
  std::string missing_token = "NA";
  std::optional<std::size_t> missing_threshold;
  double train_fraction = 0.8;
  // Random row subsample taken before splitting; 0 keeps every row.
  std::size_t subsample_rows = 0;
  // Stratified sample of the test split to explain and ablate; 0 keeps the
  // whole test split.
  std::size_t eval_rows = 0;
};

struct NamedBaseline {
  std::string name;
  BaselineSpec spec;
};

struct ExperimentConfig {
  std::vector<DatasetConfig> datasets;
  TrainConfig model;
  std::vector<NamedBaseline> baselines;
  std::vector<AttributionMethod> methods;
  AttributionConfig attribution;
  AblationSettings ablation;
  RankingMode ranking = RankingMode::kSigned;
  std::uint64_t master_seed = 0;
  std::string output_dir = "run";
  // KernelSHAP cells on datasets wider than this run on a stratified
  // subsample of kshap_subsample_rows evaluation rows.
  std::size_t kshap_max_features = 60;
  std::size_t kshap_subsample_rows = 400;
  nlohmann::json source;
};

namespace detail {

using nlohmann::json;

inline void check_keys(const json& obj, const std::string& where,
                       std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : obj.items()) {
    if (!ok.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <typename T>
T get_or(const json& obj, const char* key, T fallback, const std::string& where) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + ": key '" + key + "' has the wrong type");
  }
}

inline std::size_t get_count(const json& obj, const char* key, std::size_t fallback,
                             const std::string& where) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw ConfigError(where + ": key '" + key + "' must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

inline std::string resolve(const std::filesystem::path& base, const std::string& p) {
  if (p.empty()) return p;
  std::filesystem::path path(p);
  return path.is_absolute() ? p : (base / path).lexically_normal().string();
}

inline BaselineSpec parse_baseline(const json& j, const std::string& where) {
  const std::string method = get_or<std::string>(j, "method", "", where);
  if (method == "constant") {
    check_keys(j, where, {"method", "name", "value"});
    ConstantBaseline b;
    if (j.contains("value")) {
      const auto& v = j.at("value");
      if (v.is_number()) {
        b.fill = v.get<double>();
      } else if (v.is_array()) {
        b.values = v.get<std::vector<double>>();
      } else {
        throw ConfigError(where + ": 'value' must be a number or an array");
      }
    }
    return b;
  }
  if (method == "max_distance") {
    check_keys(j, where, {"method", "name"});
    return MaxDistanceBaseline{};
  }
  if (method == "blurred") {
    check_keys(j, where, {"method", "name", "sigma", "radius", "permutations"});
    BlurredBaseline b;
    b.sigma = get_or<double>(j, "sigma", b.sigma, where);
    b.radius = get_count(j, "radius", b.radius, where);
    b.permutations = get_count(j, "permutations", b.permutations, where);
    return b;
  }
  if (method == "gaussian") {
    check_keys(j, where, {"method", "name", "sigma"});
    GaussianBaseline b;
    b.sigma = get_or<double>(j, "sigma", b.sigma, where);
    return b;
  }
  if (method == "uniform") {
    check_keys(j, where, {"method", "name", "ranges"});
    UniformBaseline b;
    if (j.contains("ranges")) {
      for (const auto& r : j.at("ranges")) {
        if (!r.is_array() || r.size() != 2) throw ConfigError(where + ": ranges must be [lo, hi] pairs");
        b.ranges.push_back({r[0].get<double>(), r[1].get<double>()});
      }
    }
    return b;
  }
  if (method == "expectation") {
    check_keys(j, where, {"method", "name", "sample_size"});
    ExpectationBaseline b;
    b.sample_size = get_count(j, "sample_size", b.sample_size, where);
    return b;
  }
  throw ConfigError(where + ": unknown baseline method '" + method + "'");
}

}  // namespace detail

// Structural parse; paths are resolved against `base_dir` but not checked.
inline ExperimentConfig parse_config(const nlohmann::json& j,
                                     const std::filesystem::path& base_dir) {
  using detail::check_keys;
  using detail::get_count;
  using detail::get_or;
  ExperimentConfig cfg;
  cfg.source = j;
  check_keys(j, "config", {"master_seed", "output_dir", "datasets", "model", "baselines",
                           "attribution", "ablation"});
  if (j.contains("master_seed")) {
    const auto& seed = j.at("master_seed");
    if (!seed.is_number_integer() || (!seed.is_number_unsigned() && seed.get<std::int64_t>() < 0))
      throw ConfigError("config: master_seed must be a non-negative integer");
    cfg.master_seed = j.at("master_seed").get<std::uint64_t>();
  }
  cfg.output_dir = detail::resolve(base_dir, get_or<std::string>(j, "output_dir", "run", "config"));

  if (!j.contains("datasets") || !j.at("datasets").is_array() || j.at("datasets").empty())
    throw ConfigError("config: 'datasets' must be a non-empty array");
  std::set<std::string> names;
  for (std::size_t i = 0; i < j.at("datasets").size(); ++i) {
    const auto& d = j.at("datasets")[i];
    const std::string where = "datasets[" + std::to_string(i) + "]";
    check_keys(d, where, {"name", "csv", "schema", "synthetic", "missing_token",
                          "missing_threshold", "train_fraction", "subsample_rows", "eval_rows"});
    DatasetConfig dc;
    dc.name = get_or<std::string>(d, "name", "", where);
    if (dc.name.empty() || dc.name.find_first_of("/\\ ") != std::string::npos)
      throw ConfigError(where + ": 'name' must be non-empty without spaces or slashes");
    if (!names.insert(dc.name).second) throw ConfigError(where + ": duplicate dataset name");
    if (d.contains("synthetic")) {
      const auto& s = d.at("synthetic");
      check_keys(s, where + ".synthetic", {"rows", "features", "informative"});
      SyntheticSource src;
      src.rows = get_count(s, "rows", src.rows, where);
      src.features = get_count(s, "features", src.features, where);
      src.informative = get_or<std::vector<std::size_t>>(s, "informative", src.informative, where);
      dc.synthetic = src;
      if (d.contains("csv") || d.contains("schema"))
        throw ConfigError(where + ": give either 'synthetic' or 'csv'+'schema', not both");
    } else {
      dc.csv_path = detail::resolve(base_dir, get_or<std::string>(d, "csv", "", where));
      dc.schema_path = detail::resolve(base_dir, get_or<std::string>(d, "schema", "", where));
      if (dc.csv_path.empty() || dc.schema_path.empty())
        throw ConfigError(where + ": needs 'csv' and 'schema' (or 'synthetic')");
    }
    dc.missing_token = get_or<std::string>(d, "missing_token", dc.missing_token, where);
    if (d.contains("missing_threshold"))
      dc.missing_threshold = get_count(d, "missing_threshold", 0, where);
    dc.train_fraction = get_or<double>(d, "train_fraction", dc.train_fraction, where);
    if (!(dc.train_fraction > 0.0 && dc.train_fraction < 1.0))
      throw ConfigError(where + ": train_fraction must lie in (0, 1)");
    dc.subsample_rows = get_count(d, "subsample_rows", 0, where);
    dc.eval_rows = get_count(d, "eval_rows", 0, where);
    cfg.datasets.push_back(std::move(dc));
  }

  if (j.contains("model")) {
    const auto& m = j.at("model");
    check_keys(m, "model", {"hidden_units", "learning_rate", "epochs", "batch_size"});
    cfg.model.hidden_units = get_count(m, "hidden_units", cfg.model.hidden_units, "model");
    cfg.model.learning_rate = get_or<double>(m, "learning_rate", cfg.model.learning_rate, "model");
    cfg.model.epochs = get_count(m, "epochs", cfg.model.epochs, "model");
    cfg.model.batch_size = get_count(m, "batch_size", cfg.model.batch_size, "model");
    try {
      cfg.model.validate();
    } catch (const ParameterError& e) {
      throw ConfigError(e.what());
    }
  }

  if (!j.contains("baselines") || !j.at("baselines").is_array() || j.at("baselines").empty())
    throw ConfigError("config: 'baselines' must be a non-empty array");
  std::set<std::string> baseline_names;
  for (std::size_t i = 0; i < j.at("baselines").size(); ++i) {
    const auto& b = j.at("baselines")[i];
    const std::string where = "baselines[" + std::to_string(i) + "]";
    if (!b.is_object()) throw ConfigError(where + ": expected an object");
    NamedBaseline nb{"", detail::parse_baseline(b, where)};
    nb.name = get_or<std::string>(b, "name", method_name(nb.spec), where);
    if (nb.name.empty() || nb.name.find_first_of("/\\ ") != std::string::npos ||
        nb.name.find("__") != std::string::npos || nb.name == "random_control")
      throw ConfigError(where + ": invalid baseline name '" + nb.name + "'");
    if (!baseline_names.insert(nb.name).second)
      throw ConfigError(where + ": duplicate baseline name '" + nb.name +
                        "' (set 'name' to tell them apart)");
    try {
      validate(nb.spec);
    } catch (const ParameterError& e) {
      throw ConfigError(where + ": " + e.what());
    }
    cfg.baselines.push_back(std::move(nb));
  }

  if (!j.contains("attribution")) throw ConfigError("config: missing 'attribution'");
  const auto& a = j.at("attribution");
  check_keys(a, "attribution", {"methods", "ig_steps", "kshap_samples", "kshap_exhaustive_threshold",
                                "kshap_value", "deepshap_background_size", "baseline_draws",
                                "kshap_max_features", "kshap_subsample_rows"});
  const auto methods = get_or<std::vector<std::string>>(a, "methods", {}, "attribution");
  if (methods.empty()) throw ConfigError("attribution: 'methods' must be a non-empty array");
  for (const auto& m : methods) {
    auto parsed = parse_attribution_method(m);
    if (!parsed) throw ConfigError("attribution: unknown method '" + m + "'");
    if (std::find(cfg.methods.begin(), cfg.methods.end(), *parsed) != cfg.methods.end())
      throw ConfigError("attribution: duplicate method '" + m + "'");
    cfg.methods.push_back(*parsed);
  }
  auto& ac = cfg.attribution;
  ac.ig_steps = get_count(a, "ig_steps", ac.ig_steps, "attribution");
  ac.kshap_samples = get_count(a, "kshap_samples", ac.kshap_samples, "attribution");
  ac.kshap_exhaustive_threshold =
      get_count(a, "kshap_exhaustive_threshold", ac.kshap_exhaustive_threshold, "attribution");
  const auto value = get_or<std::string>(a, "kshap_value", "probability", "attribution");
  if (value == "probability") {
    ac.kshap_value = ShapValue::kProbability;
  } else if (value == "logit") {
    ac.kshap_value = ShapValue::kLogit;
  } else {
    throw ConfigError("attribution: kshap_value must be 'probability' or 'logit'");
  }
  ac.deepshap_background_size =
      get_count(a, "deepshap_background_size", ac.deepshap_background_size, "attribution");
  ac.baseline_draws = get_count(a, "baseline_draws", ac.baseline_draws, "attribution");
  if (ac.ig_steps < 1 || ac.baseline_draws < 1 || ac.kshap_exhaustive_threshold < 1)
    throw ConfigError("attribution: ig_steps, baseline_draws and kshap_exhaustive_threshold must be >= 1");
  cfg.kshap_max_features = get_count(a, "kshap_max_features", cfg.kshap_max_features, "attribution");
  cfg.kshap_subsample_rows =
      get_count(a, "kshap_subsample_rows", cfg.kshap_subsample_rows, "attribution");

  if (j.contains("ablation")) {
    const auto& ab = j.at("ablation");
    check_keys(ab, "ablation", {"k_grid", "ranking", "repeats"});
    cfg.ablation.k_grid = get_or<std::vector<double>>(ab, "k_grid", cfg.ablation.k_grid, "ablation");
    cfg.ablation.repeats = get_count(ab, "repeats", cfg.ablation.repeats, "ablation");
    const auto ranking = get_or<std::string>(ab, "ranking", "signed", "ablation");
    if (ranking == "signed") {
      cfg.ranking = RankingMode::kSigned;
    } else if (ranking == "absolute") {
      cfg.ranking = RankingMode::kAbsolute;
    } else {
      throw ConfigError("ablation: ranking must be 'signed' or 'absolute'");
    }
  }
  try {
    validate_k_grid(cfg.ablation.k_grid);
  } catch (const ParameterError& e) {
    throw ConfigError(std::string("ablation: ") + e.what());
  }
  if (cfg.ablation.repeats < 1) throw ConfigError("ablation: repeats must be >= 1");
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(j, std::filesystem::path(path).parent_path());
}

struct ValidationReport {
  std::vector<std::string> errors;
  std::vector<std::string> warnings;
  bool ok() const { return errors.empty(); }
};

// Structural and referential checks. Noise-based baselines on datasets with
// categorical features produce a warning, not an error.
inline ValidationReport validate_config(const std::string& path) {
  ValidationReport report;
  if (!std::filesystem::exists(path)) throw IoError("cannot open config file '" + path + "'");
  ExperimentConfig cfg;
  try {
    cfg = load_config(path);
  } catch (const ConfigError& e) {
    report.errors.push_back(e.what());
    return report;
  }
  for (const auto& d : cfg.datasets) {
    if (d.synthetic) {
      const auto& s = *d.synthetic;
      if (s.rows < 2 || s.features < 1 || s.informative.empty())
        report.errors.push_back("dataset '" + d.name + "': synthetic source needs rows >= 2, features >= 1, informative non-empty");
      for (std::size_t j : s.informative)
        if (j >= s.features)
          report.errors.push_back("dataset '" + d.name + "': informative index out of range");
      continue;
    }
    if (!std::filesystem::exists(d.csv_path))
      report.errors.push_back("dataset '" + d.name + "': csv file not found: " + d.csv_path);
    if (!std::filesystem::exists(d.schema_path)) {
      report.errors.push_back("dataset '" + d.name + "': schema file not found: " + d.schema_path);
      continue;
    }
    FeatureSchema schema;
    try {
      schema = load_schema(d.schema_path);
    } catch (const Error& e) {
      report.errors.push_back("dataset '" + d.name + "': " + e.what());
      continue;
    }
    if (!schema.has_categorical()) continue;
    for (const auto& b : cfg.baselines) {
      const std::string m = method_name(b.spec);
      if (m == "blurred" || m == "gaussian" || m == "uniform") {
        report.warnings.push_back("dataset '" + d.name + "' has categorical features; baseline '" +
                                  b.name + "' (" + m +
                                  ") treats their integer codes as continuous values");
      }
    }
  }
  return report;
}

inline std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read '" + path + "' for hashing");
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 15];
  while (in) {
    in.read(buf, sizeof buf);
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i)
    hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  return hex.str();
}

inline const std::vector<std::string>& curve_csv_header() {
  static const std::vector<std::string> h = {"dataset", "attribution_method", "baseline_method",
                                             "k_percent", "f1_mean", "f1_std", "seed"};
  return h;
}

inline void write_curve_rows(const AblationCurve& c, std::ostream& out) {
  for (std::size_t k = 0; k < c.k_grid.size(); ++k) {
    out << c.dataset << "," << c.attribution_method << "," << c.baseline_method << ","
        << format_real(c.k_grid[k]) << "," << format_real(c.f1_mean[k]) << ","
        << format_real(c.f1_std[k]) << "," << c.seed << "\n";
  }
}

inline void write_curve_header(std::ostream& out) {
  const auto& h = curve_csv_header();
  for (std::size_t i = 0; i < h.size(); ++i) out << (i ? "," : "") << h[i];
  out << "\n";
}

// Reads a long-format curve CSV back into curves, grouped by
// (dataset, method, baseline) in first-appearance order.
inline std::vector<AblationCurve> read_curve_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("missing artifact '" + path + "'");
  std::vector<std::string> fields;
  std::size_t line = 0;
  if (!detail::read_csv_record(in, fields, line) || fields != curve_csv_header())
    throw IoError("'" + path + "' is not a curve CSV");
  std::vector<AblationCurve> curves;
  std::map<std::string, std::size_t> index;
  while (detail::read_csv_record(in, fields, line)) {
    if (fields.size() == 1 && fields[0].empty()) continue;
    if (fields.size() != 7) throw IoError("'" + path + "' line " + std::to_string(line) + ": bad row");
    const std::string key = fields[0] + "\x1f" + fields[1] + "\x1f" + fields[2];
    auto it = index.find(key);
    if (it == index.end()) {
      AblationCurve c;
      c.dataset = fields[0];
      c.attribution_method = fields[1];
      c.baseline_method = fields[2];
      c.seed = std::stoull(fields[6]);
      it = index.emplace(key, curves.size()).first;
      curves.push_back(std::move(c));
    }
    auto& c = curves[it->second];
    auto num = [&](const std::string& s) {
      auto v = detail::parse_double(s);
      if (!v) throw IoError("'" + path + "' line " + std::to_string(line) + ": bad number");
      return *v;
    };
    c.k_grid.push_back(num(fields[3]));
    c.f1_mean.push_back(num(fields[4]));
    c.f1_std.push_back(num(fields[5]));
  }
  return curves;
}

struct CellResult {
  std::string dataset;
  std::string method;
  std::string baseline;
  bool ok = false;
  std::string error;
  std::size_t rows = 0;
};

struct RunOptions {
  std::optional<std::string> output_dir;
  std::optional<std::uint64_t> master_seed;
  // Receives progress lines; may be empty.
  std::function<void(const std::string&)> log;
};

struct RunResult {
  int exit_code = 0;
  std::string output_dir;
  std::vector<CellResult> cells;
  std::vector<std::string> dataset_errors;
};

namespace detail {

inline std::string cell_stem(const std::string& method, const std::string& baseline) {
  return method + "__" + baseline;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << content;
    if (!out) throw IoError("write failed for '" + path.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

// Group key -> curves; aggregated in insertion order.
struct AggregateTable {
  std::vector<std::pair<std::string, std::string>> keys;
  std::map<std::pair<std::string, std::string>, std::vector<AblationCurve>> curves;

  void add(const AblationCurve& c) {
    const auto key = std::make_pair(c.attribution_method, c.baseline_method);
    if (!curves.count(key)) keys.push_back(key);
    curves[key].push_back(c);
  }
};

inline std::string aggregate_csv(const AggregateTable& table) {
  std::ostringstream out;
  out << "attribution_method,baseline_method,k_percent,f1_mean,f1_std,f1_drop_mean,f1_drop_std,"
         "n_datasets\n";
  for (const auto& key : table.keys) {
    const auto& group = table.curves.at(key);
    const AggregateCurve agg = aggregate_curves(group);
    std::vector<AblationCurve> drops = group;
    for (auto& c : drops) {
      const double base = c.f1_mean.front();
      for (double& v : c.f1_mean) v = base - v;
    }
    const AggregateCurve drop = aggregate_curves(drops);
    for (std::size_t k = 0; k < agg.k_grid.size(); ++k) {
      out << key.first << "," << key.second << "," << format_real(agg.k_grid[k]) << ","
          << format_real(agg.mean_f1[k]) << "," << format_real(agg.std_f1[k]) << ","
          << format_real(drop.mean_f1[k]) << "," << format_real(drop.std_f1[k]) << ","
          << agg.source_count << "\n";
    }
  }
  return out.str();
}

inline nlohmann::json file_entries(const std::filesystem::path& root) {
  std::vector<std::string> paths;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(e.path(), root).generic_string();
    if (rel == "manifest.json") continue;
    paths.push_back(rel);
  }
  std::sort(paths.begin(), paths.end());
  nlohmann::json files = nlohmann::json::array();
  for (const auto& rel : paths) {
    const auto full = (root / rel).string();
    files.push_back({{"path", rel},
                     {"sha256", sha256_file(full)},
                     {"bytes", std::filesystem::file_size(full)}});
  }
  return files;
}

inline Dataset prepare_dataset(const DatasetConfig& dc, const Rng& ds_rng,
                               nlohmann::json& info) {
  RawTable raw;
  MissingnessReport report;
  if (dc.synthetic) {
    raw = synth_raw_table(dc.synthetic->rows, dc.synthetic->features, dc.synthetic->informative,
                          ds_rng.split("synthetic"));
  } else {
    raw = load_csv(dc.csv_path, load_schema(dc.schema_path), dc.missing_token);
  }
  if (dc.subsample_rows > 0 && dc.subsample_rows < raw.rows()) {
    Rng sub = ds_rng.split("subsample");
    auto keep = sub.sample_without_replacement(raw.rows(), dc.subsample_rows);
    std::sort(keep.begin(), keep.end());
    RawTable small;
    small.schema = raw.schema;
    small.columns.resize(raw.cols());
    for (std::size_t r : keep) {
      small.labels.push_back(raw.labels[r]);
      for (std::size_t j = 0; j < raw.cols(); ++j) {
        const auto& src = raw.columns[j];
        auto& dst = small.columns[j];
        if (!src.numeric.empty()) dst.numeric.push_back(src.numeric[r]);
        if (!src.text.empty()) dst.text.push_back(src.text[r]);
        dst.missing.push_back(src.missing[r]);
      }
    }
    raw = std::move(small);
  }
  std::tie(raw, report) = drop_high_missing(raw, dc.missing_threshold.value_or(raw.rows()));
  Dataset ds = split_train_test(raw, dc.train_fraction, ds_rng.split("split"));
  ds.missingness = report;
  nlohmann::json miss = nlohmann::json::array();
  for (const auto& e : report.entries)
    miss.push_back({{"feature", e.feature}, {"missing", e.missing}, {"dropped", e.dropped}});
  info["missingness"] = miss;
  return ds;
}

}  // namespace detail

inline RunResult run_experiment(ExperimentConfig cfg, const RunOptions& options = {}) {
  using clock = std::chrono::steady_clock;
  namespace fs = std::filesystem;
  if (options.output_dir) cfg.output_dir = *options.output_dir;
  if (options.master_seed) cfg.master_seed = *options.master_seed;
  auto log = [&](const std::string& s) {
    if (options.log) options.log(s);
  };

  RunResult result;
  result.output_dir = cfg.output_dir;
  const fs::path root(cfg.output_dir);
  fs::create_directories(root);

  const Rng master(cfg.master_seed);
  nlohmann::json manifest;
  manifest["tool"] = "tabattr";
  manifest["version"] = kVersion;
#ifdef __VERSION__
  manifest["compiler"] = __VERSION__;
#endif
  manifest["config"] = cfg.source;
  manifest["master_seed"] = cfg.master_seed;
  manifest["seeds"] = nlohmann::json::object();
  manifest["datasets"] = nlohmann::json::array();
  manifest["timings_seconds"] = nlohmann::json::object();
  nlohmann::json cells_json = nlohmann::json::array();

  auto elapsed = [](clock::time_point t0) {
    return std::chrono::duration<double>(clock::now() - t0).count();
  };

  detail::AggregateTable aggregate, aggregate_control;
  std::ostringstream auc;
  auc << "dataset,attribution_method,baseline_method,auc,random_control_auc,beats_random\n";

  for (const auto& dc : cfg.datasets) {
    const Rng ds_rng = master.split("dataset").split(dc.name);
    const fs::path ds_dir = root / "datasets" / dc.name;
    nlohmann::json info;
    info["name"] = dc.name;
    const Rng noise = ds_rng.split("ablation-noise");
    const Rng ranking_rng = ds_rng.split("random-ranking");
    TrainConfig train_cfg = cfg.model;
    train_cfg.seed = ds_rng.split("model").seed();
    manifest["seeds"][dc.name] = {{"dataset", ds_rng.seed()},
                                  {"split", ds_rng.split("split").seed()},
                                  {"model", train_cfg.seed},
                                  {"evaluation_rows", ds_rng.split("eval-rows").seed()},
                                  {"ablation_noise", noise.seed()},
                                  {"random_ranking", ranking_rng.seed()}};

    Dataset ds;
    MLPModel model;
    std::vector<std::size_t> eval_rows;
    AblationCurve control;
    try {
      log("[" + dc.name + "] preprocessing");
      auto t0 = clock::now();
      ds = detail::prepare_dataset(dc, ds_rng, info);
      manifest["timings_seconds"][dc.name + "/preprocess"] = elapsed(t0);

      log("[" + dc.name + "] training (" + std::to_string(ds.rows()) + " rows, " +
          std::to_string(ds.num_features()) + " features)");
      t0 = clock::now();
      model = train(ds, train_cfg);
      manifest["timings_seconds"][dc.name + "/train"] = elapsed(t0);
      {
        std::ostringstream m;
        model.save(m);
        detail::write_text_file(ds_dir / "model.txt", m.str());
      }

      if (dc.eval_rows > 0 && dc.eval_rows < ds.test.size()) {
        eval_rows = stratified_sample(ds, dc.eval_rows, ds_rng.split("eval-rows"));
      } else {
        eval_rows = ds.test;
        std::sort(eval_rows.begin(), eval_rows.end());
      }
      t0 = clock::now();
      control = random_control_curve(model, ds, eval_rows, cfg.ablation, noise, ranking_rng);
      control.dataset = dc.name;
      control.attribution_method = "none";
      control.baseline_method = "random_control";
      {
        std::ostringstream c;
        write_curve_header(c);
        write_curve_rows(control, c);
        detail::write_text_file(ds_dir / "curves" / "random_control.csv", c.str());
      }
      aggregate_control.add(control);
      manifest["timings_seconds"][dc.name + "/random_control"] = elapsed(t0);

      info["rows"] = ds.rows();
      info["features"] = ds.num_features();
      info["classes"] = ds.num_classes;
      info["train_rows"] = ds.train.size();
      info["test_rows"] = ds.test.size();
      info["evaluation_rows"] = eval_rows.size();
      info["test_f1"] = control.f1_mean.front();
    } catch (const Error& e) {
      log("[" + dc.name + "] failed: " + std::string(e.what()));
      result.dataset_errors.push_back(dc.name + ": " + e.what());
      info["error"] = e.what();
      manifest["datasets"].push_back(info);
      for (auto method : cfg.methods) {
        for (const auto& b : cfg.baselines) {
          CellResult cell{dc.name, to_string(method), b.name, false,
                          std::string("dataset stage failed: ") + e.what(), 0};
          cells_json.push_back({{"dataset", cell.dataset}, {"method", cell.method},
                                {"baseline", cell.baseline}, {"status", "failed"},
                                {"error", cell.error}});
          result.cells.push_back(std::move(cell));
        }
      }
      continue;
    }
    manifest["datasets"].push_back(info);

    const double control_auc = normalized_area(control.k_grid, control.f1_mean);
    for (auto method : cfg.methods) {
      const std::string mname = to_string(method);
      std::vector<std::size_t> rows = eval_rows;
      if (method == AttributionMethod::kKernelShap && ds.num_features() > cfg.kshap_max_features &&
          rows.size() > cfg.kshap_subsample_rows) {
        rows = stratified_sample(ds, cfg.kshap_subsample_rows, ds_rng.split("kernel-shap-rows"));
      }
      for (const auto& b : cfg.baselines) {
        CellResult cell{dc.name, mname, b.name, false, "", rows.size()};
        const auto t0 = clock::now();
        try {
          log("[" + dc.name + "] " + mname + " x " + b.name);
          const Rng cell_rng =
              ds_rng.split("attribution").split(mname).split(describe(b.spec));
          std::vector<AttributionVector> attributions;
          attributions.reserve(rows.size());
          for (std::size_t r : rows) {
            attributions.push_back(attribute(method, model, ds.features.row(r), b.spec, ds,
                                             cfg.attribution, cell_rng.split(r)));
          }
          AblationCurve curve =
              ablation_curve(model, ds, rows, attributions, cfg.ranking, cfg.ablation, noise);
          curve.dataset = dc.name;
          curve.attribution_method = mname;
          curve.baseline_method = b.name;

          std::ostringstream dump;
          dump << "row_id,target_class";
          for (std::size_t j = 0; j < ds.num_features(); ++j) dump << ",feature_" << j;
          dump << "\n";
          for (std::size_t i = 0; i < rows.size(); ++i) {
            dump << rows[i] << "," << attributions[i].target_class;
            for (double v : attributions[i].values) dump << "," << format_real(v);
            dump << "\n";
          }
          std::ostringstream curve_csv;
          write_curve_header(curve_csv);
          write_curve_rows(curve, curve_csv);
          const std::string stem = detail::cell_stem(mname, b.name);
          detail::write_text_file(ds_dir / "attributions" / (stem + ".csv"), dump.str());
          detail::write_text_file(ds_dir / "curves" / (stem + ".csv"), curve_csv.str());

          aggregate.add(curve);
          const double area = normalized_area(curve.k_grid, curve.f1_mean);
          auc << dc.name << "," << mname << "," << b.name << "," << format_real(area) << ","
              << format_real(control_auc) << "," << (area < control_auc ? "true" : "false")
              << "\n";
          cell.ok = true;
        } catch (const Error& e) {
          cell.error = e.what();
          log("[" + dc.name + "] " + mname + " x " + b.name + " failed: " + e.what());
        }
        manifest["timings_seconds"][dc.name + "/" + detail::cell_stem(mname, b.name)] = elapsed(t0);
        nlohmann::json cj = {{"dataset", cell.dataset}, {"method", cell.method},
                             {"baseline", cell.baseline}, {"rows", cell.rows},
                             {"status", cell.ok ? "ok" : "failed"}};
        if (!cell.ok) cj["error"] = cell.error;
        cells_json.push_back(cj);
        result.cells.push_back(std::move(cell));
      }
    }
  }

  if (!aggregate.keys.empty()) detail::write_text_file(root / "aggregate.csv", detail::aggregate_csv(aggregate));
  if (!aggregate_control.keys.empty())
    detail::write_text_file(root / "aggregate_random_control.csv",
                            detail::aggregate_csv(aggregate_control));
  detail::write_text_file(root / "auc_report.csv", auc.str());

  manifest["cells"] = cells_json;
  manifest["files"] = detail::file_entries(root);
  detail::write_text_file(root / "manifest.json", manifest.dump(2) + "\n");

  const bool all_ok = std::all_of(result.cells.begin(), result.cells.end(),
                                  [](const CellResult& c) { return c.ok; });
  result.exit_code = all_ok && result.dataset_errors.empty() ? 0 : 2;
  return result;
}

struct PlotData {
  std::vector<std::string> files;
};

// Per-dataset long-format curve bundles plus aggregate tables recomputed from
// them, written under <run>/plotdata/. The manifest's file list is refreshed.
inline PlotData emit_plotdata(const std::string& run_dir) {
  namespace fs = std::filesystem;
  const fs::path root(run_dir);
  const fs::path manifest_path = root / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw IoError("incomplete run: missing '" + manifest_path.string() + "'");
  nlohmann::json manifest = nlohmann::json::parse(in);
  in.close();

  std::vector<std::string> dataset_order;
  for (const auto& d : manifest.at("datasets")) {
    if (d.contains("error")) continue;
    dataset_order.push_back(d.at("name").get<std::string>());
  }
  std::map<std::string, std::vector<std::string>> stems;
  for (const auto& c : manifest.at("cells")) {
    if (c.at("status") != "ok") continue;
    stems[c.at("dataset").get<std::string>()].push_back(
        detail::cell_stem(c.at("method").get<std::string>(), c.at("baseline").get<std::string>()));
  }

  PlotData out;
  detail::AggregateTable aggregate, aggregate_control;
  for (const auto& name : dataset_order) {
    const fs::path curves_dir = root / "datasets" / name / "curves";
    std::vector<AblationCurve> curves;
    for (const auto& stem : stems[name]) {
      auto c = read_curve_csv((curves_dir / (stem + ".csv")).string());
      curves.insert(curves.end(), c.begin(), c.end());
    }
    const auto control = read_curve_csv((curves_dir / "random_control.csv").string());
    std::ostringstream bundle;
    write_curve_header(bundle);
    for (const auto& c : curves) {
      write_curve_rows(c, bundle);
      aggregate.add(c);
    }
    for (const auto& c : control) {
      write_curve_rows(c, bundle);
      aggregate_control.add(c);
    }
    const fs::path file = root / "plotdata" / (name + ".csv");
    detail::write_text_file(file, bundle.str());
    out.files.push_back(file.string());
  }
  if (!aggregate.keys.empty()) {
    const fs::path file = root / "plotdata" / "aggregate.csv";
    detail::write_text_file(file, detail::aggregate_csv(aggregate));
    out.files.push_back(file.string());
  }
  if (!aggregate_control.keys.empty()) {
    const fs::path file = root / "plotdata" / "aggregate_random_control.csv";
    detail::write_text_file(file, detail::aggregate_csv(aggregate_control));
    out.files.push_back(file.string());
  }
  manifest["files"] = detail::file_entries(root);
  detail::write_text_file(manifest_path, manifest.dump(2) + "\n");
  return out;
}

struct AucSummaryRow {
  std::string baseline;
  double mean_auc = 0.0;
  double mean_control_auc = 0.0;
  std::size_t cells = 0;
  std::size_t beats_random = 0;
};

// Mean normalized area per baseline over every (dataset, method) cell of a
// run, most discriminative (lowest area) first.
inline std::vector<AucSummaryRow> summarize_auc(const std::string& run_dir) {
  const auto path = (std::filesystem::path(run_dir) / "auc_report.csv").string();
  std::ifstream in(path);
  if (!in) throw IoError("missing artifact '" + path + "'");
  std::vector<std::string> fields;
  std::size_t line = 0;
  detail::read_csv_record(in, fields, line);
  std::vector<AucSummaryRow> rows;
  std::map<std::string, std::size_t> index;
  while (detail::read_csv_record(in, fields, line)) {
    if (fields.size() != 6) continue;
    auto it = index.find(fields[2]);
    if (it == index.end()) {
      it = index.emplace(fields[2], rows.size()).first;
      rows.push_back({fields[2]});
    }
    auto& r = rows[it->second];
    r.mean_auc += std::stod(fields[3]);
    r.mean_control_auc += std::stod(fields[4]);
    r.beats_random += fields[5] == "true";
    ++r.cells;
  }
  for (auto& r : rows) {
    r.mean_auc /= static_cast<double>(r.cells);
    r.mean_control_auc /= static_cast<double>(r.cells);
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const auto& a, const auto& b) { return a.mean_auc < b.mean_auc; });
  return rows;
}

}  // namespace tabattr
