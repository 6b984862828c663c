// Acceptance harness: prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "tabattr/tabattr.hpp"
#include "test_util.hpp"

namespace {

using namespace tabattr;
namespace fs = std::filesystem;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string Fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(3) << v;
  return s.str();
}

struct Triple {
  const MLPModel* model;
  Vector x;
  Vector b;
  Target target;
};

struct TrainedFixture {
  std::vector<Dataset> datasets;
  std::vector<MLPModel> models;
};

// Five small trained networks, each with its own synthetic task.
const TrainedFixture& Trained() {
  static const TrainedFixture f = [] {
    TrainedFixture out;
    for (std::uint64_t s = 0; s < 5; ++s) {
      Rng rng(1000 + s);
      out.datasets.push_back(synth_dataset(400, 4 + s, {0, 1}, rng.split("data")));
      TrainConfig cfg;
      cfg.hidden_units = 16;
      cfg.epochs = 20;
      cfg.seed = rng.split("train").seed();
      out.models.push_back(train(out.datasets.back(), cfg));
    }
    return out;
  }();
  return f;
}

// 50 (trained model, test row, baseline) triples; baselines cycle through
// the six generators.
std::vector<Triple> Triples() {
  const auto& f = Trained();
  const std::vector<BaselineSpec> specs{ConstantBaseline{},   MaxDistanceBaseline{},
                                        BlurredBaseline{},    GaussianBaseline{},
                                        UniformBaseline{},    ExpectationBaseline{}};
  std::vector<Triple> out;
  Rng rng(77);
  for (std::size_t i = 0; i < 50; ++i) {
    const std::size_t mi = i % f.models.size();
    const Dataset& ds = f.datasets[mi];
    const MLPModel& model = f.models[mi];
    const std::size_t row = ds.test[rng.index(ds.test.size())];
    const Vector x(ds.features.row(row).begin(), ds.features.row(row).end());
    Vector b = generate(specs[i % specs.size()], x, ds, rng.split(i)).values;
    if (i % specs.size() == 5) {
      // Expectation returns a sampled training row; perturb so x != b.
      for (double& v : b) v += 0.1;
    }
    out.push_back({&model, x, b, model.target_for_class(model.predict_class(x))});
  }
  return out;
}

Outcome Taxonomy() {
  const Dataset ds = synth_dataset(300, 6, {0, 1}, Rng(11));
  const std::vector<std::pair<BaselineSpec, TaxonomyLabel>> table{
      {ConstantBaseline{}, {Spatial::kStatic, Variability::kDeterministic}},
      {MaxDistanceBaseline{}, {Spatial::kDynamic, Variability::kDeterministic}},
      {BlurredBaseline{}, {Spatial::kDynamic, Variability::kStochastic}},
      {GaussianBaseline{}, {Spatial::kDynamic, Variability::kStochastic}},
      {UniformBaseline{}, {Spatial::kDynamic, Variability::kStochastic}},
      {ExpectationBaseline{}, {Spatial::kStatic, Variability::kStochastic}}};
  Outcome o{true, ""};
  for (const auto& [spec, expected] : table) {
    const Rng rng = Rng(12).split(method_name(spec));
    const auto spatial = check_static(spec, ds, 100, rng.split("static")).verdict;
    const auto variability =
        check_deterministic(spec, ds.features.row(ds.test.front()), ds, 20, rng.split("det"))
            .verdict;
    const bool ok = spatial == expected.spatial && variability == expected.variability &&
                    declared_taxonomy(spec) == expected;
    o.pass = o.pass && ok;
    o.detail += method_name(spec) + "=" + to_string(spatial) + "/" + to_string(variability) +
                (ok ? " " : "(MISMATCH) ");
  }
  return o;
}

Outcome IgCompleteness(const std::vector<Triple>& triples) {
  double worst = 0.0;
  std::size_t failed = 0;
  for (const auto& t : triples) {
    const Vector a = integrated_gradients(*t.model, t.x, t.b, t.target, 300);
    const double delta = t.model->target_logit(t.x, t.target) - t.model->target_logit(t.b, t.target);
    double sum = 0.0;
    for (double v : a) sum += v;
    const double ratio = std::abs(sum - delta) / (1e-3 * (1.0 + std::abs(delta)));
    worst = std::max(worst, ratio);
    failed += ratio > 1.0;
  }
  return {failed == 0, std::to_string(failed) + "/" + std::to_string(triples.size()) +
                           " triples over tolerance, worst error / tolerance = " + Fmt(worst)};
}

Outcome DeepLiftCompleteness(const std::vector<Triple>& triples) {
  double worst = 0.0;
  for (const auto& t : triples) {
    const Vector a = deeplift_rescale(*t.model, t.x, t.b, t.target);
    const double delta = t.model->target_logit(t.x, t.target) - t.model->target_logit(t.b, t.target);
    double sum = 0.0;
    for (double v : a) sum += v;
    worst = std::max(worst, std::abs(sum - delta));
  }
  return {worst <= 1e-10, "max |sum - delta| = " + Fmt(worst)};
}

Outcome ShapleyOracle() {
  double worst = 0.0;
  for (std::size_t i = 0; i < 20; ++i) {
    const std::size_t m = 2 + i % 7;
    const MLPModel model = testing::RandomModel(m, 8, 2 + i % 2, 300 + i);
    Rng rng(400 + i);
    const Vector x = testing::RandomVector(m, rng);
    const Vector b = testing::RandomVector(m, rng);
    const std::size_t cls = i % model.num_classes();
    const Vector phi = kernel_shap(probability_value_function(model, cls), x, b, 12, 0, rng);
    const Vector ref = testing::BruteForceShapley(
        [&](const Vector& h) {
          Matrix one(1, m);
          std::copy(h.begin(), h.end(), one.row(0).begin());
          return model.predict_proba(one)(0, cls);
        },
        x, b);
    worst = std::max(worst, max_abs_diff(phi, ref));
  }
  return {worst <= 1e-6, "max abs diff = " + Fmt(worst)};
}

Outcome LinearAgreement() {
  double worst = 0.0;
  Rng rng(500);
  AttributionConfig cfg;
  cfg.kshap_value = ShapValue::kLogit;
  for (std::size_t trial = 0; trial < 10; ++trial) {
    const std::size_t m = 3 + trial % 6;
    const Vector w = testing::RandomVector(m, rng);
    const MLPModel model = testing::LinearModel(w);
    const Vector x = testing::RandomVector(m, rng);
    const Vector b = testing::RandomVector(m, rng);
    const Target t = model.target_for_class(1);
    Vector expected(m);
    for (std::size_t i = 0; i < m; ++i) expected[i] = w[i] * (x[i] - b[i]);
    worst = std::max(worst, max_abs_diff(integrated_gradients(model, x, b, t, 300), expected));
    worst = std::max(worst, max_abs_diff(deeplift_rescale(model, x, b, t), expected));
    worst = std::max(worst, max_abs_diff(kernel_shap(model, x, b, t, cfg, rng.split(trial)), expected));
  }
  return {worst <= 1e-6, "max abs diff = " + Fmt(worst)};
}

Outcome GradientCheck() {
  const double h = 1e-5;
  double worst = 0.0;
  std::size_t pairs = 0;
  Rng rng(600);
  for (std::uint64_t s = 0; pairs < 50; ++s) {
    const std::size_t m = 2 + s % 9;
    const MLPModel model = testing::RandomModel(m, 12, 2 + s % 3, 700 + s);
    const Vector x = testing::RandomVector(m, rng);
    const Vector z = model.hidden_preactivation(x);
    if (std::any_of(z.begin(), z.end(), [](double v) { return std::abs(v) < 1e-3; })) continue;
    const Target t = model.target_for_class(static_cast<int>(s % model.num_classes()));
    const Vector g = model.input_gradient(x, t);
    for (std::size_t i = 0; i < m; ++i) {
      Vector up = x, down = x;
      up[i] += h;
      down[i] -= h;
      const double fd = (model.target_logit(up, t) - model.target_logit(down, t)) / (2 * h);
      worst = std::max(worst, std::abs(fd - g[i]));
    }
    ++pairs;
  }
  return {worst <= 1e-5, "max abs diff = " + Fmt(worst)};
}

Outcome AblationSanity() {
  AblationSettings settings;
  settings.k_grid = {0, 20, 100};
  double oracle20 = 0.0, random20 = 0.0;
  bool k0_exact = true, k100_equal = true;
  for (std::uint64_t s = 0; s < 20; ++s) {
    Rng rng(800 + s);
    const Dataset ds = synth_dataset(2000, 10, {0, 1}, rng.split("data"));
    TrainConfig cfg;
    cfg.seed = rng.split("train").seed();
    const MLPModel model = train(ds, cfg);
    const std::vector<std::size_t>& rows = ds.test;

    AttributionVector oracle;
    oracle.values.assign(10, 0.0);
    oracle.values[0] = 1.0;
    oracle.values[1] = 1.0;
    AttributionVector reversed;
    reversed.values.assign(10, 1.0);
    reversed.values[0] = 0.0;
    reversed.values[1] = 0.0;
    const Rng noise = rng.split("noise");
    const auto a = ablation_curve(model, ds, rows, std::vector(rows.size(), oracle),
                                  RankingMode::kSigned, settings, noise);
    const auto r = random_control_curve(model, ds, rows, settings, noise, rng.split("ranking"));
    const auto c = ablation_curve(model, ds, rows, std::vector(rows.size(), reversed),
                                  RankingMode::kSigned, settings, noise);
    const double clean = f1_score(model.predict_class(ds.subset(rows)), ds.labels_of(rows),
                                  default_scheme(ds.num_classes), ds.num_classes);
    k0_exact = k0_exact && a.f1_mean[0] == clean && r.f1_mean[0] == clean && c.f1_mean[0] == clean;
    k100_equal = k100_equal && a.f1_mean[2] == r.f1_mean[2] && a.f1_mean[2] == c.f1_mean[2];
    oracle20 += a.f1_mean[1] / 20.0;
    random20 += r.f1_mean[1] / 20.0;
  }
  const bool gap = oracle20 <= random20 - 0.02;
  return {gap && k0_exact && k100_equal,
          "F1@20 oracle=" + Fmt(oracle20) + " random=" + Fmt(random20) +
              " K0 exact=" + (k0_exact ? "yes" : "no") +
              " K100 equal=" + (k100_equal ? "yes" : "no")};
}

std::vector<std::string> Csvs(const fs::path& root) {
  std::vector<std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file() && e.path().extension() == ".csv")
      out.push_back(fs::relative(e.path(), root).generic_string());
  std::sort(out.begin(), out.end());
  return out;
}

// Every data row has the header's width and numeric F1 columns in [0, 1].
bool WellFormedCurveCsv(const fs::path& path) {
  std::ifstream in(path);
  std::vector<std::string> header, fields;
  std::size_t line = 0, rows = 0;
  if (!detail::read_csv_record(in, header, line) || header != curve_csv_header()) return false;
  while (detail::read_csv_record(in, fields, line)) {
    if (fields.size() == 1 && fields[0].empty()) continue;
    if (fields.size() != header.size()) return false;
    for (std::size_t i = 3; i < fields.size(); ++i)
      if (!detail::parse_double(fields[i])) return false;
    ++rows;
  }
  return rows > 0;
}

Outcome FullMatrix(const fs::path& out, double* seconds) {
  const auto cfg = load_config(std::string(TABATTR_CONFIG_DIR) + "/acceptance.json");
  const auto t0 = std::chrono::steady_clock::now();
  RunOptions options;
  options.output_dir = out.string();
  const RunResult result = run_experiment(cfg, options);
  emit_plotdata(out.string());
  *seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  std::vector<std::string> problems;
  if (result.exit_code != 0) problems.push_back("exit code " + std::to_string(result.exit_code));
  std::size_t curves = 0;
  for (const auto& d : cfg.datasets) {
    const fs::path dir = out / "datasets" / d.name;
    for (const auto& b : cfg.baselines) {
      for (auto m : cfg.methods) {
        const std::string stem = to_string(m) + "__" + b.name + ".csv";
        if (!fs::exists(dir / "attributions" / stem)) problems.push_back("missing attributions " + stem);
        if (!WellFormedCurveCsv(dir / "curves" / stem)) problems.push_back("bad curve " + stem);
        ++curves;
      }
    }
    if (!WellFormedCurveCsv(dir / "curves" / "random_control.csv"))
      problems.push_back("bad random control for " + d.name);
    if (!WellFormedCurveCsv(out / "plotdata" / (d.name + ".csv")))
      problems.push_back("bad plotdata for " + d.name);
  }
  for (const char* f : {"aggregate.csv", "aggregate_random_control.csv", "plotdata/aggregate.csv"}) {
    if (!fs::exists(out / f)) problems.push_back(std::string("missing ") + f);
  }
  if (*seconds >= 15 * 60) problems.push_back("over 15 minutes");

  std::cout << "  area under ablation curve per baseline (lower = more faithful):\n";
  const auto rows = summarize_auc(out.string());
  std::string flagged;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    std::cout << "    " << std::left << std::setw(14) << r.baseline << " auc=" << Fmt(r.mean_auc)
              << " random=" << Fmt(r.mean_control_auc) << " beats_random=" << r.beats_random << "/"
              << r.cells << "\n";
    if (r.baseline == "uniform" || r.baseline == "max_distance") {
      flagged += " " + r.baseline + " rank " + std::to_string(i + 1) + "/" +
                 std::to_string(rows.size()) + ", beats random in " +
                 std::to_string(r.beats_random) + "/" + std::to_string(r.cells) + " cells;";
    }
  }
  std::cout << "  soft report (uniform and max_distance expected near random):" << flagged << "\n";

  Outcome o{problems.empty(), std::to_string(curves) + " cells in " + Fmt(*seconds) + " s"};
  for (const auto& p : problems) o.detail += "; " + p;
  return o;
}

Outcome Determinism(const fs::path& first, const fs::path& second) {
  RunOptions options;
  options.output_dir = second.string();
  run_experiment(load_config(std::string(TABATTR_CONFIG_DIR) + "/acceptance.json"), options);
  emit_plotdata(second.string());
  const auto a = Csvs(first);
  if (a != Csvs(second)) return {false, "different CSV file sets"};
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
  };
  for (const auto& f : a) {
    if (slurp(first / f) != slurp(second / f)) return {false, f + " differs"};
  }
  return {true, std::to_string(a.size()) + " CSVs byte-identical"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tabattr acceptance checks"};
  std::string work_dir = "acceptance_runs";
  std::set<int> only;
  app.add_option("--work-dir", work_dir, "Directory for experiment outputs");
  app.add_option("--only", only, "Run only these criteria")->check(CLI::Range(1, 9));
  CLI11_PARSE(app, argc, argv);

  const fs::path work(work_dir);
  fs::remove_all(work);
  fs::create_directories(work);

  bool all = true;
  auto report = [&](int id, const std::string& name, double budget, auto&& fn) {
    if (!only.empty() && !only.count(id)) return;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (budget > 0 && secs >= budget) {
      o.pass = false;
      o.detail += "; over " + Fmt(budget) + " s budget";
    }
    all = all && o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << id << "] " << name << ": " << o.detail
              << " (" << Fmt(secs) << " s)" << std::endl;
  };

  std::vector<Triple> triples;
  if (only.empty() || only.count(2) || only.count(3)) triples = Triples();

  report(1, "baseline taxonomy", 10, Taxonomy);
  report(2, "integrated gradients completeness", 30, [&] { return IgCompleteness(triples); });
  report(3, "DeepLIFT exact completeness", 0, [&] { return DeepLiftCompleteness(triples); });
  report(4, "KernelSHAP equals brute-force Shapley", 60, ShapleyOracle);
  report(5, "linear model agreement", 0, LinearAgreement);
  report(6, "input gradients vs finite differences", 0, GradientCheck);
  report(7, "ablation sanity on synthetic data", 0, AblationSanity);
  double run_seconds = 0.0;
  report(8, "full baseline x method matrix", 15 * 60,
         [&] { return FullMatrix(work / "run_a", &run_seconds); });
  report(9, "determinism across runs", 0, [&]() -> Outcome {
    if (!fs::exists(work / "run_a" / "manifest.json")) {
      double unused = 0.0;
      FullMatrix(work / "run_a", &unused);
    }
    return Determinism(work / "run_a", work / "run_b");
  });
  return all ? 0 : 1;
}
