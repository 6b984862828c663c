#pragma once

// One-hidden-layer ReLU network with sigmoid (two classes) or softmax output.
//
// Parameter file format (text, whitespace separated, values in %.17g):
//
//   tabattr-mlp 1
//   output sigmoid-binary|softmax-multiclass
//   shape <inputs> <hidden> <outputs> <classes>
//   W1 <inputs*hidden values, row-major inputs x hidden>
//   b1 <hidden values>
//   W2 <hidden*outputs values, row-major hidden x outputs>
//   b2 <outputs values>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "tabattr/data.hpp"
#include "tabattr/errors.hpp"
#include "tabattr/numerics.hpp"

namespace tabattr {

enum class OutputKind { kSigmoidBinary, kSoftmaxMulticlass };

// Anything that maps a batch of rows to a matrix of class probabilities.
template <typename P>
concept Predictor = requires(const P& p, const Matrix& batch) {
  { p.predict_proba(batch) } -> std::convertible_to<Matrix>;
};

struct TrainConfig {
  std::size_t hidden_units = 32;
  double learning_rate = 0.05;
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;

  void validate() const {
    if (hidden_units == 0 || batch_size == 0 || !(learning_rate > 0.0) ||
        !std::isfinite(learning_rate)) {
      throw ParameterError("train config: hidden_units, batch_size and learning_rate must be positive");
    }
  }
};

// The attributed scalar for a class: the class logit for softmax models; for
// sigmoid models the log-odds of the class, i.e. +z for class 1 and -z for
// class 0.
struct Target {
  std::size_t output = 0;
  double sign = 1.0;
  int class_index = 0;
};

class MLPModel {
 public:
  MLPModel() = default;
  MLPModel(Matrix w1, Vector b1, Matrix w2, Vector b2, OutputKind kind)
      : w1_(std::move(w1)), b1_(std::move(b1)), w2_(std::move(w2)),
        b2_(std::move(b2)), kind_(kind) {
    check();
  }

  // Parameters drawn from scaled normals: W1 ~ N(0, 2/M), W2 ~ N(0, 1/H),
  // biases zero.
  static MLPModel Initialize(std::size_t inputs, std::size_t hidden,
                             std::size_t classes, Rng rng) {
    if (inputs == 0 || hidden == 0 || classes < 2) {
      throw ParameterError("mlp: need inputs >= 1, hidden >= 1, classes >= 2");
    }
    const OutputKind kind =
        classes == 2 ? OutputKind::kSigmoidBinary : OutputKind::kSoftmaxMulticlass;
    const std::size_t outputs = classes == 2 ? 1 : classes;
    Matrix w1(inputs, hidden), w2(hidden, outputs);
    const double s1 = std::sqrt(2.0 / static_cast<double>(inputs));
    const double s2 = std::sqrt(1.0 / static_cast<double>(hidden));
    for (double& v : w1.data()) v = rng.normal(0.0, s1);
    for (double& v : w2.data()) v = rng.normal(0.0, s2);
    return MLPModel(std::move(w1), Vector(hidden, 0.0), std::move(w2),
                    Vector(outputs, 0.0), kind);
  }

  std::size_t inputs() const { return w1_.rows(); }
  std::size_t hidden() const { return w1_.cols(); }
  std::size_t outputs() const { return w2_.cols(); }
  std::size_t num_classes() const {
    return kind_ == OutputKind::kSigmoidBinary ? 2 : outputs();
  }
  OutputKind kind() const { return kind_; }

  const Matrix& w1() const { return w1_; }
  const Vector& b1() const { return b1_; }
  const Matrix& w2() const { return w2_; }
  const Vector& b2() const { return b2_; }
  Matrix& w1() { return w1_; }
  Vector& b1() { return b1_; }
  Matrix& w2() { return w2_; }
  Vector& b2() { return b2_; }

  bool all_finite() const {
    auto fin = [](const Vector& v) {
      return std::all_of(v.begin(), v.end(), [](double d) { return std::isfinite(d); });
    };
    return w1_.all_finite() && w2_.all_finite() && fin(b1_) && fin(b2_);
  }

  // Pre-activation of the hidden layer, W1^T x + b1.
  Vector hidden_preactivation(std::span<const double> x) const {
    check_input(x);
    Vector z = b1_;
    for (std::size_t i = 0; i < inputs(); ++i) {
      const double xi = x[i];
      if (xi == 0.0) continue;
      auto wrow = w1_.row(i);
      for (std::size_t h = 0; h < hidden(); ++h) z[h] += xi * wrow[h];
    }
    return z;
  }

  Vector logits(std::span<const double> x) const {
    const Vector z = hidden_preactivation(x);
    Vector out = b2_;
    for (std::size_t h = 0; h < hidden(); ++h) {
      const double a = z[h] > 0.0 ? z[h] : 0.0;
      if (a == 0.0) continue;
      auto wrow = w2_.row(h);
      for (std::size_t o = 0; o < outputs(); ++o) out[o] += a * wrow[o];
    }
    return out;
  }

  Target target_for_class(int class_index) const {
    if (class_index < 0 || static_cast<std::size_t>(class_index) >= num_classes()) {
      throw ParameterError("class index " + std::to_string(class_index) +
                           " out of range");
    }
    if (kind_ == OutputKind::kSigmoidBinary) {
      return {0, class_index == 1 ? 1.0 : -1.0, class_index};
    }
    return {static_cast<std::size_t>(class_index), 1.0, class_index};
  }

  double target_logit(std::span<const double> x, const Target& t) const {
    return t.sign * logits(x)[t.output];
  }

  // d logit_output / dx; the ReLU subgradient at exactly 0 is 0.
  Vector input_gradient(std::span<const double> x, std::size_t output) const {
    if (output >= outputs()) {
      throw ShapeError("input_gradient: output index " + std::to_string(output) +
                       " >= " + std::to_string(outputs()));
    }
    const Vector z = hidden_preactivation(x);
    Vector grad(inputs(), 0.0);
    for (std::size_t h = 0; h < hidden(); ++h) {
      if (!(z[h] > 0.0)) continue;
      const double back = w2_(h, output);
      for (std::size_t i = 0; i < inputs(); ++i) grad[i] += w1_(i, h) * back;
    }
    return grad;
  }

  Vector input_gradient(std::span<const double> x, const Target& t) const {
    Vector g = input_gradient(x, t.output);
    if (t.sign != 1.0)
      for (double& v : g) v *= t.sign;
    return g;
  }

  Vector proba_from_logits(const Vector& z) const {
    if (kind_ == OutputKind::kSigmoidBinary) {
      const double p = sigmoid(z[0]);
      return {1.0 - p, p};
    }
    const double mx = *std::max_element(z.begin(), z.end());
    Vector p(z.size());
    double sum = 0.0;
    for (std::size_t c = 0; c < z.size(); ++c) sum += (p[c] = std::exp(z[c] - mx));
    for (double& v : p) v /= sum;
    return p;
  }

  // One row per input row, one column per class.
  Matrix predict_proba(const Matrix& batch) const {
    if (batch.cols() != inputs()) {
      throw ShapeError("predict_proba: batch width " + std::to_string(batch.cols()) +
                       " != " + std::to_string(inputs()));
    }
    Matrix out(batch.rows(), num_classes());
    for (std::size_t r = 0; r < batch.rows(); ++r) {
      const Vector p = proba_from_logits(logits(batch.row(r)));
      std::copy(p.begin(), p.end(), out.row(r).begin());
    }
    return out;
  }

  int predict_class(std::span<const double> x) const {
    const Vector z = logits(x);
    if (kind_ == OutputKind::kSigmoidBinary) return sigmoid(z[0]) > 0.5 ? 1 : 0;
    return static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
  }

  std::vector<int> predict_class(const Matrix& batch) const {
    if (batch.cols() != inputs()) throw ShapeError("predict_class: batch width mismatch");
    std::vector<int> out(batch.rows());
    for (std::size_t r = 0; r < batch.rows(); ++r) out[r] = predict_class(batch.row(r));
    return out;
  }

  static double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
  }

  void save(std::ostream& out) const {
    out << "tabattr-mlp 1\n";
    out << "output "
        << (kind_ == OutputKind::kSigmoidBinary ? "sigmoid-binary" : "softmax-multiclass")
        << "\n";
    out << "shape " << inputs() << " " << hidden() << " " << outputs() << " "
        << num_classes() << "\n";
    auto dump = [&](const char* tag, const std::vector<double>& v) {
      out << tag;
      for (double d : v) out << " " << format_real(d);
      out << "\n";
    };
    dump("W1", w1_.data());
    dump("b1", b1_);
    dump("W2", w2_.data());
    dump("b2", b2_);
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write model file '" + path + "'");
    save(out);
  }

  static MLPModel Load(std::istream& in) {
    std::string tag, kind_name;
    int version = 0;
    if (!(in >> tag >> version) || tag != "tabattr-mlp" || version != 1) {
      throw IoError("model file: bad header");
    }
    if (!(in >> tag >> kind_name) || tag != "output") throw IoError("model file: missing output line");
    OutputKind kind;
    if (kind_name == "sigmoid-binary") {
      kind = OutputKind::kSigmoidBinary;
    } else if (kind_name == "softmax-multiclass") {
      kind = OutputKind::kSoftmaxMulticlass;
    } else {
      throw IoError("model file: unknown output kind '" + kind_name + "'");
    }
    std::size_t m = 0, h = 0, o = 0, c = 0;
    if (!(in >> tag >> m >> h >> o >> c) || tag != "shape") throw IoError("model file: missing shape");
    auto read = [&](const char* expect, std::size_t count) {
      std::string t;
      if (!(in >> t) || t != expect) throw IoError(std::string("model file: expected ") + expect);
      std::vector<double> v(count);
      for (auto& d : v) {
        std::string tok;
        if (!(in >> tok)) throw IoError(std::string("model file: truncated ") + expect);
        auto parsed = detail::parse_double(tok);
        if (!parsed) throw IoError("model file: bad value '" + tok + "'");
        d = *parsed;
      }
      return v;
    };
    auto w1 = read("W1", m * h);
    auto b1 = read("b1", h);
    auto w2 = read("W2", h * o);
    auto b2 = read("b2", o);
    MLPModel model(Matrix(m, h, std::move(w1)), std::move(b1), Matrix(h, o, std::move(w2)),
                   std::move(b2), kind);
    if (model.num_classes() != c) throw IoError("model file: class count mismatch");
    return model;
  }

  static MLPModel Load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open model file '" + path + "'");
    return Load(in);
  }

  friend bool operator==(const MLPModel&, const MLPModel&) = default;

 private:
  void check() const {
    if (b1_.size() != w1_.cols() || w2_.rows() != w1_.cols() || b2_.size() != w2_.cols()) {
      throw ShapeError("mlp: inconsistent parameter shapes");
    }
    if (kind_ == OutputKind::kSigmoidBinary && outputs() != 1) {
      throw ShapeError("mlp: sigmoid output needs exactly one output unit");
    }
    if (kind_ == OutputKind::kSoftmaxMulticlass && outputs() < 2) {
      throw ShapeError("mlp: softmax output needs at least two output units");
    }
    if (!all_finite()) throw ParameterError("mlp: non-finite parameter");
  }

  void check_input(std::span<const double> x) const {
    if (x.size() != inputs()) {
      throw ShapeError("mlp: input has " + std::to_string(x.size()) +
                       " features, model expects " + std::to_string(inputs()));
    }
  }

  Matrix w1_;
  Vector b1_;
  Matrix w2_;
  Vector b2_;
  OutputKind kind_ = OutputKind::kSigmoidBinary;
};

static_assert(Predictor<MLPModel>);

struct TrainResult {
  MLPModel model;
  // Mean cross-entropy over the training split after each epoch.
  std::vector<double> epoch_loss;
};

namespace detail {

inline double cross_entropy(const MLPModel& model, const Vector& z, int label) {
  if (model.kind() == OutputKind::kSigmoidBinary) {
    // softplus(z) - y z, evaluated stably.
    const double sp = z[0] > 0.0 ? z[0] + std::log1p(std::exp(-z[0]))
                                 : std::log1p(std::exp(z[0]));
    return sp - (label == 1 ? z[0] : 0.0);
  }
  const double mx = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double v : z) sum += std::exp(v - mx);
  return mx + std::log(sum) - z[static_cast<std::size_t>(label)];
}

inline double mean_loss(const MLPModel& model, const Dataset& ds,
                        std::span<const std::size_t> rows) {
  double total = 0.0;
  for (std::size_t r : rows)
    total += cross_entropy(model, model.logits(ds.features.row(r)), ds.labels[r]);
  return total / static_cast<double>(rows.size());
}

}  // namespace detail

// Plain mini-batch gradient descent on cross-entropy over the training split.
// Rows are reshuffled every epoch from the config seed.
inline TrainResult train_with_history(const Dataset& ds, const TrainConfig& config) {
  config.validate();
  if (ds.train.empty()) throw DataError("train: empty training split");
  for (int l : ds.labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= ds.num_classes) {
      throw DataError("train: label out of range");
    }
  }
  const Rng root(config.seed);
  MLPModel model = MLPModel::Initialize(ds.num_features(), config.hidden_units,
                                        ds.num_classes, root.split("init"));
  const std::size_t m = model.inputs(), hdim = model.hidden(), o = model.outputs();

  TrainResult result;
  Matrix gw1(m, hdim), gw2(hdim, o);
  Vector gb1(hdim), gb2(o), dz(o), dh(hdim);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    Rng shuffle = root.split("epoch").split(epoch);
    const auto order = shuffle.permutation(ds.train.size());
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::fill(gw1.data().begin(), gw1.data().end(), 0.0);
      std::fill(gw2.data().begin(), gw2.data().end(), 0.0);
      std::fill(gb1.begin(), gb1.end(), 0.0);
      std::fill(gb2.begin(), gb2.end(), 0.0);
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t r = ds.train[order[k]];
        auto x = ds.features.row(r);
        const Vector pre = model.hidden_preactivation(x);
        Vector act(hdim);
        for (std::size_t h = 0; h < hdim; ++h) act[h] = pre[h] > 0.0 ? pre[h] : 0.0;
        Vector z = model.b2();
        for (std::size_t h = 0; h < hdim; ++h)
          for (std::size_t j = 0; j < o; ++j) z[j] += act[h] * model.w2()(h, j);
        const Vector p = model.proba_from_logits(z);
        if (model.kind() == OutputKind::kSigmoidBinary) {
          dz[0] = p[1] - (ds.labels[r] == 1 ? 1.0 : 0.0);
        } else {
          for (std::size_t j = 0; j < o; ++j)
            dz[j] = p[j] - (static_cast<int>(j) == ds.labels[r] ? 1.0 : 0.0);
        }
        for (std::size_t h = 0; h < hdim; ++h) {
          double back = 0.0;
          for (std::size_t j = 0; j < o; ++j) {
            gw2(h, j) += act[h] * dz[j];
            back += model.w2()(h, j) * dz[j];
          }
          dh[h] = pre[h] > 0.0 ? back : 0.0;
          gb1[h] += dh[h];
        }
        for (std::size_t j = 0; j < o; ++j) gb2[j] += dz[j];
        for (std::size_t i = 0; i < m; ++i) {
          const double xi = x[i];
          if (xi == 0.0) continue;
          auto g = gw1.row(i);
          for (std::size_t h = 0; h < hdim; ++h) g[h] += xi * dh[h];
        }
      }
      const double step = config.learning_rate / static_cast<double>(end - start);
      auto apply = [step](std::vector<double>& param, const std::vector<double>& grad) {
        for (std::size_t i = 0; i < param.size(); ++i) param[i] -= step * grad[i];
      };
      apply(model.w1().data(), gw1.data());
      apply(model.w2().data(), gw2.data());
      apply(model.b1(), gb1);
      apply(model.b2(), gb2);
    }
    const double loss = detail::mean_loss(model, ds, ds.train);
    if (!std::isfinite(loss) || !model.all_finite()) {
      throw TrainingError("training diverged at epoch " + std::to_string(epoch + 1));
    }
    result.epoch_loss.push_back(loss);
  }
  result.model = std::move(model);
  return result;
}

inline MLPModel train(const Dataset& ds, const TrainConfig& config) {
  return train_with_history(ds, config).model;
}

}  // namespace tabattr
