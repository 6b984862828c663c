#include "tabattr/model.hpp"

#include <gtest/gtest.h>

#include <sstream>

#include "test_util.hpp"

namespace tabattr {
namespace {

using testing::RandomModel;
using testing::RandomVector;
using testing::SinglePathModel;

// Central differences of the target logit.
Vector FiniteDifferenceGradient(const MLPModel& m, const Vector& x, const Target& t,
                                double h = 1e-5) {
  Vector g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    Vector up = x, down = x;
    up[i] += h;
    down[i] -= h;
    g[i] = (m.target_logit(up, t) - m.target_logit(down, t)) / (2.0 * h);
  }
  return g;
}

// Smallest |z_h| over hidden units: distance (in pre-activation units) from a kink.
double KinkDistance(const MLPModel& m, const Vector& x) {
  double best = std::numeric_limits<double>::infinity();
  for (double z : m.hidden_preactivation(x)) best = std::min(best, std::abs(z));
  return best;
}

// Two well-separated Gaussian blobs along a random direction.
Dataset SeparableDataset(std::uint64_t seed) {
  Rng rng(seed);
  RawTable t;
  t.schema.label = "y";
  for (int j = 0; j < 2; ++j) {
    t.schema.features.push_back({"f" + std::to_string(j), FeatureKind::kContinuous, {}, {}});
    t.columns.emplace_back();
  }
  for (int r = 0; r < 600; ++r) {
    const bool pos = rng.uniform01() < 0.5;
    const double cx = pos ? 2.0 : -2.0;
    t.columns[0].numeric.push_back(cx + rng.normal(0.0, 0.5));
    t.columns[1].numeric.push_back(-cx + rng.normal(0.0, 0.5));
    t.labels.push_back(pos ? "1" : "0");
  }
  for (auto& c : t.columns) c.missing.assign(600, false);
  return split_train_test(t, 0.8, rng.split("split"));
}

double BinaryF1(const std::vector<int>& pred, const std::vector<int>& truth) {
  double tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    tp += pred[i] == 1 && truth[i] == 1;
    fp += pred[i] == 1 && truth[i] == 0;
    fn += pred[i] == 0 && truth[i] == 1;
  }
  return 2 * tp / (2 * tp + fp + fn);
}

TEST(LogitsTest, ZeroWeightsGiveZeroLogits) {
  const MLPModel m(Matrix(3, 4), Vector(4, 0.0), Matrix(4, 2), Vector(2, 0.0),
                   OutputKind::kSoftmaxMulticlass);
  const Vector z = m.logits(Vector{1, -2, 3});
  EXPECT_EQ(z, (Vector{0.0, 0.0}));
}

TEST(LogitsTest, SinglePathNetwork) {
  const MLPModel m = SinglePathModel(3);
  EXPECT_EQ(m.logits(Vector{2, 7, -1})[0], 2.0);
  EXPECT_EQ(m.logits(Vector{-2, 7, -1})[0], 0.0);
  EXPECT_THROW(m.logits(Vector{1, 2}), ShapeError);
}

TEST(LogitsTest, SigmoidLogitIsLogOdds) {
  const MLPModel m = RandomModel(5, 8, 2, 21);
  Rng rng(1);
  for (int k = 0; k < 20; ++k) {
    const Vector x = RandomVector(5, rng);
    Matrix batch(1, 5, x);
    const Matrix p = m.predict_proba(batch);
    const double log_odds = std::log(p(0, 1) / p(0, 0));
    EXPECT_NEAR(m.logits(x)[0], log_odds, 1e-6 * (1.0 + std::abs(log_odds)));
    // Class 0 is attributed through the negated logit.
    EXPECT_EQ(m.target_logit(x, m.target_for_class(0)), -m.logits(x)[0]);
  }
}

TEST(PredictTest, ZeroLogitsSoftmaxIsUniform) {
  const MLPModel m(Matrix(2, 3), Vector(3, 0.0), Matrix(3, 6), Vector(6, 0.0),
                   OutputKind::kSoftmaxMulticlass);
  const Matrix p = m.predict_proba(Matrix(1, 2));
  for (std::size_t c = 0; c < 6; ++c) EXPECT_NEAR(p(0, c), 1.0 / 6.0, 1e-15);
  EXPECT_EQ(m.predict_class(Vector{0.0, 0.0}), 0);
}

TEST(PredictTest, ZeroLogitSigmoidTiesToClassZero) {
  const MLPModel m(Matrix(2, 1), Vector{0.0}, Matrix(1, 1), Vector{0.0},
                   OutputKind::kSigmoidBinary);
  const Matrix p = m.predict_proba(Matrix(1, 2));
  EXPECT_EQ(p(0, 1), 0.5);
  EXPECT_EQ(m.predict_class(Vector{0.0, 0.0}), 0);
}

TEST(PredictTest, RowsSumToOne) {
  for (std::size_t classes : {2u, 3u, 6u}) {
    const MLPModel m = RandomModel(4, 10, classes, 30 + classes, 2.0);
    Rng rng(2);
    Matrix batch(100, 4);
    for (double& v : batch.data()) v = rng.normal(0.0, 3.0);
    const Matrix p = m.predict_proba(batch);
    ASSERT_EQ(p.cols(), classes);
    for (std::size_t r = 0; r < 100; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < classes; ++c) {
        EXPECT_GE(p(r, c), 0.0);
        EXPECT_LE(p(r, c), 1.0);
        s += p(r, c);
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
  EXPECT_THROW(RandomModel(4, 3, 2, 1).predict_proba(Matrix(2, 3)), ShapeError);
}

TEST(PredictTest, SoftmaxIsShiftInvariant) {
  MLPModel m = RandomModel(3, 5, 4, 40);
  Rng rng(3);
  Matrix batch(20, 3);
  for (double& v : batch.data()) v = rng.normal(0.0, 1.0);
  const Matrix before = m.predict_proba(batch);
  for (double& b : m.b2()) b += 3.75;
  const Matrix after = m.predict_proba(batch);
  EXPECT_LE(max_abs_diff(before.data(), after.data()), 1e-12);
}

TEST(GradientTest, SinglePathGradient) {
  const MLPModel m = SinglePathModel(4);
  EXPECT_EQ(m.input_gradient(Vector{2, 1, 1, 1}, std::size_t{0}), (Vector{1, 0, 0, 0}));
}

TEST(GradientTest, DeadRegionGivesZero) {
  MLPModel m = RandomModel(3, 6, 2, 50);
  for (double& b : m.b1()) b = -1e3;
  EXPECT_EQ(m.input_gradient(Vector{0.5, -0.5, 1.0}, std::size_t{0}), Vector(3, 0.0));
}

TEST(GradientTest, MatchesFiniteDifferences) {
  Rng rng(60);
  int checked = 0;
  for (std::uint64_t k = 0; checked < 50; ++k) {
    const std::size_t classes = 2 + k % 3;
    const MLPModel m = RandomModel(2 + k % 7, 4 + k % 9, classes, 100 + k);
    const Vector x = RandomVector(m.inputs(), rng);
    if (KinkDistance(m, x) < 1e-3) continue;
    for (std::size_t c = 0; c < classes; ++c) {
      const Target t = m.target_for_class(static_cast<int>(c));
      EXPECT_LE(max_abs_diff(m.input_gradient(x, t), FiniteDifferenceGradient(m, x, t)), 1e-5);
    }
    ++checked;
  }
}

TEST(ModelTest, InvalidShapesAndClasses) {
  EXPECT_THROW(MLPModel(Matrix(2, 3), Vector(2), Matrix(3, 1), Vector(1),
                        OutputKind::kSigmoidBinary),
               ShapeError);
  EXPECT_THROW(MLPModel(Matrix(2, 3), Vector(3), Matrix(3, 2), Vector(2),
                        OutputKind::kSigmoidBinary),
               ShapeError);
  EXPECT_THROW(MLPModel::Initialize(2, 3, 1, Rng(1)), ParameterError);
  const MLPModel m = RandomModel(2, 3, 2, 1);
  EXPECT_THROW(m.target_for_class(2), ParameterError);
  EXPECT_THROW(m.input_gradient(Vector{0, 0}, std::size_t{1}), ShapeError);
}

TEST(TrainTest, SeparableDataReachesHighF1) {
  const Dataset ds = SeparableDataset(70);
  TrainConfig cfg;
  cfg.hidden_units = 8;
  cfg.seed = 1;
  const MLPModel m = train(ds, cfg);
  const auto pred = m.predict_class(ds.subset(ds.test));
  EXPECT_GE(BinaryF1(pred, ds.labels_of(ds.test)), 0.95);
}

TEST(TrainTest, SyntheticDefaultsReachNinetyPercent) {
  const Dataset ds = synth_dataset(2000, 10, {0, 1}, Rng(5));
  TrainConfig cfg;
  cfg.seed = 3;
  const MLPModel m = train(ds, cfg);
  const auto pred = m.predict_class(ds.subset(ds.test));
  EXPECT_GE(BinaryF1(pred, ds.labels_of(ds.test)), 0.9);
}

TEST(TrainTest, ZeroEpochsReturnsInitialization) {
  const Dataset ds = SeparableDataset(71);
  TrainConfig cfg;
  cfg.epochs = 0;
  cfg.hidden_units = 5;
  cfg.seed = 9;
  const MLPModel m = train(ds, cfg);
  EXPECT_EQ(m, MLPModel::Initialize(2, 5, 2, Rng(9).split("init")));
}

TEST(TrainTest, DeterministicGivenSeed) {
  const Dataset ds = SeparableDataset(72);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.seed = 4;
  EXPECT_EQ(train(ds, cfg), train(ds, cfg));
  TrainConfig other = cfg;
  other.seed = 5;
  EXPECT_FALSE(train(ds, cfg) == train(ds, other));
}

TEST(TrainTest, LossDecreases) {
  const Dataset ds = synth_dataset(500, 6, {0, 1}, Rng(6));
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.seed = 2;
  const TrainResult r = train_with_history(ds, cfg);
  ASSERT_EQ(r.epoch_loss.size(), 20u);
  EXPECT_LE(r.epoch_loss.back(), r.epoch_loss.front());
}

TEST(TrainTest, MulticlassSoftmax) {
  Rng rng(7);
  RawTable t;
  t.schema.label = "y";
  t.schema.features.push_back({"a", FeatureKind::kContinuous, {}, {}});
  t.schema.features.push_back({"b", FeatureKind::kContinuous, {}, {}});
  t.columns.resize(2);
  for (int r = 0; r < 600; ++r) {
    const int c = static_cast<int>(rng.index(3));
    const double angle = 2.0 * std::numbers::pi * c / 3.0;
    t.columns[0].numeric.push_back(3.0 * std::cos(angle) + rng.normal(0.0, 0.5));
    t.columns[1].numeric.push_back(3.0 * std::sin(angle) + rng.normal(0.0, 0.5));
    t.labels.push_back(std::to_string(c));
  }
  for (auto& c : t.columns) c.missing.assign(600, false);
  const Dataset ds = split_train_test(t, 0.8, Rng(8));
  TrainConfig cfg;
  cfg.seed = 1;
  const MLPModel m = train(ds, cfg);
  EXPECT_EQ(m.kind(), OutputKind::kSoftmaxMulticlass);
  const auto pred = m.predict_class(ds.subset(ds.test));
  const auto truth = ds.labels_of(ds.test);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == truth[i];
  EXPECT_GE(static_cast<double>(correct) / static_cast<double>(pred.size()), 0.95);
}

TEST(TrainTest, DivergenceReportsEpoch) {
  const Dataset ds = SeparableDataset(73);
  TrainConfig cfg;
  cfg.learning_rate = 1e300;
  cfg.seed = 1;
  try {
    train(ds, cfg);
    FAIL() << "expected divergence";
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch 1"), std::string::npos) << e.what();
  }
}

TEST(TrainTest, InvalidConfig) {
  const Dataset ds = SeparableDataset(74);
  TrainConfig cfg;
  cfg.batch_size = 0;
  EXPECT_THROW(train(ds, cfg), ParameterError);
  cfg = TrainConfig{};
  cfg.learning_rate = -1.0;
  EXPECT_THROW(train(ds, cfg), ParameterError);
}

TEST(SaveLoadTest, RoundTripIsExact) {
  for (std::size_t classes : {2u, 4u}) {
    const MLPModel m = RandomModel(5, 7, classes, 80 + classes);
    std::stringstream buf;
    m.save(buf);
    EXPECT_EQ(MLPModel::Load(buf), m);
  }
  testing::TempDir dir("model");
  const MLPModel m = RandomModel(3, 2, 2, 90);
  m.save(dir.file("m.txt"));
  EXPECT_EQ(MLPModel::Load(dir.file("m.txt")), m);
}

TEST(SaveLoadTest, RejectsCorruptFiles) {
  std::istringstream bad_header("not-a-model 1\n");
  EXPECT_THROW(MLPModel::Load(bad_header), IoError);
  std::stringstream buf;
  RandomModel(2, 2, 2, 1).save(buf);
  const std::string text = buf.str();
  std::istringstream truncated(text.substr(0, text.size() / 2));
  EXPECT_THROW(MLPModel::Load(truncated), IoError);
  EXPECT_THROW(MLPModel::Load(std::string("/nonexistent/model.txt")), IoError);
}

}  // namespace
}  // namespace tabattr
