#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>
#include <set>

#include "lasgd/oracles.hpp"
#include "lasgd/problem.hpp"
#include "lasgd/schedule.hpp"

using namespace lasgd;

namespace {

ParamVector random_vector(std::mt19937_64& rng, std::size_t d, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  ParamVector v(d);
  for (std::size_t i = 0; i < d; ++i) v[i] = n(rng);
  return v;
}

std::vector<std::size_t> random_batch(std::mt19937_64& rng, std::size_t n, std::size_t size) {
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(size);
  return all;
}

}  // namespace

TEST(LeastSquares, IdentitySystem) {
  const OraclePtr f = least_squares_oracle(Matrix::identity(2), {0.0, 0.0});
  const Evaluation e = f->evaluate_full({3, -4});
  // Batch-mean normalization: the summed objective 12.5 and gradient [3,-4] divided by |B| = 2.
  EXPECT_DOUBLE_EQ(2.0 * e.loss, 12.5);
  EXPECT_EQ(blend(2.0, e.grad, 0.0, e.grad), (ParamVector{3, -4}));
}

TEST(LeastSquares, ExactSolutionHasZeroLossAndGradient) {
  Matrix a(3, 2);
  a(0, 0) = 1, a(0, 1) = 2, a(1, 0) = -1, a(1, 1) = 0.5, a(2, 0) = 3, a(2, 1) = 1;
  const ParamVector x{2, -1};
  std::vector<double> b(3);
  for (std::size_t i = 0; i < 3; ++i) b[i] = a(i, 0) * x[0] + a(i, 1) * x[1];
  const Evaluation e = least_squares_oracle(a, b)->evaluate_full(x);
  EXPECT_EQ(e.loss, 0.0);
  EXPECT_EQ(e.grad.max_abs(), 0.0);
}

TEST(LeastSquares, NoiselessGroundTruthHasZeroLoss) {
  const Dataset data = make_synthetic(3, 64, 5, 0.0, TaskKind::Regression);
  const OraclePtr f = least_squares_oracle(data.features, data.targets);
  EXPECT_LT(f->full_loss(data.ground_truth), 1e-28);
}

TEST(LeastSquares, ShapeMismatchThrows) {
  EXPECT_THROW(least_squares_oracle(Matrix(3, 2), {1.0, 2.0}), std::invalid_argument);
  const OraclePtr f = least_squares_oracle(Matrix::identity(2), {0.0, 0.0});
  EXPECT_THROW(f->evaluate_full({1, 2, 3}), DimensionError);
  EXPECT_THROW(f->evaluate({1, 2}, {}), std::invalid_argument);
}

TEST(Logistic, ZeroParametersGiveLogTwo) {
  const auto data = std::make_shared<Dataset>(make_synthetic(4, 50, 6, 0.5, TaskKind::Classification));
  const OraclePtr f = logistic_oracle(data);
  std::mt19937_64 rng(1);
  for (std::size_t size : {1, 7, 50}) {
    EXPECT_NEAR(f->loss(ParamVector(6), random_batch(rng, 50, size)), std::log(2.0), 1e-15);
  }
}

TEST(Logistic, SaturatedCorrectPrediction) {
  auto data = std::make_shared<Dataset>();
  data->kind = TaskKind::Classification;
  data->features = Matrix(1, 3);
  data->features(0, 0) = 1.0;
  data->targets = {1.0};
  const Evaluation e = logistic_oracle(data)->evaluate_full({40, 0, 0});
  EXPECT_LT(e.loss, 1e-16);
  EXPECT_GE(e.loss, 0.0);
  EXPECT_LT(e.grad.max_abs(), 1e-16);
}

TEST(Logistic, RejectsNonBinaryTargets) {
  auto data = std::make_shared<Dataset>(make_synthetic(4, 10, 2, 0.0, TaskKind::Classification));
  auto bad = std::make_shared<Dataset>(*data);
  bad->targets[0] = 0.5;
  EXPECT_THROW(logistic_oracle(bad), std::invalid_argument);
}

TEST(Logistic, NoiselessClassificationIsLearnableByGradientDescent) {
  const auto data = std::make_shared<Dataset>(make_synthetic(9, 1024, 8, 0.0, TaskKind::Classification));
  const OraclePtr f = logistic_oracle(data);
  ParamVector x(8);
  for (int step = 0; step < 200; ++step) x.add_scaled(-5.0, f->evaluate_full(x).grad);
  EXPECT_LT(f->full_loss(x), 0.05);
}

TEST(FiniteDiff, EveryOracleAgreesOnRandomDraws) {
  std::mt19937_64 rng(77);
  const auto reg = std::make_shared<Dataset>(make_synthetic(1, 200, 8, 0.3, TaskKind::Regression));
  const auto cls = std::make_shared<Dataset>(make_synthetic(2, 200, 8, 0.3, TaskKind::Classification));
  const OraclePtr ls = least_squares_oracle(reg->features, reg->targets);
  const OraclePtr lg = logistic_oracle(cls);
  const OraclePtr mlp = mlp_oracle({{8, 16, 1}, true}, cls);
  for (int draw = 0; draw < 10; ++draw) {
    const auto batch = random_batch(rng, 200, 16);
    EXPECT_LT(finite_diff_check(*ls, random_vector(rng, 8), batch), 1e-8);
    EXPECT_LT(finite_diff_check(*lg, random_vector(rng, 8), batch), 1e-6);
    EXPECT_LT(finite_diff_check(*mlp, random_vector(rng, mlp->dim(), 0.5), batch), 1e-4);
  }
}

TEST(FiniteDiff, ProbeModeForLargeModels) {
  std::mt19937_64 rng(3);
  const auto cls = std::make_shared<Dataset>(make_synthetic(2, 100, 20, 0.3, TaskKind::Classification));
  const OraclePtr mlp = mlp_oracle({{20, 32, 1}, true}, cls);
  ASSERT_GT(mlp->dim(), 512u);
  EXPECT_LT(finite_diff_check(*mlp, mlp->initial_params(4), random_batch(rng, 100, 10)), 1e-4);
}

TEST(Mlp, LinearNetworkMatchesLeastSquares) {
  const auto data = std::make_shared<Dataset>(make_synthetic(5, 40, 6, 0.2, TaskKind::Regression));
  const OraclePtr mlp = mlp_oracle({{6, 1}, false}, data);
  const OraclePtr ls = least_squares_oracle(data->features, data->targets);
  ASSERT_EQ(mlp->dim(), ls->dim());
  std::mt19937_64 rng(8);
  for (int draw = 0; draw < 5; ++draw) {
    const ParamVector x = random_vector(rng, 6);
    const auto batch = random_batch(rng, 40, 13);
    const Evaluation a = mlp->evaluate(x, batch), b = ls->evaluate(x, batch);
    EXPECT_NEAR(a.loss, b.loss, 1e-12 * std::max(1.0, b.loss));
    for (std::size_t j = 0; j < 6; ++j) EXPECT_NEAR(a.grad[j], b.grad[j], 1e-12 * std::max(1.0, b.grad.max_abs()));
  }
}

TEST(Mlp, ZeroInputsAndBiasesGiveZeroActivationLoss) {
  auto data = std::make_shared<Dataset>();
  data->kind = TaskKind::Regression;
  data->features = Matrix(4, 3);
  data->targets = {1.0, -2.0, 0.5, 0.0};
  const OraclePtr mlp = mlp_oracle({{3, 5, 1}, true}, data);
  ParamVector x = mlp->initial_params(1);
  for (std::size_t i = 15; i < 20; ++i) x[i] = 0.0;  // hidden biases
  x[x.dim() - 1] = 0.0;                             // output bias
  // Zero pre-activations, so the output is 0 and the loss is mean(t^2)/2.
  EXPECT_DOUBLE_EQ(mlp->full_loss(x), (1.0 + 4.0 + 0.25) / 8.0);
}

TEST(Mlp, ParameterCount) {
  EXPECT_EQ((MlpShape{{8, 16, 1}, true}).num_params(), 8u * 16 + 16 + 16 + 1);
  EXPECT_EQ((MlpShape{{8, 16, 1}, false}).num_params(), 8u * 16 + 16);
}

TEST(Oracle, EvaluationIsPure) {
  const auto cls = std::make_shared<Dataset>(make_synthetic(2, 60, 5, 0.3, TaskKind::Classification));
  const OraclePtr mlp = mlp_oracle({{5, 7, 1}, true}, cls);
  const ParamVector x = mlp->initial_params(9);
  const std::vector<std::size_t> batch{3, 1, 4, 1, 5, 9};
  const Evaluation a = mlp->evaluate(x, batch), b = mlp->evaluate(x, batch);
  EXPECT_EQ(a.loss, b.loss);
  EXPECT_EQ(a.grad, b.grad);
  EXPECT_EQ(a.grad.dim(), x.dim());
}

TEST(Synthetic, SameSeedIsBitIdentical) {
  const Dataset a = make_synthetic(42, 100, 7, 0.1, TaskKind::Regression);
  const Dataset b = make_synthetic(42, 100, 7, 0.1, TaskKind::Regression);
  EXPECT_EQ(a.features.values, b.features.values);
  EXPECT_EQ(a.targets, b.targets);
  EXPECT_EQ(a.ground_truth, b.ground_truth);
  const Dataset c = make_synthetic(43, 100, 7, 0.1, TaskKind::Regression);
  EXPECT_NE(a.targets, c.targets);
}

TEST(Synthetic, ShardsPartitionTheSamples) {
  const Dataset data = make_synthetic(1, 103, 2, 0.0, TaskKind::Regression);
  for (std::size_t P : {1, 2, 5, 8, 103}) {
    std::set<std::size_t> seen;
    std::size_t total = 0;
    for (std::size_t r = 0; r < P; ++r) {
      const auto shard = data.shard_of(r, P);
      EXPECT_FALSE(shard.empty());
      total += shard.size();
      seen.insert(shard.begin(), shard.end());
    }
    EXPECT_EQ(total, 103u);
    EXPECT_EQ(seen.size(), 103u);
  }
}

TEST(Synthetic, CsvRoundTripIsExact) {
  const Dataset data = make_synthetic(6, 20, 4, 0.7, TaskKind::Classification);
  const auto path = std::filesystem::temp_directory_path() / "lasgd_roundtrip.csv";
  write_dataset_csv(data, path);
  const Dataset back = read_dataset_csv(path, TaskKind::Classification);
  std::filesystem::remove(path);
  EXPECT_EQ(back.features.values, data.features.values);
  EXPECT_EQ(back.targets, data.targets);
  EXPECT_EQ(back.num_features(), 4u);
}

TEST(Problem, BuildMatchesSpec) {
  ProblemSpec ps;
  ps.kind = ProblemKind::Mlp;
  ps.n = 64;
  ps.d = 4;
  ps.hidden = {6};
  ps.batch_size = 8;
  const Problem p = build_problem(ps);
  EXPECT_EQ(p.data->size(), 64u);
  EXPECT_EQ(p.oracle->dim(), 4u * 6 + 6 + 6 + 1);
  EXPECT_EQ(p.x0.dim(), p.oracle->dim());
  EXPECT_EQ(parse_problem_kind("least_squares"), ProblemKind::LeastSquares);
  EXPECT_FALSE(parse_problem_kind("resnet").has_value());
}

TEST(LrSchedule, WarmupPeakAndDecay) {
  LrSchedule s;
  s.base_lr = 0.1;
  s.scale_nodes = 16;
  s.warmup_epochs = 5;
  s.decay_epochs = {30, 60, 80};
  s.decay_factor = 10;
  s.steps_per_epoch = 100;
  EXPECT_DOUBLE_EQ(lr_at(s, 0), 0.1);
  EXPECT_DOUBLE_EQ(lr_at(s, 500), 1.6);
  EXPECT_DOUBLE_EQ(lr_at(s, 250), 0.1 + 1.5 * 0.5);
  EXPECT_DOUBLE_EQ(lr_at(s, 3100), 0.16);
  EXPECT_NEAR(lr_at(s, 9000), 0.0016, 1e-15);
}

TEST(LrSchedule, AlwaysPositiveAndMonotoneAfterWarmup) {
  LrSchedule s;
  s.base_lr = 0.05;
  s.scale_nodes = 8;
  s.warmup_epochs = 2.5;
  s.decay_epochs = {3, 7};
  s.decay_factor = 4;
  s.steps_per_epoch = 13;
  double prev = s.peak_lr();
  for (std::uint64_t step = 0; step < 200; ++step) {
    const double lr = lr_at(s, step);
    EXPECT_GT(lr, 0.0);
    EXPECT_EQ(lr, lr_at(s, step));
    if (static_cast<double>(step) / 13.0 >= 2.5) {
      EXPECT_LE(lr, prev);
      prev = lr;
    }
  }
}

TEST(LrSchedule, ValidateListsViolations) {
  LrSchedule s;
  s.base_lr = -1;
  s.decay_epochs = {5, 2};
  s.steps_per_epoch = 0;
  EXPECT_EQ(s.validate().size(), 3u);
}

TEST(BatchSampler, EpochCoversShardWithoutReplacement) {
  std::vector<std::size_t> shard(20);
  std::iota(shard.begin(), shard.end(), 100);
  BatchSampler s(shard, 5, 1);
  EXPECT_EQ(s.batches_per_epoch(), 4u);
  std::multiset<std::size_t> seen;
  for (int b = 0; b < 4; ++b) {
    for (std::size_t i : s.next()) seen.insert(i);
  }
  EXPECT_EQ(seen, std::multiset<std::size_t>(shard.begin(), shard.end()));
  EXPECT_EQ(s.epoch(), 0u);
  s.next();
  EXPECT_EQ(s.epoch(), 1u);
}

TEST(BatchSampler, DropsPartialBatchAndIsSeeded) {
  std::vector<std::size_t> shard(11);
  std::iota(shard.begin(), shard.end(), 0);
  BatchSampler a(shard, 4, 9), b(shard, 4, 9);
  EXPECT_EQ(a.batches_per_epoch(), 2u);
  for (int i = 0; i < 10; ++i) {
    const auto x = a.next(), y = b.next();
    EXPECT_TRUE(std::equal(x.begin(), x.end(), y.begin(), y.end()));
  }
  BatchSampler whole(shard, 50, 1);
  EXPECT_EQ(whole.next().size(), 11u);
}
