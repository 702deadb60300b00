#include "metaalign/maml.hpp"

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "metaalign/synth_gen.hpp"
#include "support/oracles.hpp"

namespace metaalign {
namespace {

using testing::CentralDifference;
using testing::FlatGradient;
using testing::MaxRelativeError;
using testing::RandomEpisode;
using testing::RandomModel;

TrainConfig SmallConfig(std::size_t steps, double alpha, GradOrder order = GradOrder::kSecond) {
  TrainConfig c;
  c.inner_steps = steps;
  c.inner_lr = alpha;
  c.inner_tau = 0.5;
  c.outer_tau = 0.3;
  c.grad_order = order;
  return c;
}

double SupportLoss(const ModelParams& p, const EpisodeData& ep, const MetricParams& metric, double tau) {
  return EvaluateContrastive(p.heads, metric, ep.support, ep.support_labels, ep.class_texts, tau, GradScope::kNone)
      .value;
}

TEST(Maml, ZeroStepsLeavesMetricUntouched) {
  std::mt19937_64 rng(1);
  const auto p = RandomModel(3, MetricKind::kBilinear, rng);
  const auto ep = RandomEpisode(3, 3, 2, 2, rng);
  const auto r = InnerAdapt(p, ep, SmallConfig(0, 0.5));
  EXPECT_EQ(r.adapted.values, p.metric.values);
  EXPECT_TRUE(r.tape.steps.empty());
}

TEST(Maml, ZeroLearningRateLeavesMetricUntouched) {
  std::mt19937_64 rng(2);
  const auto p = RandomModel(3, MetricKind::kBilinear, rng);
  const auto ep = RandomEpisode(3, 3, 2, 2, rng);
  const auto r = InnerAdapt(p, ep, SmallConfig(5, 0.0));
  EXPECT_EQ(r.adapted.values, p.metric.values);
  EXPECT_EQ(r.tape.steps.size(), 5u);
}

TEST(Maml, SmallStepsNeverIncreaseSupportLoss) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    const auto p = RandomModel(4, MetricKind::kBilinear, rng);
    const auto ep = RandomEpisode(4, 5, 3, 1, rng);
    const auto r = InnerAdapt(p, ep, SmallConfig(25, 0.01));
    const auto data = EpisodeData::From(ep);
    double prev = r.tape.steps.front().support_loss;
    for (std::size_t k = 1; k < r.tape.steps.size(); ++k) {
      EXPECT_LE(r.tape.steps[k].support_loss, prev) << "seed " << seed << " step " << k;
      prev = r.tape.steps[k].support_loss;
    }
    EXPECT_LE(SupportLoss(p, data, r.adapted, 0.5), prev);
  }
}

TEST(Maml, InnerLoopUpdatesOnlyMetric) {
  std::mt19937_64 rng(3);
  const auto p = RandomModel(3, MetricKind::kBilinear, rng);
  const auto before = p.Flatten();
  const auto ep = RandomEpisode(3, 2, 2, 2, rng);
  const auto r = InnerAdapt(p, ep, SmallConfig(3, 0.5));
  EXPECT_EQ(p.Flatten(), before);
  EXPECT_NE(r.adapted.values, p.metric.values);
  (void)MetaTestAdapt(p, ep, SmallConfig(3, 0.5));
  EXPECT_EQ(p.Flatten(), before);
}

// Second-order outer gradient against central differences of the composite
// objective, over heads and metric parameters.
void CheckAgainstFiniteDifferences(MetricKind kind, Eigen::Index d, std::size_t steps, std::uint64_t seed,
                                   double tol) {
  std::mt19937_64 rng(seed);
  const auto p = RandomModel(d, kind, rng);
  const auto ep = EpisodeData::From(RandomEpisode(d, 2, 1, 2, rng));
  const auto config = SmallConfig(steps, 0.1);
  const auto analytic = FlatGradient(OuterGradient(p, ep, config).grads);
  const auto fd = CentralDifference(
      [&](const Eigen::VectorXd& flat) {
        ModelParams q = p;
        q.Unflatten(flat);
        return CompositeQueryLoss(q, ep, config);
      },
      p.Flatten(), 1e-5);
  EXPECT_LE(MaxRelativeError(analytic, fd), tol)
      << MetricKindName(kind) << " d=" << d << " steps=" << steps << " seed=" << seed;
}

TEST(Maml, SecondOrderMatchesFiniteDifferencesBilinear) {
  for (Eigen::Index d : {2, 3}) {
    for (std::size_t steps : {0u, 1u, 2u, 4u}) {
      for (std::uint64_t seed = 0; seed < 10; ++seed) CheckAgainstFiniteDifferences(MetricKind::kBilinear, d, steps, seed, 1e-4);
    }
  }
}

TEST(Maml, SecondOrderMatchesFiniteDifferencesMlpAndCosine) {
  for (std::size_t steps : {0u, 1u, 2u}) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      CheckAgainstFiniteDifferences(MetricKind::kMlp, 3, steps, 100 + seed, 1e-4);
      CheckAgainstFiniteDifferences(MetricKind::kCosine, 3, steps, 200 + seed, 1e-4);
    }
  }
}

TEST(Maml, FirstOrderDiffersOnceStepsArePositive) {
  std::mt19937_64 rng(4);
  const auto p = RandomModel(3, MetricKind::kBilinear, rng);
  const auto ep = RandomEpisode(3, 2, 1, 2, rng);
  const auto second = FlatGradient(OuterGradient(p, ep, SmallConfig(2, 0.1, GradOrder::kSecond)).grads);
  const auto first = FlatGradient(OuterGradient(p, ep, SmallConfig(2, 0.1, GradOrder::kFirst)).grads);
  EXPECT_GT((second - first).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Maml, ZeroStepsFirstAndSecondOrderAreBitIdentical) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    std::mt19937_64 rng(seed);
    const auto p = RandomModel(3, MetricKind::kBilinear, rng);
    const auto ep = RandomEpisode(3, 3, 2, 2, rng);
    const auto a = FlatGradient(OuterGradient(p, ep, SmallConfig(0, 0.5, GradOrder::kFirst)).grads);
    const auto b = FlatGradient(OuterGradient(p, ep, SmallConfig(0, 0.5, GradOrder::kSecond)).grads);
    ASSERT_EQ(a.size(), b.size());
    EXPECT_EQ(std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())), 0);
  }
}

TEST(Maml, OuterResultReportsLosses) {
  std::mt19937_64 rng(5);
  const auto p = RandomModel(3, MetricKind::kBilinear, rng);
  const auto ep = RandomEpisode(3, 3, 2, 4, rng);
  const auto zero = OuterGradient(p, ep, SmallConfig(0, 0.5));
  EXPECT_TRUE(std::isnan(zero.support_loss_initial));
  const auto r = OuterGradient(p, ep, SmallConfig(5, 0.5));
  EXPECT_LT(r.support_loss_final, r.support_loss_initial);
  EXPECT_GE(r.query_accuracy, 0.0);
  EXPECT_LE(r.query_accuracy, 1.0);
  EXPECT_NEAR(r.query_loss, CompositeQueryLoss(p, EpisodeData::From(ep), SmallConfig(5, 0.5)), 1e-12);
}

TEST(Maml, HugeLearningRateRaisesDivergence) {
  std::mt19937_64 rng(6);
  const auto p = RandomModel(3, MetricKind::kBilinear, rng);
  const auto ep = RandomEpisode(3, 3, 2, 2, rng);
  // one step pushes the logits past the double range
  auto config = SmallConfig(50, 1e308);
  config.inner_tau = 1e-300;
  try {
    InnerAdapt(p, ep, config);
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_LE(e.inner_step(), 50u);
  }
}

EmbeddingDataset ReferenceDataset() {
  SynthConfig s;  // 20 base / 5 novel, d = 16, rotation, seed 42
  return Generate(s);
}

TEST(Maml, OneTinyStepDescendsOnSeededEpisodes) {
  const auto ds = ReferenceDataset();
  TrainConfig config;
  config.inner_steps = 1;
  config.inner_lr = 1e-3;
  const auto model = InitModel(ds.visual_dim, ds.text_dim, config);
  const EpisodeStream stream(ds, Split::kBase, config.shape(), 2024, 100);
  for (std::size_t i = 0; i < stream.size(); ++i) {
    const auto ep = EpisodeData::From(stream.At(i));
    const auto r = InnerAdapt(model, ep, config);
    EXPECT_LE(SupportLoss(model, ep, r.adapted, config.inner_tau), r.tape.steps[0].support_loss) << i;
  }
}

TEST(Maml, InitModelShapes) {
  TrainConfig config;
  const auto same = InitModel(16, 16, config);
  EXPECT_EQ(same.heads.visual, Eigen::MatrixXd::Identity(16, 16));
  EXPECT_EQ(same.heads.text.rows(), 16);
  config.embed_dim = 8;
  const auto proj = InitModel(16, 12, config);
  EXPECT_EQ(proj.heads.visual.rows(), 8);
  EXPECT_EQ(proj.heads.visual.cols(), 16);
  EXPECT_EQ(proj.heads.text.cols(), 12);
  EXPECT_EQ(proj.metric.dim, 8);
  EXPECT_EQ(proj.size(), 8 * 16 + 8 * 12 + 64);
}

TEST(Maml, FlattenRoundTrips) {
  std::mt19937_64 rng(7);
  auto p = RandomModel(3, MetricKind::kMlp, rng);
  const auto flat = p.Flatten();
  ModelParams q = p;
  q.Unflatten(flat);
  EXPECT_EQ(q.Flatten(), flat);
  EXPECT_THROW(q.Unflatten(Eigen::VectorXd::Zero(3)), DimensionError);
}

TEST(Maml, ConfigValidation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.Validate());
  c.outer_tau = 0.0;
  EXPECT_THROW(c.Validate(), std::invalid_argument);
  c = {};
  c.n_way = 0;
  EXPECT_THROW(c.Validate(), std::invalid_argument);
  c = {};
  c.momentum = 1.0;
  EXPECT_THROW(c.Validate(), std::invalid_argument);
  EXPECT_EQ(ParseGradOrder("first"), GradOrder::kFirst);
  EXPECT_THROW(ParseGradOrder("third"), std::invalid_argument);
}

TrainConfig QuickTrain() {
  TrainConfig c;
  c.inner_steps = 3;
  c.episodes_per_epoch = 6;
  c.epochs = 2;
  c.m_query = 4;
  c.seed = 3;
  return c;
}

TEST(Maml, MetaTrainIsDeterministic) {
  const auto ds = ReferenceDataset();
  std::vector<TrainLogRecord> seen;
  const auto a = MetaTrain(ds, QuickTrain(), [&](const TrainLogRecord& r) { seen.push_back(r); });
  const auto b = MetaTrain(ds, QuickTrain());
  EXPECT_EQ(a.state.params.Flatten(), b.state.params.Flatten());
  EXPECT_EQ(a.state.completed_steps, 12u);
  ASSERT_EQ(a.log.size(), 12u);
  ASSERT_EQ(seen.size(), 12u);
  for (std::size_t i = 0; i < 12; ++i) {
    EXPECT_EQ(FormatTrainLogRow(a.log[i]), FormatTrainLogRow(b.log[i]));
    EXPECT_EQ(a.log[i].step, i);
  }
  EXPECT_NE(a.state.params.Flatten(), InitModel(16, 16, QuickTrain()).Flatten());
}

TEST(Maml, ResumeMatchesUninterruptedRun) {
  const auto ds = ReferenceDataset();
  const auto full = MetaTrain(ds, QuickTrain());
  auto half_config = QuickTrain();
  half_config.epochs = 1;
  const auto half = MetaTrain(ds, half_config);
  EXPECT_EQ(half.state.completed_steps, 6u);
  const auto resumed = MetaTrain(ds, QuickTrain(), {}, half.state);
  EXPECT_EQ(resumed.state.params.Flatten(), full.state.params.Flatten());
  ASSERT_EQ(resumed.log.size(), 6u);
  EXPECT_EQ(resumed.log.front().step, 6u);
}

TEST(Maml, MetaBatchAveragesSeveralEpisodes) {
  const auto ds = ReferenceDataset();
  auto c = QuickTrain();
  c.meta_batch = 3;
  c.epochs = 1;
  c.episodes_per_epoch = 2;
  const auto r = MetaTrain(ds, c);
  ASSERT_EQ(r.log.size(), 2u);
  EXPECT_EQ(r.log[1].episode_seed, 3u);
}

TEST(Maml, TrainLogCsvHeader) {
  EXPECT_EQ(CsvHeaderTrainLog(), "step,episode_seed,L_S_initial,L_S_final,L_Q,query_accuracy");
}

}  // namespace
}  // namespace metaalign
