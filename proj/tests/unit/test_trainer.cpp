#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <set>

#include "mvseg/synthbench.hpp"
#include "mvseg/trainer.hpp"

using namespace mvseg;

namespace {

// Single-level net whose only blobs are tiny, so updates are easy to follow.
ToyNetParams scalar_params() {
  ToyNetConfig c;
  c.widths = {1};
  c.kernel = 1;
  c.rgb_channels = 1;
  c.depth_channels = 1;
  return ToyNetParams(c);
}

ToyNetParams filled(const ToyNetParams& like, double v) {
  ToyNetParams g(like.config());
  for (std::size_t b = 0; b < g.blob_count(); ++b) {
    for (double& x : g.blob(b).data()) x = v;
  }
  return g;
}

TrainConfig plain(double lr, double momentum, double decay) {
  TrainConfig c;
  c.learning_rate = lr;
  c.momentum = momentum;
  c.weight_decay = decay;
  return c;
}

}  // namespace

TEST(Sgd, ZeroGradientKeepsParams) {
  ToyNetParams p = filled(scalar_params(), 0.5);
  const ToyNetParams before = p;
  SgdState st;
  sgd_step(p, filled(p, 0.0), st, plain(0.1, 0.9, 0.0));
  EXPECT_TRUE(p == before);
}

TEST(Sgd, PlainStep) {
  ToyNetParams p = filled(scalar_params(), 0.0);
  SgdState st;
  sgd_step(p, filled(p, 1.0), st, plain(0.1, 0.0, 0.0));
  EXPECT_DOUBLE_EQ(p.blob(0).data()[0], -0.1);
}

TEST(Sgd, MomentumTwoSteps) {
  ToyNetParams p = filled(scalar_params(), 0.0);
  SgdState st;
  const ToyNetParams g = filled(p, 1.0);
  sgd_step(p, g, st, plain(0.1, 0.9, 0.0));
  sgd_step(p, g, st, plain(0.1, 0.9, 0.0));
  for (std::size_t b = 0; b < p.blob_count(); ++b) EXPECT_NEAR(p.blob(b).data()[0], -0.29, 1e-15);
}

TEST(Sgd, WeightDecayShrinks) {
  ToyNetParams p = filled(scalar_params(), 2.0);
  SgdState st;
  sgd_step(p, filled(p, 0.0), st, plain(0.1, 0.0, 0.5));
  EXPECT_DOUBLE_EQ(p.blob(0).data()[0], 2.0 - 0.1 * 0.5 * 2.0);
}

TEST(Sgd, NonFiniteGradientNamesBlob) {
  ToyNetParams p = scalar_params();
  ToyNetParams g = filled(p, 0.0);
  g.blob(3).data()[0] = std::numeric_limits<double>::quiet_NaN();
  SgdState st;
  try {
    sgd_step(p, g, st, plain(0.1, 0.9, 0.0));
    FAIL() << "expected NonFiniteGradientError";
  } catch (const NonFiniteGradientError& e) {
    EXPECT_NE(std::string(e.what()).find(p.name(3)), std::string::npos);
  }
}

TEST(Curriculum, WindowGrowsEveryFiveEpochs) {
  const TrainConfig c;
  EXPECT_EQ(curriculum_window(100, 0, c), 10u);
  EXPECT_EQ(curriculum_window(100, 4, c), 10u);
  EXPECT_EQ(curriculum_window(100, 5, c), 20u);
  EXPECT_EQ(curriculum_window(100, 12, c), 30u);
  EXPECT_EQ(curriculum_window(15, 50, c), 15u);
  EXPECT_EQ(curriculum_window(4, 0, c), 4u);
}

TEST(Curriculum, SamplerDrawsDistinctSortedFromWindow) {
  TrainConfig c;
  c.neighbors_per_sequence = 4;
  std::mt19937_64 rng(1);
  std::set<std::size_t> seen;
  for (int i = 0; i < 500; ++i) {
    const auto idx = curriculum_sampler(40, 0, c, rng);
    ASSERT_EQ(idx.size(), 4u);
    for (std::size_t j = 0; j < idx.size(); ++j) {
      EXPECT_LT(idx[j], 10u);
      if (j > 0) EXPECT_LT(idx[j - 1], idx[j]);
      seen.insert(idx[j]);
    }
  }
  EXPECT_EQ(seen.size(), 10u);
  EXPECT_EQ(curriculum_sampler(2, 0, c, rng).size(), 2u);
  EXPECT_THROW(curriculum_sampler(0, 0, c, rng), DegenerateSampleError);
}

TEST(TrainLog, LineFormatRoundTrips) {
  const IterationRecord rec{12, 0.1 + 0.2, 1e-3};
  const std::string line = format_log_line(rec);
  EXPECT_EQ(line.rfind("12 ", 0), 0u);
  std::size_t it = 0;
  double loss = 0, lr = 0;
  ASSERT_EQ(std::sscanf(line.c_str(), "%zu %lf %lf", &it, &loss, &lr), 3);
  EXPECT_EQ(loss, rec.loss);
  EXPECT_EQ(lr, rec.learning_rate);
}

TEST(UniformSample, Indices) {
  EXPECT_EQ(uniform_sample_indices(10, 3), (std::vector<std::size_t>{0, 5, 9}));
  EXPECT_EQ(uniform_sample_indices(4, 10), (std::vector<std::size_t>{0, 1, 2, 3}));
  EXPECT_EQ(uniform_sample_indices(7, 1), (std::vector<std::size_t>{0}));
  EXPECT_TRUE(uniform_sample_indices(0, 3).empty());
  EXPECT_TRUE(uniform_sample_indices(5, 0).empty());
}

TEST(Train, DeterministicAndLogged) {
  ToyDataConfig dc;
  dc.width = 16;
  dc.height = 16;
  dc.neighbors = 3;
  const auto seqs = make_toy_sequences(3, dc, 9);
  ToyNetConfig nc;
  nc.num_classes = dc.num_classes;
  nc.widths = {4, 6};
  TrainConfig tc;
  tc.mode = ConsistencyMode::kBayes;
  tc.epochs = 2;
  tc.seed = 4;
  std::mt19937_64 r1(3), r2(3);
  std::vector<IterationRecord> log1, log2;
  const ToyNetParams a = train(ToyNetParams::he_init(nc, r1), seqs, tc, [&](const IterationRecord& r) { log1.push_back(r); });
  const ToyNetParams b = train(ToyNetParams::he_init(nc, r2), seqs, tc, [&](const IterationRecord& r) { log2.push_back(r); });
  EXPECT_TRUE(a == b);
  ASSERT_EQ(log1.size(), 4u);  // 2 epochs x ceil(3 / 2) batches
  for (std::size_t i = 0; i < log1.size(); ++i) {
    EXPECT_EQ(log1[i].iteration, i);
    EXPECT_EQ(log1[i].loss, log2[i].loss);
    EXPECT_TRUE(std::isfinite(log1[i].loss));
  }
}

TEST(Train, RejectsBadConfig) {
  TrainConfig tc;
  tc.learning_rate = 0;
  EXPECT_THROW(tc.validate(), ConfigError);
  tc = TrainConfig();
  tc.momentum = 1.0;
  EXPECT_THROW(tc.validate(), ConfigError);
  ToyNetConfig nc;
  std::mt19937_64 rng(1);
  EXPECT_THROW(train(ToyNetParams::he_init(nc, rng), {}, TrainConfig()), DegenerateSampleError);
}

TEST(Evaluate, FusedWithNoNeighborsEqualsSingle) {
  ToyDataConfig dc;
  dc.width = 16;
  dc.height = 16;
  dc.neighbors = 4;
  const auto seqs = make_toy_sequences(2, dc, 10);
  ToyNetConfig nc;
  nc.num_classes = dc.num_classes;
  nc.widths = {4, 6};
  std::mt19937_64 rng(2);
  const ToyNetParams p = ToyNetParams::he_init(nc, rng);
  const FusedEvaluation one = evaluate_fused(p, seqs, 1);
  EXPECT_EQ(one.single_view, one.fused);
  const FusedEvaluation all = evaluate_fused(p, seqs);
  EXPECT_EQ(all.single_view, one.single_view);
}
