#include <gtest/gtest.h>

#include <cmath>

#include "oracles/fixtures.hpp"
#include "oracles/infonce.hpp"
#include "rsalign/contrastive.hpp"
#include "rsalign/toy_train.hpp"

using namespace rsalign;

namespace {

Matrix<double> identical_rows(std::size_t n, std::size_t d) {
  Matrix<double> m(n, d, 0.0);
  for (std::size_t i = 0; i < n; ++i) m(i, 0) = 1.0;
  return m;
}

}  // namespace

TEST(L2Normalize, UnitRowsAndZeroRowError) {
  Matrix<double> m(2, 2);
  m(0, 0) = 3;
  m(0, 1) = 4;
  m(1, 0) = -2;
  const auto n = l2_normalize(m);
  EXPECT_DOUBLE_EQ(n(0, 0), 0.6);
  EXPECT_DOUBLE_EQ(n(0, 1), 0.8);
  EXPECT_DOUBLE_EQ(n(1, 0), -1.0);
  Matrix<double> z(3, 2, 0.0);
  z(0, 0) = z(2, 1) = 1;
  try {
    l2_normalize(z);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDegenerateRow);
    EXPECT_NE(std::string(e.what()).find("row 1"), std::string::npos) << e.what();
  }
}

TEST(Similarity, MatchesTripleLoop) {
  Rng rng(4);
  const auto a = fixture::random_unit_rows(rng, 7, 5);
  const auto b = fixture::random_unit_rows(rng, 9, 5);
  const auto s = similarity_matrix(a, b);
  for (std::size_t i = 0; i < 7; ++i) {
    for (std::size_t j = 0; j < 9; ++j) {
      double acc = 0;
      for (std::size_t k = 0; k < 5; ++k) acc += a(i, k) * b(j, k);
      EXPECT_NEAR(s(i, j), acc, 1e-12);
    }
  }
  EXPECT_THROW(similarity_matrix(a, Matrix<double>(2, 4, 0.0)), Error);
}

TEST(InfoNce, SingletonBatchIsZero) {
  EXPECT_EQ(info_nce(identical_rows(1, 3), identical_rows(1, 3), Temperature{}), 0.0);
}

TEST(InfoNce, EqualLogitsGiveLogN) {
  for (std::size_t n : {2u, 3u, 4u, 8u, 16u}) {
    EXPECT_NEAR(info_nce(identical_rows(n, 4), identical_rows(n, 4), Temperature{}), std::log(static_cast<double>(n)), 1e-12);
  }
  EXPECT_NEAR(info_nce(identical_rows(4, 4), identical_rows(4, 4), Temperature{}), 1.3862944, 1e-7);
}

TEST(InfoNce, OrthonormalPairsApproachZero) {
  Matrix<double> e(4, 4, 0.0);
  for (std::size_t i = 0; i < 4; ++i) e(i, i) = 1;
  const double loss = info_nce(e, e, Temperature::from_tau(0.01));
  EXPECT_GE(loss, 0.0);
  EXPECT_LT(loss, 1e-40);
}

TEST(InfoNce, MatchesScalarOracle) {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + rng.uniform_index(10);
    const auto zi = fixture::random_unit_rows(rng, n, 6);
    const auto zt = fixture::random_unit_rows(rng, n, 6);
    const double log_tau = rng.uniform(std::log(0.02), std::log(1.0));
    EXPECT_NEAR(info_nce(zi, zt, Temperature{log_tau}),
                oracle::info_nce(fixture::to_rows(zi), fixture::to_rows(zt), log_tau), 1e-10);
  }
}

TEST(InfoNce, NonNegativeAndStableForLargeLogits) {
  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const auto zi = fixture::random_unit_rows(rng, 12, 3);
    const auto zt = fixture::random_unit_rows(rng, 12, 3);
    const double loss = info_nce(zi, zt, Temperature::from_tau(1e-4));
    EXPECT_TRUE(std::isfinite(loss));
    EXPECT_GE(loss, 0.0);
  }
}

TEST(InfoNce, ShapeAndBatchErrors) {
  try {
    info_nce(Matrix<double>(0, 3), Matrix<double>(0, 3), Temperature{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kEmptyBatch);
  }
  EXPECT_THROW(info_nce(identical_rows(3, 2), identical_rows(2, 2), Temperature{}), Error);
  Matrix<double> not_unit(2, 2, 1.0);
  EXPECT_THROW(info_nce(not_unit, not_unit, Temperature{}), Error);
  EXPECT_NO_THROW(info_nce(not_unit, not_unit, Temperature{}, RowCheck::kNone));
}

TEST(InfoNce, GradientsMatchFiniteDifferences) {
  Rng rng(21);
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t n = 3 + rng.uniform_index(5);
    auto zi = fixture::random_unit_rows(rng, n, 4);
    auto zt = fixture::random_unit_rows(rng, n, 4);
    Temperature t{std::log(0.3)};
    const auto g = info_nce_grad(zi, zt, t);
    EXPECT_NEAR(g.loss, info_nce(zi, zt, t), 1e-12);
    auto f = [&] { return info_nce(zi, zt, t, RowCheck::kNone); };
    for (std::size_t k = 0; k < zi.values().size(); ++k) {
      EXPECT_NEAR(g.d_image.values()[k], oracle::central_difference(zi.values()[k], f, 1e-5), 1e-6);
      EXPECT_NEAR(g.d_text.values()[k], oracle::central_difference(zt.values()[k], f, 1e-5), 1e-6);
    }
    EXPECT_NEAR(g.d_log_tau, oracle::central_difference(t.log_tau, f, 1e-5), 1e-6);
  }
}

TEST(Temperature, FromTau) {
  EXPECT_NEAR(Temperature::from_tau(0.07).tau(), 0.07, 1e-15);
  EXPECT_NEAR(Temperature{}.tau(), 0.07, 1e-15);
}

TEST(ToyData, SyntheticPairsAreDeterministic) {
  SyntheticSpec s;
  s.n_pairs = 30;
  s.seed = 3;
  const auto a = make_synthetic_pairs(s), b = make_synthetic_pairs(s);
  EXPECT_EQ(a.image, b.image);
  EXPECT_EQ(a.text, b.text);
  EXPECT_EQ(a.image.cols(), 64u);
  EXPECT_EQ(a.text.cols(), 32u);
}

TEST(ToyData, MismatchIsADerangement) {
  SyntheticSpec s;
  s.n_pairs = 20;
  const auto a = make_synthetic_pairs(s);
  const auto m = mismatch_pairs(a, 1);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_FALSE(std::equal(a.text.row(i).begin(), a.text.row(i).end(), m.text.row(i).begin()));
  }
}

TEST(ToyData, AugmentationIsAGroupAction) {
  std::vector<double> g(16);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = static_cast<double>(i);
  auto r = g;
  for (int k = 0; k < 4; ++k) augment_grid(r, 4, false, 1);
  EXPECT_EQ(r, g);
  auto f = g;
  augment_grid(f, 4, true, 0);
  EXPECT_EQ(f[0], 3.0);
  augment_grid(f, 4, true, 0);
  EXPECT_EQ(f, g);
  auto q = g;
  augment_grid(q, 4, false, 1);
  // Clockwise quarter turn: the top row becomes the right column.
  EXPECT_EQ(q[3], 0.0);
  EXPECT_EQ(q[15], 3.0);
}

TEST(ToyTrain, ZeroLearningRateKeepsLossConstant) {
  SyntheticSpec s;
  s.n_pairs = 40;
  const auto data = make_synthetic_pairs(s);
  TrainConfig c;
  c.epochs = 5;
  c.batch_size = 10;
  c.learning_rate = 0.0;
  const auto r = toy_train(data, c);
  for (const auto& e : r.log) EXPECT_DOUBLE_EQ(e.loss, r.initial_loss);
}

TEST(ToyTrain, DeterministicGivenSeed) {
  SyntheticSpec s;
  s.n_pairs = 40;
  const auto data = make_synthetic_pairs(s);
  TrainConfig c;
  c.epochs = 10;
  c.batch_size = 20;
  c.augment_flip = c.augment_rotate = true;
  const auto a = toy_train(data, c), b = toy_train(data, c);
  EXPECT_EQ(a.image_encoder.weight, b.image_encoder.weight);
  EXPECT_EQ(a.log.back().loss, b.log.back().loss);
}

TEST(ToyTrain, LossDecreasesOnSmoothedCurve) {
  SyntheticSpec s;
  s.n_pairs = 100;
  const auto data = make_synthetic_pairs(s);
  TrainConfig c;
  c.epochs = 60;
  c.learning_rate = 0.2;
  const auto r = toy_train(data, c);
  EXPECT_LT(r.log.back().loss, r.initial_loss);
  EXPECT_TRUE(smoothed_nonincreasing(r.log, 5, 0.05));
}

TEST(ToyTrain, RejectsBadConfig) {
  SyntheticSpec s;
  s.n_pairs = 10;
  const auto data = make_synthetic_pairs(s);
  TrainConfig c;
  c.batch_size = 11;
  EXPECT_THROW(toy_train(data, c), Error);
  c.batch_size = 5;
  c.learning_rate = -1;
  EXPECT_THROW(toy_train(data, c), Error);
}

TEST(ToyTrain, ScheduleWarmupThenCosine) {
  TrainConfig c;
  c.learning_rate = 1.0;
  c.warmup_steps = 10;
  c.cosine_schedule = true;
  EXPECT_DOUBLE_EQ(scheduled_lr(c, 0, 110), 0.1);
  EXPECT_DOUBLE_EQ(scheduled_lr(c, 9, 110), 1.0);
  EXPECT_DOUBLE_EQ(scheduled_lr(c, 10, 110), 1.0);
  EXPECT_NEAR(scheduled_lr(c, 60, 110), 0.5, 1e-12);
}
