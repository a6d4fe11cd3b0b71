#include <gtest/gtest.h>

#include "avqvc/losses.hpp"
#include "avqvc/vq.hpp"
#include "test_util.hpp"

using namespace avqvc;
using avqvc::testing::random_matrix;

TEST(Losses, HandArithmetic) {
  EXPECT_NEAR(latent_loss(Matrix::Ones(3, 4), Matrix::Zero(3, 4)), 4.0, 1e-12);

  Matrix x = Matrix::Zero(5, 3);
  Matrix shifted = x.array() + 0.5;
  EXPECT_NEAR(recon_loss(shifted, x, x, x, x, x), 0.5, 1e-12);

  EXPECT_NEAR(speaker_loss(RowVector::Zero(4), RowVector::Ones(4)), 1.0, 1e-12);
  EXPECT_NEAR(diff_loss(RowVector::Zero(4), RowVector::Zero(4), RowVector::Ones(4)), -2.0, 1e-12);

  const LossReport r = total_loss({2.0, 1.0, 1.0, -1.0}, LossWeights{});
  EXPECT_NEAR(r.total, 2.03, 1e-12);
}

TEST(Losses, DefaultWeights) {
  LossWeights w;
  EXPECT_EQ(w.alpha, 0.02);
  EXPECT_EQ(w.beta, 0.03);
  EXPECT_EQ(w.lambda, 0.02);
  EXPECT_EQ(w.recon_weight, 1.0);
  EXPECT_FALSE(w.triggered);
  EXPECT_FALSE(w.diff_floor.has_value());
}

TEST(Losses, ZeroAndSymmetryCases) {
  Rng rng(1);
  Matrix a = random_matrix(6, 4, rng), b = random_matrix(6, 4, rng), c = random_matrix(6, 4, rng);
  EXPECT_EQ(recon_loss(a, a, b, b, c, c), 0.0);
  Matrix a2 = random_matrix(6, 4, rng), b2 = random_matrix(6, 4, rng), c2 = random_matrix(6, 4, rng);
  const double base = recon_loss(a2, a, b2, b, c2, c);
  EXPECT_NEAR(recon_loss(c2, c, a2, a, b2, b), base, 1e-15);
  EXPECT_NEAR(recon_loss(b2, b, c2, c, a2, a), base, 1e-15);

  RowVector s1 = random_matrix(1, 5, rng), s2 = random_matrix(1, 5, rng), s3 = random_matrix(1, 5, rng);
  EXPECT_EQ(speaker_loss(s1, s1), 0.0);
  EXPECT_EQ(speaker_loss(s1, s2), speaker_loss(s2, s1));
  EXPECT_EQ(diff_loss(s1, s1, s1), 0.0);
  EXPECT_EQ(diff_loss(s1, s2, s3), diff_loss(s2, s1, s3));
  EXPECT_EQ(diff_loss(s1, s2, s3), -(speaker_loss(s2, s3) + speaker_loss(s1, s3)));
  EXPECT_THROW(speaker_loss(s1, RowVector::Zero(3)), Error);
  EXPECT_THROW(recon_loss(a, Matrix::Zero(2, 2), b, b, c, c), Error);
}

TEST(Losses, DiffDecreasesAsThirdMovesAway) {
  RowVector s = RowVector::Zero(4);
  double prev = 0.0;
  for (double d = 0.5; d < 5.0; d += 0.5) {
    const double v = diff_loss(s, s, RowVector::Constant(4, d));
    EXPECT_LT(v, prev);
    prev = v;
  }
}

TEST(Losses, SignContractsOnRandomInputs) {
  Rng rng(2);
  for (int i = 0; i < 200; ++i) {
    Matrix a = random_matrix(4, 3, rng), b = random_matrix(4, 3, rng);
    RowVector s1 = random_matrix(1, 3, rng), s2 = random_matrix(1, 3, rng), s3 = random_matrix(1, 3, rng);
    EXPECT_GE(recon_loss(a, b, b, a, a, a), 0.0);
    EXPECT_GE(latent_loss(a, b), 0.0);
    EXPECT_GE(speaker_loss(s1, s2), 0.0);
    EXPECT_LE(diff_loss(s1, s2, s3), 0.0);
  }
}

TEST(Losses, TotalMaskingAndLinearity) {
  const LossParts p{1.7, 0.4, 0.9, -2.2};
  LossWeights only_recon;
  only_recon.alpha = only_recon.beta = only_recon.lambda = 0.0;
  EXPECT_EQ(total_loss(p, only_recon).total, p.recon);

  Rng rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 50; ++i) {
    LossWeights w1, w2, sum;
    for (LossWeights* w : {&w1, &w2}) {
      w->alpha = u(rng);
      w->beta = u(rng);
      w->lambda = u(rng);
      w->recon_weight = u(rng);
    }
    sum.alpha = w1.alpha + w2.alpha;
    sum.beta = w1.beta + w2.beta;
    sum.lambda = w1.lambda + w2.lambda;
    sum.recon_weight = w1.recon_weight + w2.recon_weight;
    EXPECT_NEAR(total_loss(p, sum).total, total_loss(p, w1).total + total_loss(p, w2).total, 1e-12);
    LossWeights twice = w1;
    twice.alpha *= 2;
    twice.beta *= 2;
    twice.lambda *= 2;
    twice.recon_weight *= 2;
    EXPECT_NEAR(total_loss(p, twice).total, 2.0 * total_loss(p, w1).total, 1e-12);
  }
}

TEST(Losses, NonFinitePartIsNumericError) {
  try {
    total_loss({1.0, std::numeric_limits<double>::infinity(), 0.0, 0.0}, LossWeights{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::numeric);
  }
}

TEST(Losses, DiffFloorClampsOnlyWhenSet) {
  LossWeights w;
  const LossParts p{1.0, 0.0, 0.0, -10.0};
  EXPECT_NEAR(total_loss(p, w).total, 1.0 - 0.2, 1e-12);
  w.diff_floor = -3.0;
  EXPECT_NEAR(total_loss(p, w).total, 1.0 - 0.06, 1e-12);
  EXPECT_EQ(total_loss(p, w).diff, -10.0);
}

TEST(Schedule, TriggersOnMagnitude) {
  LossReport r;
  r.recon = 1.0;
  r.diff = -5.1;
  const LossWeights w = update_weights(r, LossWeights{});
  EXPECT_TRUE(w.triggered);
  EXPECT_EQ(w.beta, 0.05);
  EXPECT_EQ(w.lambda, 0.01);
  EXPECT_EQ(w.recon_weight, 2.0);
  EXPECT_EQ(w.alpha, 0.02);
}

TEST(Schedule, BelowAndAtBoundary) {
  LossReport r;
  r.recon = 1.0;
  r.diff = -4.9;
  EXPECT_EQ(update_weights(r, LossWeights{}), LossWeights{});
  r.diff = -5.0;
  EXPECT_EQ(update_weights(r, LossWeights{}), LossWeights{});
  r.recon = 0.0;
  r.diff = 0.0;
  EXPECT_EQ(update_weights(r, LossWeights{}), LossWeights{});
  r.diff = -1e-300;
  EXPECT_TRUE(update_weights(r, LossWeights{}).triggered);
}

TEST(Schedule, LatchedAndIdempotent) {
  LossReport hot;
  hot.recon = 1.0;
  hot.diff = -6.0;
  const LossWeights on = update_weights(hot, LossWeights{});
  EXPECT_EQ(update_weights(hot, on), on);
  LossReport calm;
  calm.recon = 10.0;
  calm.diff = -0.1;
  EXPECT_EQ(update_weights(calm, on), on);
}

TEST(LossWeights, KeyValueRoundTrip) {
  LossWeights w;
  w.beta = 0.125;
  w.diff_floor = -4.0;
  w.triggered = true;
  EXPECT_EQ(LossWeights::from_kv(w.to_kv()), w);
  LossWeights none;
  EXPECT_EQ(LossWeights::from_kv(none.to_kv()), none);
}
