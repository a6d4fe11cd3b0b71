#include <gtest/gtest.h>

#include "avqvc/vq.hpp"
#include "test_util.hpp"

using namespace avqvc;
using avqvc::testing::random_matrix;

namespace {

// Exhaustive nearest neighbour, written independently of quantize().
std::vector<int> brute_force(const Matrix& latent, const Matrix& entries) {
  std::vector<int> out;
  for (Eigen::Index t = 0; t < latent.rows(); ++t) {
    int best = -1;
    double best_d = 0.0;
    for (Eigen::Index k = 0; k < entries.rows(); ++k) {
      double d = 0.0;
      for (Eigen::Index j = 0; j < latent.cols(); ++j) d += (latent(t, j) - entries(k, j)) * (latent(t, j) - entries(k, j));
      if (best < 0 || d < best_d) {
        best = static_cast<int>(k);
        best_d = d;
      }
    }
    out.push_back(best);
  }
  return out;
}

}  // namespace

TEST(Quantize, MatchesBruteForceIncludingTies) {
  Rng rng(2024);
  std::uniform_int_distribution<int> kd(1, 32), dd(1, 16), td(1, 64);
  int tie_frames = 0;
  for (int inst = 0; inst < 150; ++inst) {
    const int k = kd(rng), d = dd(rng), t = td(rng);
    // small integer grid so distances tie often
    std::uniform_int_distribution<int> grid(-2, 2);
    Matrix cb(k, d), lat(t, d);
    for (Eigen::Index i = 0; i < cb.size(); ++i) cb.data()[i] = grid(rng);
    for (Eigen::Index i = 0; i < lat.size(); ++i) lat.data()[i] = grid(rng) + 0.5 * (inst % 2) * grid(rng);
    if (k > 1) cb.row(k - 1) = cb.row(0);  // duplicated entry: index 0 must win
    const auto q = quantize(lat, cb);
    const auto ref = brute_force(lat, cb);
    ASSERT_EQ(q.indices, ref) << "instance " << inst;
    for (Eigen::Index r = 0; r < t; ++r) {
      EXPECT_TRUE(q.quantized.row(r) == cb.row(q.indices[r]));
      int n_best = 0;
      const double best = (lat.row(r) - cb.row(q.indices[r])).squaredNorm();
      for (int j = 0; j < k; ++j) n_best += (lat.row(r) - cb.row(j)).squaredNorm() == best;
      tie_frames += n_best > 1;
    }
  }
  EXPECT_GT(tie_frames, 100);
}

TEST(Quantize, ExactEntryMatch) {
  Rng rng(1);
  Matrix cb = random_matrix(8, 4, rng);
  Matrix lat = cb.row(3);
  const auto q = quantize(lat, cb);
  EXPECT_EQ(q.indices[0], 3);
  EXPECT_TRUE(q.quantized.row(0) == cb.row(3));
}

TEST(Quantize, SingleEntry) {
  Rng rng(2);
  Matrix cb = random_matrix(1, 5, rng);
  const auto q = quantize(random_matrix(30, 5, rng, 10.0), cb);
  for (int i : q.indices) EXPECT_EQ(i, 0);
}

TEST(Quantize, Idempotent) {
  Rng rng(3);
  Matrix cb = random_matrix(16, 8, rng);
  const auto q = quantize(random_matrix(32, 8, rng), cb);
  EXPECT_EQ(quantize(q.quantized, cb).quantized, q.quantized);
}

TEST(Quantize, CloserEntryNeverIncreasesLatentLoss) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    Matrix cb = random_matrix(6, 4, rng);
    Matrix lat = random_matrix(20, 4, rng);
    const double before = latent_loss(lat, quantize(lat, cb).quantized);
    Matrix grown(cb.rows() + 1, cb.cols());
    grown << cb, lat.row(trial % 20) * 0.999 + quantize(lat, cb).quantized.row(trial % 20) * 0.001;
    const double after = latent_loss(lat, quantize(lat, grown).quantized);
    EXPECT_LE(after, before);
  }
}

TEST(Quantize, Errors) {
  Matrix cb = Matrix::Zero(4, 3);
  EXPECT_THROW(quantize(Matrix::Zero(2, 4), cb), Error);
  Matrix bad = Matrix::Zero(2, 3);
  bad(1, 1) = std::nan("");
  try {
    quantize(bad, cb);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::numeric);
  }
}

TEST(LatentLoss, Cases) {
  Rng rng(5);
  Matrix a = random_matrix(7, 4, rng), b = random_matrix(7, 4, rng);
  EXPECT_EQ(latent_loss(a, a), 0.0);
  EXPECT_EQ(latent_loss(Matrix::Ones(5, 4), Matrix::Zero(5, 4)), 4.0);
  EXPECT_EQ(latent_loss(a, b), latent_loss(b, a));
  EXPECT_THROW(latent_loss(a, Matrix::Zero(6, 4)), Error);
}

TEST(LatentLoss, GradientOnlyReachesSelectedEntries) {
  Rng rng(6);
  Matrix cb = random_matrix(12, 3, rng);
  Matrix lat = cb.topRows(3) + random_matrix(3, 3, rng, 0.01);
  const auto q = quantize(lat, cb);
  Matrix d_lat = Matrix::Zero(3, 3), d_cb = Matrix::Zero(12, 3);
  latent_loss_backward(lat, q, 1.0, d_lat, d_cb);
  for (int k = 0; k < 12; ++k) {
    const bool selected = std::find(q.indices.begin(), q.indices.end(), k) != q.indices.end();
    EXPECT_EQ(d_cb.row(k).squaredNorm() > 0.0, selected) << k;
  }
  // d/d latent of mean_t ||l - q||^2 = 2 (l - q) / T
  EXPECT_LT((d_lat - 2.0 * (lat - q.quantized) / 3.0).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(InitCodebook, DeterministicShapedAndCentred) {
  const auto a = init_codebook(512, 64, 9), b = init_codebook(512, 64, 9);
  EXPECT_EQ(a.entries, b.entries);
  EXPECT_EQ(a.size(), 512);
  EXPECT_EQ(a.dim(), 64);
  const double n = 512.0 * 64.0;
  const double mean = a.entries.mean();
  const double sd = std::sqrt((a.entries.array() - mean).square().sum() / n);
  EXPECT_LT(std::abs(mean), 3.0 * sd / std::sqrt(n));
  EXPECT_THROW(init_codebook(0, 4, 1), Error);
  EXPECT_THROW(init_codebook(4, 0, 1), Error);
}
