#pragma once

#include <limits>
#include <string>

#include "avqvc/tensor.hpp"

namespace avqvc {

inline constexpr int kDefaultCodebookSize = 512;

struct Codebook {
  Matrix entries;  // K x D

  Eigen::Index size() const { return entries.rows(); }
  Eigen::Index dim() const { return entries.cols(); }
};

struct QuantizationResult {
  IndexVector indices;  // length T, each in [0, K)
  Matrix quantized;     // T x D, row t == entries.row(indices[t])
};

inline Codebook init_codebook(int k, int d, std::uint64_t seed, double scale = 1.0) {
  if (k < 1 || d < 1) {
    throw Error(ErrorKind::config, "codebook size and dimension must be >= 1 (got K=" + std::to_string(k) +
                                       ", D=" + std::to_string(d) + ")");
  }
  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, scale);
  Codebook cb{Matrix(k, d)};
  for (Eigen::Index i = 0; i < cb.entries.size(); ++i) cb.entries.data()[i] = gauss(rng);
  return cb;
}

// Nearest entry per frame under squared Euclidean distance. Equidistant
// entries resolve to the lowest index.
inline QuantizationResult quantize(const Matrix& latent, const Matrix& entries) {
  require_shape(latent.cols() == entries.cols(),
                "quantize: latent width " + std::to_string(latent.cols()) + " vs codebook dim " +
                    std::to_string(entries.cols()));
  require_shape(entries.rows() >= 1, "quantize: empty codebook");
  require_finite(latent, "quantize: latent");
  const Eigen::Index n = latent.rows(), k = entries.rows();
  QuantizationResult out;
  out.indices.resize(static_cast<std::size_t>(n));
  out.quantized.resize(n, entries.cols());
  for (Eigen::Index t = 0; t < n; ++t) {
    double best = std::numeric_limits<double>::infinity();
    int best_k = 0;
    for (Eigen::Index j = 0; j < k; ++j) {
      const double d = (latent.row(t) - entries.row(j)).squaredNorm();
      if (d < best) {
        best = d;
        best_k = static_cast<int>(j);
      }
    }
    out.indices[static_cast<std::size_t>(t)] = best_k;
    out.quantized.row(t) = entries.row(best_k);
  }
  return out;
}

inline QuantizationResult quantize(const Matrix& latent, const Codebook& codebook) {
  return quantize(latent, codebook.entries);
}

// Mean over frames of the squared distance between latent and its code.
inline double latent_loss(const Matrix& latent, const Matrix& quantized) {
  require_shape(latent.rows() == quantized.rows() && latent.cols() == quantized.cols(),
                "latent_loss: " + shape_str(latent) + " vs " + shape_str(quantized));
  if (latent.rows() == 0) return 0.0;
  return (latent - quantized).squaredNorm() / static_cast<double>(latent.rows());
}

// Gradients of `scale * latent_loss` with respect to the latent and to the
// codebook entries that were selected. Both sides of the distance receive
// gradient; this is the only path by which codebook entries learn.
inline void latent_loss_backward(const Matrix& latent, const QuantizationResult& q, double scale,
                                 Matrix& d_latent, Matrix& d_codebook) {
  const double t = static_cast<double>(latent.rows());
  if (t == 0) return;
  const Matrix g = (2.0 * scale / t) * (latent - q.quantized);
  d_latent += g;
  for (std::size_t i = 0; i < q.indices.size(); ++i) {
    d_codebook.row(q.indices[i]) -= g.row(static_cast<Eigen::Index>(i));
  }
}

}  // namespace avqvc
