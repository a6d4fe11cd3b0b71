#pragma once

#include <cmath>
#include <optional>
#include <string>

#include "avqvc/kv_config.hpp"
#include "avqvc/tensor.hpp"

namespace avqvc {

// Objective weights. `triggered` latches once the stabilizing schedule fires.
struct LossWeights {
  double alpha = 0.02;   // latent
  double beta = 0.03;    // speaker
  double lambda = 0.02;  // diff
  double recon_weight = 1.0;
  bool triggered = false;
  std::optional<double> diff_floor;  // off by default

  bool operator==(const LossWeights&) const = default;

  KeyValues to_kv() const {
    KeyValues kv;
    kv.set("loss.alpha", alpha);
    kv.set("loss.beta", beta);
    kv.set("loss.lambda", lambda);
    kv.set("loss.recon_weight", recon_weight);
    kv.set("loss.triggered", triggered ? 1 : 0);
    kv.set("loss.diff_floor", diff_floor ? KeyValues::format_double(*diff_floor) : std::string("none"));
    return kv;
  }

  static LossWeights from_kv(const KeyValues& kv) { return from_kv(kv, LossWeights()); }

  static LossWeights from_kv(const KeyValues& kv, LossWeights w) {
    if (kv.has("loss.alpha")) w.alpha = kv.get_double("loss.alpha");
    if (kv.has("loss.beta")) w.beta = kv.get_double("loss.beta");
    if (kv.has("loss.lambda")) w.lambda = kv.get_double("loss.lambda");
    if (kv.has("loss.recon_weight")) w.recon_weight = kv.get_double("loss.recon_weight");
    if (kv.has("loss.triggered")) w.triggered = kv.get_int<int>("loss.triggered") != 0;
    if (kv.has("loss.diff_floor")) {
      if (kv.get("loss.diff_floor") == "none") {
        w.diff_floor.reset();
      } else {
        w.diff_floor = kv.get_double("loss.diff_floor");
      }
    }
    w.validate();
    return w;
  }

  void validate() const {
    for (double v : {alpha, beta, lambda, recon_weight}) {
      if (!std::isfinite(v)) throw Error(ErrorKind::config, "loss weights must be finite");
    }
    if (diff_floor && !(*diff_floor <= 0.0)) throw Error(ErrorKind::config, "loss.diff_floor must be <= 0");
  }
};

struct LossParts {
  double recon = 0.0;
  double latent = 0.0;
  double speaker = 0.0;
  double diff = 0.0;
};

struct LossReport {
  double recon = 0.0;
  double latent = 0.0;
  double speaker = 0.0;
  double diff = 0.0;
  double total = 0.0;
  bool schedule_triggered = false;

  LossParts parts() const { return {recon, latent, speaker, diff}; }
};

// Mean absolute error between two equally shaped matrices.
inline double l1_mean(const Matrix& a, const Matrix& b) {
  require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "l1: " + shape_str(a) + " vs " + shape_str(b));
  if (a.size() == 0) return 0.0;
  return (a - b).cwiseAbs().sum() / static_cast<double>(a.size());
}

// Sum of the three per-pair mean absolute errors (reconstruction, target).
inline double recon_loss(const Matrix& x1_rec, const Matrix& x1, const Matrix& x2_rec, const Matrix& x2,
                         const Matrix& x3_rec, const Matrix& x3) {
  return l1_mean(x1_rec, x1) + l1_mean(x2_rec, x2) + l1_mean(x3_rec, x3);
}

inline double speaker_loss(const RowVector& s1, const RowVector& s2) {
  require_shape(s1.size() == s2.size(), "speaker_loss: dimension mismatch " + std::to_string(s1.size()) +
                                            " vs " + std::to_string(s2.size()));
  if (s1.size() == 0) return 0.0;
  return (s2 - s1).cwiseAbs().sum() / static_cast<double>(s1.size());
}

inline double diff_loss(const RowVector& s1, const RowVector& s2, const RowVector& s3) {
  return -(speaker_loss(s2, s3) + speaker_loss(s1, s3));
}

inline LossReport total_loss(const LossParts& parts, const LossWeights& w) {
  for (double v : {parts.recon, parts.latent, parts.speaker, parts.diff}) {
    if (!std::isfinite(v)) throw Error(ErrorKind::numeric, "non-finite loss component");
  }
  LossReport r;
  r.recon = parts.recon;
  r.latent = parts.latent;
  r.speaker = parts.speaker;
  r.diff = parts.diff;
  const double diff_term = w.diff_floor ? std::max(parts.diff, *w.diff_floor) : parts.diff;
  r.total = w.recon_weight * parts.recon + w.alpha * parts.latent + w.beta * parts.speaker + w.lambda * diff_term;
  r.schedule_triggered = w.triggered;
  return r;
}

// Once |diff| exceeds five times the reconstruction loss, lower the diff
// weight and raise the speaker and reconstruction weights. The switch is
// one-way; alpha is left alone.
inline LossWeights update_weights(const LossReport& report, const LossWeights& w) {
  if (w.triggered) return w;
  if (std::abs(report.diff) > 5.0 * report.recon) {
    LossWeights next = w;
    next.beta = 0.05;
    next.lambda = 0.01;
    next.recon_weight = 2.0;
    next.triggered = true;
    return next;
  }
  return w;
}

}  // namespace avqvc
