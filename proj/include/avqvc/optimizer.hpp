#pragma once

#include <cmath>

#include "avqvc/nn.hpp"

namespace avqvc {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double epsilon = 1e-8;
};

struct AdamState {
  ParameterSet m;
  ParameterSet v;
  std::int64_t t = 0;

  static AdamState for_params(const ParameterSet& p) { return {zeros_like(p), zeros_like(p), 0}; }
};

// Rescales gradients in place so their global L2 norm is at most max_norm.
// Returns the norm before clipping.
inline double clip_global_norm(ParameterSet& grads, double max_norm) {
  const double norm = global_norm(grads);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& g : grads) g *= s;
  }
  return norm;
}

inline void adam_step(ParameterSet& params, const ParameterSet& grads, AdamState& state, const AdamConfig& cfg) {
  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grads[i];
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grads[i].cwiseProduct(grads[i]);
    params[i].array() -=
        cfg.learning_rate * (state.m[i].array() / bc1) / ((state.v[i].array() / bc2).sqrt() + cfg.epsilon);
  }
}

}  // namespace avqvc
