#pragma once

#include <iostream>

#include "avqvc/training.hpp"

namespace avqvc {

// Frame-for-frame reconstruction in the raw (un-normalized) feature domain.
inline Matrix self_reconstruct(const Checkpoint& ck, const Matrix& mel) {
  return ck.norm.invert(ck.model.self_reconstruct(ck.norm.apply(mel)));
}

// Content from the source, speaker vector from the whole target utterance.
inline Matrix convert(const Checkpoint& ck, const Matrix& source, const Matrix& target) {
  const LatentBundle src = ck.model.analyze(ck.norm.apply(source));
  const LatentBundle tgt = ck.model.analyze(ck.norm.apply(target));
  return ck.norm.invert(ck.model.decode(src.content, tgt.speaker));
}

inline void require_compatible(const MelSpectrogram& mel, const FrontendConfig& expected, const std::string& what) {
  if (!(mel.config == expected)) {
    throw Error(ErrorKind::compatibility,
                what + " features were extracted with a different frontend configuration than the checkpoint");
  }
}

inline MelSpectrogram convert(const Checkpoint& ck, const MelSpectrogram& source, const MelSpectrogram& target) {
  require_compatible(source, ck.frontend, "source");
  require_compatible(target, ck.frontend, "target");
  MelSpectrogram out;
  out.frames = convert(ck, source.frames, target.frames);
  out.config = ck.frontend;
  out.speaker_id = target.speaker_id;
  out.utterance_id = source.utterance_id;
  return out;
}

// ---------------------------------------------------------------------------
// Waveform synthesis: non-negative least-squares inversion of the filter bank
// followed by Griffin-Lim phase reconstruction.

inline std::vector<double> istft(const Eigen::MatrixXcd& spec, const FrontendConfig& cfg) {
  const Eigen::Index n_frames = spec.rows();
  const auto window = analysis_window(cfg);
  const std::size_t padded_len = static_cast<std::size_t>(cfg.fft_size) +
                                 static_cast<std::size_t>(cfg.hop_size) * static_cast<std::size_t>(n_frames - 1);
  std::vector<double> y(padded_len, 0.0), wsum(padded_len, 0.0);
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<std::complex<double>> bins(static_cast<std::size_t>(cfg.n_freqs()));
  std::vector<double> frame;
  for (Eigen::Index t = 0; t < n_frames; ++t) {
    for (int f = 0; f < cfg.n_freqs(); ++f) bins[f] = spec(t, f);
    fft.inv(frame, bins, cfg.fft_size);
    const std::size_t start = static_cast<std::size_t>(t) * cfg.hop_size;
    for (int i = 0; i < cfg.fft_size; ++i) {
      y[start + i] += frame[i] * window[i];
      wsum[start + i] += window[i] * window[i];
    }
  }
  for (std::size_t i = 0; i < padded_len; ++i) {
    if (wsum[i] > 1e-8) y[i] /= wsum[i];
  }
  const std::size_t pad = static_cast<std::size_t>(cfg.fft_size / 2);
  const std::size_t len = static_cast<std::size_t>(cfg.hop_size) * static_cast<std::size_t>(n_frames - 1);
  return std::vector<double>(y.begin() + static_cast<std::ptrdiff_t>(pad),
                             y.begin() + static_cast<std::ptrdiff_t>(pad + len));
}

// Linear-frequency magnitudes S >= 0 minimizing ||S * fb^T - mel||^2 by
// projected gradient descent.
inline Matrix invert_mel_filterbank(const Matrix& mel_magnitude, const FrontendConfig& cfg, int iterations = 200) {
  const Matrix fb = mel_filterbank(cfg);  // n_mels x n_freqs
  const Matrix gram = fb.transpose() * fb;
  const double lipschitz = Eigen::SelfAdjointEigenSolver<Matrix>(fb * fb.transpose()).eigenvalues().maxCoeff();
  const double step = 1.0 / lipschitz;
  Matrix s = (mel_magnitude * fb).cwiseMax(0.0) * step;
  const Matrix target = mel_magnitude * fb;
  for (int it = 0; it < iterations; ++it) {
    s = (s - step * (s * gram - target)).cwiseMax(0.0);
  }
  return s;
}

struct SynthesisOptions {
  int iterations = 60;
  std::uint64_t seed = 0;
  int nnls_iterations = 200;
};

inline AudioClip synthesize_waveform(const Matrix& log_mel, const FrontendConfig& cfg,
                                     const SynthesisOptions& opts = {}) {
  cfg.validate();
  require_shape(log_mel.cols() == cfg.n_mels, "synthesize: mel has " + std::to_string(log_mel.cols()) +
                                                  " bins, frontend expects " + std::to_string(cfg.n_mels));
  require_shape(log_mel.rows() >= 1, "synthesize: empty mel");
  require_finite(log_mel, "synthesize: mel");
  const double floor_log = std::log(cfg.log_floor);
  // entries at the floor carry no energy
  const Matrix mel_mag = log_mel.unaryExpr([&](double v) { return v <= floor_log + 1e-9 ? 0.0 : std::exp(v); });
  AudioClip clip;
  clip.sample_rate = cfg.sample_rate;
  const std::size_t len = static_cast<std::size_t>(cfg.hop_size) * static_cast<std::size_t>(log_mel.rows() - 1);
  if (mel_mag.maxCoeff() <= 0.0) {
    std::cerr << "warning: mel is entirely at the log floor; emitting silence\n";
    clip.samples.assign(len, 0.0);
    return clip;
  }
  const Matrix magnitude = invert_mel_filterbank(mel_mag, cfg, opts.nnls_iterations);

  Rng rng(opts.seed);
  std::uniform_real_distribution<double> phase(-std::numbers::pi, std::numbers::pi);
  Eigen::MatrixXcd spec(magnitude.rows(), magnitude.cols());
  for (Eigen::Index t = 0; t < spec.rows(); ++t) {
    for (Eigen::Index f = 0; f < spec.cols(); ++f) spec(t, f) = std::polar(magnitude(t, f), phase(rng));
  }
  std::vector<double> y = istft(spec, cfg);
  for (int it = 0; it < opts.iterations; ++it) {
    if (y.size() < 2) break;
    const Eigen::MatrixXcd rebuilt = stft(y, cfg);
    const Eigen::Index rows = std::min(rebuilt.rows(), spec.rows());
    for (Eigen::Index t = 0; t < rows; ++t) {
      for (Eigen::Index f = 0; f < spec.cols(); ++f) {
        const auto c = rebuilt(t, f);
        const double a = std::abs(c);
        spec(t, f) = a > 1e-12 ? magnitude(t, f) * (c / a) : std::complex<double>(magnitude(t, f), 0.0);
      }
    }
    y = istft(spec, cfg);
  }
  for (double& v : y) v = std::clamp(v, -1.0, 1.0);
  clip.samples = std::move(y);
  return clip;
}

}  // namespace avqvc
