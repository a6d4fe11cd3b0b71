#pragma once

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <vector>

#include "avqvc/audio.hpp"
#include "avqvc/kv_config.hpp"
#include "avqvc/tensor.hpp"

namespace avqvc {

struct FrontendConfig {
  int fft_size = 1024;
  int window_size = 1024;
  int hop_size = 256;
  int n_mels = 80;
  double fmin = 90.0;
  double fmax = 7600.0;
  int sample_rate = kSampleRate;
  std::string window = "hann";
  double log_floor = 1e-5;

  bool operator==(const FrontendConfig&) const = default;

  void validate() const {
    auto bad = [](const std::string& why) { throw Error(ErrorKind::config, "frontend: " + why); };
    if (n_mels < 1) bad("n_mels must be >= 1");
    if (hop_size < 1) bad("hop_size must be >= 1");
    if (!(hop_size <= window_size && window_size <= fft_size)) bad("require hop_size <= window_size <= fft_size");
    if (!(fmin >= 0.0 && fmin < fmax && fmax <= sample_rate / 2.0)) bad("require 0 <= fmin < fmax <= sample_rate/2");
    if (window != "hann") bad("only the hann window is supported");
    if (!(log_floor > 0.0)) bad("log_floor must be positive");
    if (sample_rate != kSampleRate) bad("sample_rate must be 16000");
  }

  int n_freqs() const { return fft_size / 2 + 1; }

  KeyValues to_kv(const std::string& prefix = "frontend.") const {
    KeyValues kv;
    kv.set(prefix + "fft_size", fft_size);
    kv.set(prefix + "window_size", window_size);
    kv.set(prefix + "hop_size", hop_size);
    kv.set(prefix + "n_mels", n_mels);
    kv.set(prefix + "fmin", fmin);
    kv.set(prefix + "fmax", fmax);
    kv.set(prefix + "sample_rate", sample_rate);
    kv.set(prefix + "window", window);
    kv.set(prefix + "log_floor", log_floor);
    return kv;
  }

  static FrontendConfig from_kv(const KeyValues& kv, const std::string& prefix = "frontend.") {
    return from_kv(kv, prefix, FrontendConfig());
  }

  static FrontendConfig from_kv(const KeyValues& kv, const std::string& prefix, FrontendConfig base) {
    auto opt = [&](const std::string& k) { return kv.has(prefix + k); };
    if (opt("fft_size")) base.fft_size = kv.get_int<int>(prefix + "fft_size");
    if (opt("window_size")) base.window_size = kv.get_int<int>(prefix + "window_size");
    if (opt("hop_size")) base.hop_size = kv.get_int<int>(prefix + "hop_size");
    if (opt("n_mels")) base.n_mels = kv.get_int<int>(prefix + "n_mels");
    if (opt("fmin")) base.fmin = kv.get_double(prefix + "fmin");
    if (opt("fmax")) base.fmax = kv.get_double(prefix + "fmax");
    if (opt("sample_rate")) base.sample_rate = kv.get_int<int>(prefix + "sample_rate");
    if (opt("window")) base.window = kv.get(prefix + "window");
    if (opt("log_floor")) base.log_floor = kv.get_double(prefix + "log_floor");
    return base;
  }
};

struct MelSpectrogram {
  Matrix frames;  // T x n_mels natural-log magnitudes
  FrontendConfig config;
  std::string speaker_id;
  std::string utterance_id;

  Eigen::Index n_frames() const { return frames.rows(); }
};

// Slaney mel scale: linear below 1 kHz, logarithmic above.
inline double hz_to_mel(double hz) {
  constexpr double f_sp = 200.0 / 3.0;
  constexpr double min_log_hz = 1000.0;
  constexpr double min_log_mel = min_log_hz / f_sp;
  const double logstep = std::log(6.4) / 27.0;
  return hz < min_log_hz ? hz / f_sp : min_log_mel + std::log(hz / min_log_hz) / logstep;
}

inline double mel_to_hz(double mel) {
  constexpr double f_sp = 200.0 / 3.0;
  constexpr double min_log_hz = 1000.0;
  constexpr double min_log_mel = min_log_hz / f_sp;
  const double logstep = std::log(6.4) / 27.0;
  return mel < min_log_mel ? mel * f_sp : min_log_hz * std::exp(logstep * (mel - min_log_mel));
}

// n_mels + 2 edge frequencies; band m spans edges[m]..edges[m+2], peak at edges[m+1].
inline std::vector<double> mel_band_edges(const FrontendConfig& cfg) {
  const double lo = hz_to_mel(cfg.fmin), hi = hz_to_mel(cfg.fmax);
  std::vector<double> edges(cfg.n_mels + 2);
  for (int i = 0; i < cfg.n_mels + 2; ++i) edges[i] = mel_to_hz(lo + (hi - lo) * i / (cfg.n_mels + 1));
  return edges;
}

// n_mels x n_freqs triangular filters, each scaled by 2 / bandwidth so that
// every filter has the same area.
inline Matrix mel_filterbank(const FrontendConfig& cfg) {
  const auto edges = mel_band_edges(cfg);
  const int n_freqs = cfg.n_freqs();
  Matrix fb = Matrix::Zero(cfg.n_mels, n_freqs);
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double left = edges[m], center = edges[m + 1], right = edges[m + 2];
    const double enorm = 2.0 / (right - left);
    for (int f = 0; f < n_freqs; ++f) {
      const double hz = static_cast<double>(f) * cfg.sample_rate / cfg.fft_size;
      const double up = (hz - left) / (center - left);
      const double down = (right - hz) / (right - center);
      fb(m, f) = std::max(0.0, std::min(up, down)) * enorm;
    }
  }
  return fb;
}

// Periodic Hann window of window_size, zero-padded symmetrically to fft_size.
inline std::vector<double> analysis_window(const FrontendConfig& cfg) {
  std::vector<double> w(cfg.fft_size, 0.0);
  const int offset = (cfg.fft_size - cfg.window_size) / 2;
  for (int i = 0; i < cfg.window_size; ++i) {
    w[offset + i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / cfg.window_size);
  }
  return w;
}

// Frames produced by the centered STFT: the signal is reflect-padded by
// fft_size/2 on both sides, so T = 1 + floor(len / hop_size).
inline Eigen::Index stft_frame_count(std::size_t n_samples, const FrontendConfig& cfg) {
  return 1 + static_cast<Eigen::Index>(n_samples / static_cast<std::size_t>(cfg.hop_size));
}

inline std::vector<double> reflect_pad(const std::vector<double>& x, int pad) {
  const auto n = static_cast<long long>(x.size());
  std::vector<double> out(x.size() + 2 * static_cast<std::size_t>(pad));
  for (long long i = 0; i < static_cast<long long>(out.size()); ++i) {
    long long j = i - pad;
    // reflect without repeating the edge sample; n >= 2 is guaranteed by callers
    while (j < 0 || j >= n) j = j < 0 ? -j : 2 * (n - 1) - j;
    out[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(j)];
  }
  return out;
}

// Complex STFT, T x n_freqs.
inline Eigen::MatrixXcd stft(const std::vector<double>& samples, const FrontendConfig& cfg) {
  const auto padded = reflect_pad(samples, cfg.fft_size / 2);
  const auto window = analysis_window(cfg);
  const Eigen::Index n_frames = stft_frame_count(samples.size(), cfg);
  Eigen::MatrixXcd spec(n_frames, cfg.n_freqs());
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<double> frame(cfg.fft_size);
  std::vector<std::complex<double>> bins;
  for (Eigen::Index t = 0; t < n_frames; ++t) {
    const std::size_t start = static_cast<std::size_t>(t) * cfg.hop_size;
    for (int i = 0; i < cfg.fft_size; ++i) frame[i] = padded[start + i] * window[i];
    fft.fwd(bins, frame);
    for (int f = 0; f < cfg.n_freqs(); ++f) spec(t, f) = bins[f];
  }
  return spec;
}

inline MelSpectrogram compute_mel(const AudioClip& clip, const FrontendConfig& cfg = {}) {
  cfg.validate();
  if (clip.sample_rate != cfg.sample_rate) {
    throw Error(ErrorKind::compatibility, "clip sample rate " + std::to_string(clip.sample_rate) +
                                              " differs from frontend sample rate");
  }
  if (clip.samples.size() < static_cast<std::size_t>(cfg.window_size)) {
    throw Error(ErrorKind::too_short, "clip has " + std::to_string(clip.samples.size()) +
                                          " samples, need at least " + std::to_string(cfg.window_size));
  }
  const Eigen::MatrixXcd spec = stft(clip.samples, cfg);
  const Matrix magnitude = spec.cwiseAbs();
  const Matrix fb = mel_filterbank(cfg);
  Matrix mel = magnitude * fb.transpose();
  mel = mel.array().max(cfg.log_floor).log().matrix();
  return MelSpectrogram{std::move(mel), cfg, clip.speaker_id, clip.utterance_id};
}

// Per-bin z-score statistics over a training set of feature matrices.
struct NormStats {
  RowVector mean;
  RowVector stddev;

  static NormStats identity(Eigen::Index dim) {
    return {RowVector::Zero(dim), RowVector::Ones(dim)};
  }

  template <typename Range>
  static NormStats fit(const Range& matrices) {
    Eigen::Index dim = -1;
    double count = 0.0;
    RowVector sum, sumsq;
    for (const Matrix& m : matrices) {
      if (dim < 0) {
        dim = m.cols();
        sum = RowVector::Zero(dim);
        sumsq = RowVector::Zero(dim);
      }
      require_shape(m.cols() == dim, "normalization fit: inconsistent feature width");
      sum += m.colwise().sum();
      sumsq += m.array().square().matrix().colwise().sum();
      count += static_cast<double>(m.rows());
    }
    if (dim < 0 || count == 0.0) throw Error(ErrorKind::data, "normalization fit on empty data");
    NormStats s;
    s.mean = sum / count;
    RowVector var = (sumsq / count).array() - s.mean.array().square();
    s.stddev = var.array().max(0.0).sqrt().max(1e-6).matrix();
    return s;
  }

  Matrix apply(const Matrix& m) const {
    require_shape(m.cols() == mean.size(), "normalize: feature width " + std::to_string(m.cols()) +
                                               " vs stats width " + std::to_string(mean.size()));
    return ((m.rowwise() - mean).array().rowwise() / stddev.array()).matrix();
  }

  Matrix invert(const Matrix& m) const {
    require_shape(m.cols() == mean.size(), "denormalize: feature width mismatch");
    return ((m.array().rowwise() * stddev.array()).matrix().rowwise() + mean);
  }
};

}  // namespace avqvc
