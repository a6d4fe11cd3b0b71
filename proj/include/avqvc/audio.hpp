#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <numbers>
#include <string>
#include <vector>

#include "avqvc/error.hpp"
#include "avqvc/io.hpp"

namespace avqvc {

inline constexpr int kSampleRate = 16000;

struct AudioClip {
  std::vector<double> samples;
  int sample_rate = kSampleRate;
  std::string speaker_id;
  std::string utterance_id;

  std::size_t size() const { return samples.size(); }
  double peak() const {
    double p = 0.0;
    for (double s : samples) p = std::max(p, std::abs(s));
    return p;
  }
};

namespace detail {

inline std::uint32_t le32(const std::string& b, std::size_t at) {
  std::uint32_t v;
  std::memcpy(&v, b.data() + at, 4);
  return v;
}
inline std::uint16_t le16(const std::string& b, std::size_t at) {
  std::uint16_t v;
  std::memcpy(&v, b.data() + at, 2);
  return v;
}

// Zeroth-order modified Bessel function, for the Kaiser window.
inline double bessel_i0(double x) { return std::cyl_bessel_i(0.0, x); }

}  // namespace detail

// Band-limited resampling with a Kaiser-windowed sinc kernel. The cutoff sits
// at 0.95 of the lower Nyquist frequency.
inline std::vector<double> resample(const std::vector<double>& in, int from_rate, int to_rate) {
  if (from_rate <= 0 || to_rate <= 0) throw Error(ErrorKind::config, "sample rates must be positive");
  if (from_rate == to_rate || in.empty()) return in;
  constexpr int kZeroCrossings = 32;
  constexpr double kBeta = 8.6;
  const double ratio = static_cast<double>(to_rate) / from_rate;
  const double cutoff = 0.95 * std::min(1.0, ratio);  // relative to input Nyquist
  const double half_width = kZeroCrossings / cutoff;  // in input samples
  const std::size_t n_out =
      static_cast<std::size_t>(std::llround(static_cast<double>(in.size()) * ratio));
  const double norm = detail::bessel_i0(kBeta);
  std::vector<double> out(n_out, 0.0);
  const auto n_in = static_cast<long long>(in.size());
  for (std::size_t n = 0; n < n_out; ++n) {
    const double center = static_cast<double>(n) / ratio;
    const auto lo = std::max<long long>(0, static_cast<long long>(std::ceil(center - half_width)));
    const auto hi = std::min<long long>(n_in - 1, static_cast<long long>(std::floor(center + half_width)));
    double acc = 0.0;
    for (long long k = lo; k <= hi; ++k) {
      const double d = static_cast<double>(k) - center;
      const double r = d / half_width;
      const double win = detail::bessel_i0(kBeta * std::sqrt(std::max(0.0, 1.0 - r * r))) / norm;
      const double x = cutoff * d;
      const double sinc = x == 0.0 ? 1.0 : std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
      acc += in[static_cast<std::size_t>(k)] * cutoff * sinc * win;
    }
    out[n] = acc;
  }
  return out;
}

// Decodes a mono RIFF/WAVE file: integer PCM (8/16/24/32 bit) or IEEE float.
// Integer PCM is divided by its positive full scale (2^(bits-1) - 1) and
// clamped, so a full-scale signal peaks at exactly 1.0.
inline AudioClip decode_wav(const std::string& bytes, const std::string& origin = "<wav>") {
  auto fail = [&](const std::string& why) { return Error(ErrorKind::decode, origin + ": " + why); };
  if (bytes.size() < 12 || bytes.compare(0, 4, "RIFF") != 0 || bytes.compare(8, 4, "WAVE") != 0) {
    throw fail("not a RIFF/WAVE file");
  }
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  std::size_t data_at = 0, data_len = 0;
  bool have_data = false;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    std::string id = bytes.substr(pos, 4);
    std::size_t len = detail::le32(bytes, pos + 4);
    std::size_t body = pos + 8;
    if (id == "fmt ") {
      if (len < 16 || body + len > bytes.size()) throw fail("truncated fmt chunk");
      format = detail::le16(bytes, body);
      channels = detail::le16(bytes, body + 2);
      rate = detail::le32(bytes, body + 4);
      bits = detail::le16(bytes, body + 14);
      if (format == 0xFFFE && len >= 26) format = detail::le16(bytes, body + 24);
      have_fmt = true;
    } else if (id == "data") {
      data_at = body;
      data_len = std::min(len, bytes.size() - body);
      have_data = true;
      break;
    }
    pos = body + len + (len & 1);
  }
  if (!have_fmt) throw fail("missing fmt chunk");
  if (!have_data) throw fail("missing data chunk");
  if (channels != 1) throw fail("expected mono audio, found " + std::to_string(channels) + " channels");
  if (rate == 0) throw fail("zero sample rate");
  if (format != 1 && format != 3) throw fail("unsupported sample format " + std::to_string(format));
  if (format == 3 && bits != 32 && bits != 64) throw fail("unsupported float width");
  if (format == 1 && bits != 8 && bits != 16 && bits != 24 && bits != 32) throw fail("unsupported PCM width");
  const std::size_t width = bits / 8;
  const std::size_t n = data_len / width;
  AudioClip clip;
  clip.sample_rate = static_cast<int>(rate);
  clip.samples.resize(n);
  const double full_scale = format == 1 ? std::ldexp(1.0, bits - 1) - 1.0 : 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    const char* p = bytes.data() + data_at + i * width;
    double v = 0.0;
    if (format == 3) {
      if (bits == 32) {
        float f;
        std::memcpy(&f, p, 4);
        v = f;
      } else {
        std::memcpy(&v, p, 8);
      }
    } else if (bits == 8) {
      v = static_cast<double>(static_cast<unsigned char>(*p)) - 128.0;
    } else if (bits == 16) {
      std::int16_t s;
      std::memcpy(&s, p, 2);
      v = s;
    } else if (bits == 24) {
      std::int32_t s = (static_cast<unsigned char>(p[0])) | (static_cast<unsigned char>(p[1]) << 8) |
                       (static_cast<std::int32_t>(static_cast<signed char>(p[2])) << 16);
      v = s;
    } else {
      std::int32_t s;
      std::memcpy(&s, p, 4);
      v = s;
    }
    if (!std::isfinite(v)) throw fail("non-finite sample");
    clip.samples[i] = std::clamp(v / full_scale, -1.0, 1.0);
  }
  return clip;
}

// 16-bit PCM mono encoding, the inverse of decode_wav's scaling.
inline std::string encode_wav(const AudioClip& clip) {
  const auto n = static_cast<std::uint32_t>(clip.samples.size());
  std::string out;
  auto put32 = [&](std::uint32_t v) { out.append(reinterpret_cast<const char*>(&v), 4); };
  auto put16 = [&](std::uint16_t v) { out.append(reinterpret_cast<const char*>(&v), 2); };
  out += "RIFF";
  put32(36 + n * 2);
  out += "WAVEfmt ";
  put32(16);
  put16(1);
  put16(1);
  put32(static_cast<std::uint32_t>(clip.sample_rate));
  put32(static_cast<std::uint32_t>(clip.sample_rate) * 2);
  put16(2);
  put16(16);
  out += "data";
  put32(n * 2);
  for (double s : clip.samples) {
    auto q = static_cast<std::int16_t>(std::lround(std::clamp(s, -1.0, 1.0) * 32767.0));
    put16(static_cast<std::uint16_t>(q));
  }
  return out;
}

inline void save_wav(const fs::path& path, const AudioClip& clip) { write_file_atomic(path, encode_wav(clip)); }

// Reads `<speaker_id>/<utterance_id>.wav`, resamples to 16 kHz and fills ids
// from the path.
inline AudioClip load_audio(const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorKind::decode, path.string() + ": file does not exist");
  AudioClip clip = decode_wav(read_file(path), path.string());
  if (clip.samples.empty()) throw Error(ErrorKind::empty_input, path.string() + ": zero-length audio");
  if (clip.sample_rate != kSampleRate) {
    clip.samples = resample(clip.samples, clip.sample_rate, kSampleRate);
    clip.sample_rate = kSampleRate;
    for (double& s : clip.samples) s = std::clamp(s, -1.0, 1.0);
  }
  clip.utterance_id = path.stem().string();
  clip.speaker_id = path.parent_path().filename().string();
  return clip;
}

}  // namespace avqvc
