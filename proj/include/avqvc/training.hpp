#pragma once

#include <zlib.h>

#include <cstdio>
#include <fstream>
#include <functional>
#include <optional>
#include <string>

#include "avqvc/corpus.hpp"
#include "avqvc/frontend.hpp"
#include "avqvc/io.hpp"
#include "avqvc/objective.hpp"
#include "avqvc/optimizer.hpp"

namespace avqvc {

enum class TrainMode { avqvc, vqvc };

inline std::string to_string(TrainMode m) { return m == TrainMode::avqvc ? "avqvc" : "vqvc"; }

inline TrainMode parse_train_mode(const std::string& s) {
  if (s == "avqvc") return TrainMode::avqvc;
  if (s == "vqvc") return TrainMode::vqvc;
  throw Error(ErrorKind::config, "train.mode must be 'avqvc' or 'vqvc', got '" + s + "'");
}

struct TrainConfig {
  std::int64_t steps = 1000;
  int batch_size = 16;
  AdamConfig adam;
  std::uint64_t seed = 0;
  TrainMode mode = TrainMode::avqvc;
  int segment_len = 128;
  double grad_clip = 1.0;
  std::int64_t checkpoint_every = 0;  // 0: only at the end
  int prefetch_workers = 0;

  bool operator==(const TrainConfig& o) const {
    return steps == o.steps && batch_size == o.batch_size && adam.learning_rate == o.adam.learning_rate &&
           adam.beta1 == o.adam.beta1 && adam.beta2 == o.adam.beta2 && adam.epsilon == o.adam.epsilon &&
           seed == o.seed && mode == o.mode && segment_len == o.segment_len && grad_clip == o.grad_clip &&
           checkpoint_every == o.checkpoint_every && prefetch_workers == o.prefetch_workers;
  }

  void validate() const {
    auto bad = [](const std::string& why) { throw Error(ErrorKind::config, "train: " + why); };
    if (steps < 0) bad("steps must be >= 0");
    if (batch_size < 1) bad("batch_size must be >= 1");
    if (!(adam.learning_rate > 0.0)) bad("learning_rate must be positive");
    if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0)) bad("betas must be in [0,1)");
    if (segment_len < 1) bad("segment_len must be >= 1");
    if (grad_clip < 0.0) bad("grad_clip must be >= 0");
    if (prefetch_workers < 0) bad("prefetch_workers must be >= 0");
  }

  KeyValues to_kv() const {
    KeyValues kv;
    kv.set("train.steps", static_cast<long long>(steps));
    kv.set("train.batch_size", batch_size);
    kv.set("train.learning_rate", adam.learning_rate);
    kv.set("train.beta1", adam.beta1);
    kv.set("train.beta2", adam.beta2);
    kv.set("train.epsilon", adam.epsilon);
    kv.set("train.seed", seed);
    kv.set("train.mode", to_string(mode));
    kv.set("train.segment_len", segment_len);
    kv.set("train.grad_clip", grad_clip);
    kv.set("train.checkpoint_every", static_cast<long long>(checkpoint_every));
    kv.set("train.prefetch_workers", prefetch_workers);
    return kv;
  }

  static TrainConfig from_kv(const KeyValues& kv) { return from_kv(kv, TrainConfig()); }

  static TrainConfig from_kv(const KeyValues& kv, TrainConfig c) {
    auto opt = [&](const char* k) { return kv.has(std::string("train.") + k); };
    if (opt("steps")) c.steps = kv.get_int<std::int64_t>("train.steps");
    if (opt("batch_size")) c.batch_size = kv.get_int<int>("train.batch_size");
    if (opt("learning_rate")) c.adam.learning_rate = kv.get_double("train.learning_rate");
    if (opt("beta1")) c.adam.beta1 = kv.get_double("train.beta1");
    if (opt("beta2")) c.adam.beta2 = kv.get_double("train.beta2");
    if (opt("epsilon")) c.adam.epsilon = kv.get_double("train.epsilon");
    if (opt("seed")) c.seed = kv.get_int<std::uint64_t>("train.seed");
    if (opt("mode")) c.mode = parse_train_mode(kv.get("train.mode"));
    if (opt("segment_len")) c.segment_len = kv.get_int<int>("train.segment_len");
    if (opt("grad_clip")) c.grad_clip = kv.get_double("train.grad_clip");
    if (opt("checkpoint_every")) c.checkpoint_every = kv.get_int<std::int64_t>("train.checkpoint_every");
    if (opt("prefetch_workers")) c.prefetch_workers = kv.get_int<int>("train.prefetch_workers");
    return c;
  }
};

// Everything needed to continue training or to run inference.
struct Checkpoint {
  Model model;
  AdamState adam;
  LossWeights weights;
  FrontendConfig frontend;
  NormStats norm;
  TrainConfig config;
  std::int64_t step = 0;
};

inline Checkpoint init_checkpoint(const TrainConfig& config, const ModelConfig& model_config,
                                  const FrontendConfig& frontend, const LossWeights& weights,
                                  const FeatureCorpus& corpus) {
  config.validate();
  weights.validate();
  if (corpus.empty()) throw Error(ErrorKind::data, "training corpus is empty");
  Checkpoint ck;
  ck.model = Model(model_config);
  ck.adam = AdamState::for_params(ck.model.params());
  ck.weights = weights;
  ck.frontend = frontend;
  std::vector<Matrix> feats;
  feats.reserve(corpus.size());
  for (const auto& item : corpus) {
    require_shape(item.frames.cols() == model_config.n_mels,
                  "utterance " + item.speaker_id + "/" + item.utterance_id + " has " +
                      std::to_string(item.frames.cols()) + " bins, model expects " +
                      std::to_string(model_config.n_mels));
    feats.push_back(item.frames);
  }
  ck.norm = NormStats::fit(feats);
  ck.config = config;
  return ck;
}

inline FeatureCorpus normalize_corpus(const FeatureCorpus& corpus, const NormStats& norm) {
  FeatureCorpus out = corpus;
  for (auto& item : out) item.frames = norm.apply(item.frames);
  return out;
}

// Gradient of the batch objective at the current parameters, with the
// weights the schedule selects for this batch. Does not touch the optimizer.
struct StepGradients {
  LossReport report;
  LossWeights weights;
  ParameterSet grads;
};

inline StepGradients triplet_batch_gradients(const Model& model, const TripletBatch& batch, const LossWeights& w) {
  if (batch.empty()) throw Error(ErrorKind::data, "empty batch");
  std::vector<TripletPass> passes;
  passes.reserve(batch.size());
  LossParts mean;
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (const auto& t : batch) {
    passes.push_back(triplet_forward(model, t.x1.frames, t.x2.frames, t.x3.frames));
    const auto& p = passes.back().parts;
    mean.recon += scale * p.recon;
    mean.latent += scale * p.latent;
    mean.speaker += scale * p.speaker;
    mean.diff += scale * p.diff;
  }
  StepGradients out;
  out.weights = update_weights(total_loss(mean, w), w);
  out.report = total_loss(mean, out.weights);
  out.grads = zeros_like(model.params());
  for (const auto& p : passes) triplet_backward(model, p, out.weights, scale, out.grads);
  return out;
}

inline StepGradients utterance_batch_gradients(const Model& model, const UtteranceBatch& batch, const LossWeights& w) {
  if (batch.empty()) throw Error(ErrorKind::data, "empty batch");
  std::vector<SelfPass> passes;
  passes.reserve(batch.size());
  LossParts mean;
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (const auto& s : batch) {
    passes.push_back(self_forward(model, s.frames));
    mean.recon += scale * passes.back().parts.recon;
    mean.latent += scale * passes.back().parts.latent;
  }
  StepGradients out;
  out.weights = update_weights(total_loss(mean, w), w);
  out.report = total_loss(mean, out.weights);
  out.grads = zeros_like(model.params());
  for (const auto& p : passes) self_backward(model, p, out.weights, scale, out.grads);
  return out;
}

inline LossReport apply_step(Checkpoint& ck, StepGradients&& g) {
  for (const auto& m : g.grads) {
    if (!m.allFinite()) throw Error(ErrorKind::numeric, "non-finite gradient at step " + std::to_string(ck.step));
  }
  clip_global_norm(g.grads, ck.config.grad_clip);
  adam_step(ck.model.params(), g.grads, ck.adam, ck.config.adam);
  ck.weights = g.weights;
  ck.step += 1;
  return g.report;
}

// One AVQVC update on a batch of (already normalized) triplets.
inline LossReport train_step(Checkpoint& ck, const TripletBatch& batch) {
  if (ck.config.mode != TrainMode::avqvc) throw Error(ErrorKind::config, "train_step requires mode avqvc");
  return apply_step(ck, triplet_batch_gradients(ck.model, batch, ck.weights));
}

// One VQVC-baseline update: self reconstruction and latent loss only.
inline LossReport train_step_vqvc(Checkpoint& ck, const UtteranceBatch& batch) {
  if (ck.config.mode != TrainMode::vqvc) throw Error(ErrorKind::config, "train_step_vqvc requires mode vqvc");
  return apply_step(ck, utterance_batch_gradients(ck.model, batch, ck.weights));
}

// ---------------------------------------------------------------------------
// Checkpoint container
//
//   "AVQVCKPT" | u32 version | u64 payload bytes | u32 crc32(payload) | payload
//
// The payload is a record list: a text record holding every configuration and
// scalar state value, then named float64 matrices.

inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

class ByteWriter {
 public:
  template <typename T>
  void put(T v) {
    buf_.append(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void put_string(const std::string& s) {
    put<std::uint64_t>(s.size());
    buf_ += s;
  }
  void put_matrix(const std::string& name, const Matrix& m) {
    put_string(name);
    put<std::uint8_t>(1);
    put<std::uint64_t>(static_cast<std::uint64_t>(m.rows()));
    put<std::uint64_t>(static_cast<std::uint64_t>(m.cols()));
    buf_.append(reinterpret_cast<const char*>(m.data()), sizeof(double) * static_cast<std::size_t>(m.size()));
  }
  void put_text(const std::string& name, const std::string& text) {
    put_string(name);
    put<std::uint8_t>(0);
    put_string(text);
  }
  const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  ByteReader(const std::string& b, std::size_t pos, std::string origin)
      : b_(b), pos_(pos), origin_(std::move(origin)) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, b_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string get_string() {
    const auto n = get<std::uint64_t>();
    need(n);
    std::string s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  Matrix get_matrix_body() {
    const auto rows = get<std::uint64_t>();
    const auto cols = get<std::uint64_t>();
    if (rows > (1ULL << 32) || cols > (1ULL << 32)) fail("implausible matrix shape");
    const std::uint64_t n = rows * cols;
    need(n * sizeof(double));
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    std::memcpy(m.data(), b_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
    return m;
  }
  bool done() const { return pos_ == b_.size(); }
  [[noreturn]] void fail(const std::string& why) const { throw Error(ErrorKind::load, origin_ + ": " + why); }

 private:
  void need(std::uint64_t n) const {
    if (n > b_.size() - pos_) fail("truncated checkpoint");
  }
  const std::string& b_;
  std::size_t pos_;
  std::string origin_;
};

inline std::string tensor_name(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s.%03zu", prefix, i);
  return buf;
}

}  // namespace detail

// Flat key-value view of every configuration in a checkpoint.
inline KeyValues checkpoint_config_kv(const Checkpoint& ck) {
  KeyValues kv = ck.model.config().to_kv();
  kv.merge(ck.frontend.to_kv());
  kv.merge(ck.weights.to_kv());
  kv.merge(ck.config.to_kv());
  return kv;
}

inline std::string encode_checkpoint(const Checkpoint& ck) {
  KeyValues kv = checkpoint_config_kv(ck);
  kv.set("state.step", static_cast<long long>(ck.step));
  kv.set("state.adam_t", static_cast<long long>(ck.adam.t));
  kv.set("state.n_tensors", static_cast<long long>(ck.model.params().size()));
  detail::ByteWriter w;
  const auto& params = ck.model.params();
  w.put<std::uint32_t>(static_cast<std::uint32_t>(4 + 3 * params.size()));
  w.put_text("config", kv.to_string());
  w.put_matrix("norm.mean", ck.norm.mean);
  w.put_matrix("norm.stddev", ck.norm.stddev);
  for (std::size_t i = 0; i < params.size(); ++i) w.put_matrix(detail::tensor_name("param", i), params[i]);
  for (std::size_t i = 0; i < params.size(); ++i) w.put_matrix(detail::tensor_name("adam.m", i), ck.adam.m[i]);
  for (std::size_t i = 0; i < params.size(); ++i) w.put_matrix(detail::tensor_name("adam.v", i), ck.adam.v[i]);
  // trailing marker keeps the record count honest
  w.put_text("end", "");
  const std::string& payload = w.bytes();
  detail::ByteWriter out;
  std::string head = "AVQVCKPT";
  out.put<std::uint32_t>(kCheckpointVersion);
  out.put<std::uint64_t>(payload.size());
  out.put<std::uint32_t>(static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(payload.data()), static_cast<uInt>(payload.size()))));
  return head + out.bytes() + payload;
}

inline Checkpoint decode_checkpoint(const std::string& bytes, const std::string& origin = "<checkpoint>") {
  detail::ByteReader hdr(bytes, 0, origin);
  if (bytes.size() < 24 || bytes.compare(0, 8, "AVQVCKPT") != 0) hdr.fail("not a checkpoint file");
  detail::ByteReader r(bytes, 8, origin);
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    r.fail("checkpoint version " + std::to_string(version) + " is not supported (expected " +
           std::to_string(kCheckpointVersion) + ")");
  }
  const auto size = r.get<std::uint64_t>();
  const auto crc = r.get<std::uint32_t>();
  if (bytes.size() - 24 != size) r.fail("payload length mismatch");
  const auto actual =
      crc32(0L, reinterpret_cast<const Bytef*>(bytes.data() + 24), static_cast<uInt>(size));
  if (actual != crc) r.fail("checksum mismatch (file corrupt or modified)");

  detail::ByteReader p(bytes, 24, origin);
  const auto n_records = p.get<std::uint32_t>();
  std::map<std::string, Matrix> mats;
  std::optional<std::string> config_text;
  for (std::uint32_t i = 0; i < n_records; ++i) {
    const std::string name = p.get_string();
    const auto type = p.get<std::uint8_t>();
    if (type == 0) {
      std::string text = p.get_string();
      if (name == "config") config_text = std::move(text);
    } else if (type == 1) {
      mats[name] = p.get_matrix_body();
    } else {
      p.fail("unknown record type");
    }
  }
  if (!p.done()) p.fail("trailing bytes");
  if (!config_text) p.fail("missing config record");

  try {
    const KeyValues kv = KeyValues::parse(*config_text, origin);
    Checkpoint ck;
    const ModelConfig mc = ModelConfig::from_kv(kv);
    ck.frontend = FrontendConfig::from_kv(kv);
    ck.weights = LossWeights::from_kv(kv);
    ck.config = TrainConfig::from_kv(kv);
    ck.step = kv.get_int<std::int64_t>("state.step");
    const auto n = kv.get_int<std::size_t>("state.n_tensors");
    auto take = [&](const std::string& name) {
      auto it = mats.find(name);
      if (it == mats.end()) p.fail("missing tensor " + name);
      return it->second;
    };
    ParameterSet params, m, v;
    for (std::size_t i = 0; i < n; ++i) {
      params.push_back(take(detail::tensor_name("param", i)));
      m.push_back(take(detail::tensor_name("adam.m", i)));
      v.push_back(take(detail::tensor_name("adam.v", i)));
    }
    ck.model = Model(mc, std::move(params));
    ck.adam = AdamState{std::move(m), std::move(v), kv.get_int<std::int64_t>("state.adam_t")};
    ck.norm.mean = take("norm.mean");
    ck.norm.stddev = take("norm.stddev");
    return ck;
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::load) throw;
    throw Error(ErrorKind::load, origin + ": " + e.what());
  }
}

inline void save_checkpoint(const Checkpoint& ck, const fs::path& path) {
  write_file_atomic(path, encode_checkpoint(ck));
}

inline Checkpoint load_checkpoint(const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorKind::load, path.string() + ": no such checkpoint");
  return decode_checkpoint(read_file(path), path.string());
}

inline void save_codebook(const Checkpoint& ck, const fs::path& path) { npy::save(path, ck.model.codebook()); }

// ---------------------------------------------------------------------------

inline std::string metrics_header() { return "step\trecon\tlatent\tspeaker\tdiff\ttotal\ttriggered\n"; }

inline std::string metrics_row(std::int64_t step, const LossReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%lld\t%.17g\t%.17g\t%.17g\t%.17g\t%.17g\t%d\n", static_cast<long long>(step),
                r.recon, r.latent, r.speaker, r.diff, r.total, r.schedule_triggered ? 1 : 0);
  return buf;
}

struct TrainHooks {
  std::optional<fs::path> metrics_log;   // appended, one row per step
  std::optional<fs::path> checkpoint;    // rewritten atomically
  std::function<void(std::int64_t, const LossReport&)> on_step;
};

// Runs steps [ck.step, ck.config.steps). `corpus` holds raw features; they
// are normalized with the checkpoint's statistics.
inline Checkpoint train(Checkpoint ck, const FeatureCorpus& corpus, const TrainHooks& hooks = {}) {
  ck.config.validate();
  if (corpus.empty()) throw Error(ErrorKind::data, "training corpus is empty");
  const FeatureCorpus normalized = normalize_corpus(corpus, ck.norm);
  const CorpusIndex index(normalized);
  if (ck.config.mode == TrainMode::avqvc) index.require_triplet_ready();

  std::ofstream log;
  if (hooks.metrics_log) {
    const bool fresh = !fs::exists(*hooks.metrics_log) || fs::file_size(*hooks.metrics_log) == 0;
    if (hooks.metrics_log->has_parent_path()) fs::create_directories(hooks.metrics_log->parent_path());
    log.open(*hooks.metrics_log, std::ios::app);
    if (!log) throw Error(ErrorKind::io, "cannot open metrics log " + hooks.metrics_log->string());
    if (fresh) log << metrics_header();
  }

  const auto& cfg = ck.config;
  const std::int64_t first = ck.step, last = cfg.steps;
  auto checkpoint_now = [&] {
    if (hooks.checkpoint) save_checkpoint(ck, *hooks.checkpoint);
  };

  auto run = [&](auto& prefetcher, auto&& step_fn) {
    for (std::int64_t s = first; s < last; ++s) {
      const LossReport r = step_fn(prefetcher.next());
      if (log) log << metrics_row(s, r) << std::flush;
      if (hooks.on_step) hooks.on_step(s, r);
      if (cfg.checkpoint_every > 0 && ck.step % cfg.checkpoint_every == 0) checkpoint_now();
    }
  };

  if (cfg.mode == TrainMode::avqvc) {
    Prefetcher<TripletBatch> pf(
        [&](std::int64_t s) { return triplet_batch_for_step(index, cfg.seed, s, cfg.batch_size, cfg.segment_len); },
        first, last, cfg.prefetch_workers);
    run(pf, [&](const TripletBatch& b) { return train_step(ck, b); });
  } else {
    // three utterances per triplet, so both modes see the same frames per step
    Prefetcher<UtteranceBatch> pf(
        [&](std::int64_t s) {
          return utterance_batch_for_step(index, cfg.seed, s, 3 * cfg.batch_size, cfg.segment_len);
        },
        first, last, cfg.prefetch_workers);
    run(pf, [&](const UtteranceBatch& b) { return train_step_vqvc(ck, b); });
  }
  checkpoint_now();
  return ck;
}

}  // namespace avqvc
