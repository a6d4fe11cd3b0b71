#pragma once

#include <nlohmann/json.hpp>
#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include "avqvc/conversion.hpp"
#include "avqvc/synthetic.hpp"

namespace avqvc {

// ---------------------------------------------------------------------------
// Mel-cepstral distortion

// Orthonormal DCT-II over mel bins; returns coefficients 1..n (c0 dropped).
inline Matrix mel_cepstra(const Matrix& log_mel, int n_coeffs = 13) {
  const Eigen::Index m = log_mel.cols();
  const int n = static_cast<int>(std::min<Eigen::Index>(n_coeffs, m - 1));
  require_shape(n >= 1, "mel_cepstra: need at least 2 mel bins");
  Matrix basis(m, n);
  for (int k = 1; k <= n; ++k) {
    for (Eigen::Index j = 0; j < m; ++j) {
      basis(j, k - 1) = std::sqrt(2.0 / static_cast<double>(m)) *
                        std::cos(std::numbers::pi * k * (2.0 * static_cast<double>(j) + 1.0) / (2.0 * m));
    }
  }
  return log_mel * basis;
}

using AlignmentPath = std::vector<std::pair<Eigen::Index, Eigen::Index>>;

// Dynamic time warping under Euclidean frame cost with steps (1,1), (1,0),
// (0,1). Ties prefer the diagonal, then advancing the first sequence.
inline AlignmentPath dtw_align(const Matrix& a, const Matrix& b) {
  const Eigen::Index n = a.rows(), m = b.rows();
  const double inf = std::numeric_limits<double>::infinity();
  Matrix acc = Matrix::Constant(n + 1, m + 1, inf);
  acc(0, 0) = 0.0;
  for (Eigen::Index i = 1; i <= n; ++i) {
    for (Eigen::Index j = 1; j <= m; ++j) {
      const double c = (a.row(i - 1) - b.row(j - 1)).norm();
      acc(i, j) = c + std::min({acc(i - 1, j - 1), acc(i - 1, j), acc(i, j - 1)});
    }
  }
  AlignmentPath path;
  Eigen::Index i = n, j = m;
  while (i > 0 && j > 0) {
    path.emplace_back(i - 1, j - 1);
    const double diag = acc(i - 1, j - 1), up = acc(i - 1, j), left = acc(i, j - 1);
    if (diag <= up && diag <= left) {
      --i;
      --j;
    } else if (up <= left) {
      --i;
    } else {
      --j;
    }
  }
  std::reverse(path.begin(), path.end());
  return path;
}

inline double mcd_constant() { return 10.0 / std::log(10.0) * std::sqrt(2.0); }

// Mean cepstral distance along the DTW path, in dB.
inline double mcd(const Matrix& reference, const Matrix& converted) {
  if (reference.rows() == 0 || converted.rows() == 0) throw Error(ErrorKind::data, "mcd: empty sequence");
  require_shape(reference.cols() == converted.cols(), "mcd: coefficient count mismatch");
  const auto path = dtw_align(reference, converted);
  double sum = 0.0;
  for (const auto& [i, j] : path) sum += (reference.row(i) - converted.row(j)).norm();
  return mcd_constant() * sum / static_cast<double>(path.size());
}

inline double mel_mcd(const Matrix& reference_log_mel, const Matrix& converted_log_mel, int n_coeffs = 13) {
  return mcd(mel_cepstra(reference_log_mel, n_coeffs), mel_cepstra(converted_log_mel, n_coeffs));
}

// ---------------------------------------------------------------------------
// Speaker similarity and disentanglement

inline double speaker_similarity(const RowVector& a, const RowVector& b) {
  require_shape(a.size() == b.size(), "speaker_similarity: dimension mismatch");
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 && nb == 0.0) throw Error(ErrorKind::numeric, "speaker_similarity: both vectors are zero");
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

struct ContentSpeaker {
  Matrix content;
  RowVector speaker;
};

// Anything that splits features into (content, speaker) and decodes a pair
// back to features in the same domain.
template <typename E>
concept Embedder = requires(const E& e, const Matrix& x, const ContentSpeaker& cs) {
  { e.analyze(x) } -> std::convertible_to<ContentSpeaker>;
  { e.decode(cs.content, cs.speaker) } -> std::convertible_to<Matrix>;
};

// Adapter over a trained checkpoint; inputs and outputs are raw features.
class CheckpointEmbedder {
 public:
  explicit CheckpointEmbedder(const Checkpoint& ck) : ck_(&ck) {}

  ContentSpeaker analyze(const Matrix& x) const {
    auto b = ck_->model.analyze(ck_->norm.apply(x));
    return {std::move(b.content), std::move(b.speaker)};
  }

  Matrix decode(const Matrix& content, const RowVector& speaker) const {
    return ck_->norm.invert(ck_->model.decode(content, speaker));
  }

 private:
  const Checkpoint* ck_;
};

struct DisentanglementScore {
  double intra_cosine = 0.0;
  double inter_cosine = 0.0;
  double separation = 0.0;  // intra - inter
  double self_l1 = 0.0;
  double swap_l1 = 0.0;
  double swap_ratio = 0.0;  // swap_l1 / self_l1
  std::size_t intra_pairs = 0;
  std::size_t inter_pairs = 0;
};

template <Embedder E>
DisentanglementScore disentanglement_score(const E& embedder, const FeatureCorpus& heldout) {
  {
    std::set<std::string> spk;
    for (const auto& it : heldout) spk.insert(it.speaker_id);
    if (spk.size() < 2) throw Error(ErrorKind::data, "disentanglement score needs >= 2 speakers");
  }
  std::vector<ContentSpeaker> parts;
  parts.reserve(heldout.size());
  for (const auto& it : heldout) parts.push_back(embedder.analyze(it.frames));

  DisentanglementScore s;
  double intra = 0.0, inter = 0.0, self_sum = 0.0, swap_sum = 0.0;
  std::size_t self_n = 0;
  for (std::size_t i = 0; i < heldout.size(); ++i) {
    for (std::size_t j = i + 1; j < heldout.size(); ++j) {
      const double c = speaker_similarity(parts[i].speaker, parts[j].speaker);
      if (heldout[i].speaker_id == heldout[j].speaker_id) {
        intra += c;
        ++s.intra_pairs;
      } else {
        inter += c;
        ++s.inter_pairs;
      }
    }
  }
  for (std::size_t i = 0; i < heldout.size(); ++i) {
    const double self = l1_mean(embedder.decode(parts[i].content, parts[i].speaker), heldout[i].frames);
    for (std::size_t j = 0; j < heldout.size(); ++j) {
      if (i == j || heldout[i].speaker_id != heldout[j].speaker_id) continue;
      swap_sum += l1_mean(embedder.decode(parts[i].content, parts[j].speaker), heldout[i].frames);
      self_sum += self;
      ++self_n;
    }
  }
  if (s.intra_pairs == 0) throw Error(ErrorKind::data, "disentanglement score needs a speaker with >= 2 utterances");
  s.intra_cosine = intra / static_cast<double>(s.intra_pairs);
  s.inter_cosine = inter / static_cast<double>(s.inter_pairs);
  s.separation = s.intra_cosine - s.inter_cosine;
  s.self_l1 = self_sum / static_cast<double>(self_n);
  s.swap_l1 = swap_sum / static_cast<double>(self_n);
  s.swap_ratio = s.self_l1 > 0.0 ? s.swap_l1 / s.self_l1 : (s.swap_l1 > 0.0 ? std::numeric_limits<double>::infinity() : 1.0);
  return s;
}

// Per-speaker stratified split: ceil(fraction * n) utterances of every
// speaker are held out, chosen by a seeded shuffle.
struct CorpusSplit {
  FeatureCorpus train;
  FeatureCorpus heldout;
};

inline CorpusSplit split_heldout(const FeatureCorpus& corpus, double fraction = 0.2, std::uint64_t seed = 0) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw Error(ErrorKind::config, "held-out fraction must be in (0,1)");
  CorpusIndex index(corpus);
  CorpusSplit split;
  Rng rng(derive_seed(seed, 0x4e1d));
  std::vector<bool> held(corpus.size(), false);
  for (const auto& spk : index.speakers()) {
    auto utts = index.utterances_of(spk);
    std::shuffle(utts.begin(), utts.end(), rng);
    const auto n_held = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(utts.size())));
    for (std::size_t k = 0; k < std::min(n_held, utts.size()); ++k) held[utts[k]] = true;
  }
  for (std::size_t i = 0; i < corpus.size(); ++i) (held[i] ? split.heldout : split.train).push_back(corpus[i]);
  return split;
}

// ---------------------------------------------------------------------------
// Codebook-size sweep

inline const std::vector<int>& default_sweep_sizes() {
  static const std::vector<int> sizes = {128, 256, 512, 1024};
  return sizes;
}

struct SweepConfig {
  TrainConfig train;
  ModelConfig model;
  LossWeights weights;
  double heldout_fraction = 0.2;
  std::uint64_t split_seed = 0;
  int threads = 1;
};

struct SweepRow {
  int codebook_size = 0;
  bool ok = false;
  std::string error;
  LossReport final_loss;  // last training step
  DisentanglementScore score;
  double mcd = 0.0;  // converted vs ground-truth re-rendering, held-out pairs
};

struct SweepReport {
  std::vector<SweepRow> rows;
  std::string fingerprint;

  std::string to_tsv() const;
  std::string to_json() const;
};

// Mean MCD over held-out cross-speaker pairs: content of utterance a rendered
// with speaker of utterance b, compared with the ground-truth rendering.
inline double synthetic_conversion_mcd(const Checkpoint& ck, const SyntheticCorpus& corpus,
                                       const std::vector<std::size_t>& heldout_ids) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t ia : heldout_ids) {
    for (std::size_t ib : heldout_ids) {
      const auto& a = corpus.utterances[ia];
      const auto& b = corpus.utterances[ib];
      if (a.speaker == b.speaker) continue;
      const Matrix converted = convert(ck, a.frames, b.frames);
      const Matrix truth = render_utterance(a.content, corpus.offsets.row(b.speaker));
      sum += mel_mcd(truth, converted);
      ++n;
    }
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

inline SweepReport codebook_sweep(const std::vector<int>& sizes, const SweepConfig& base,
                                  const SyntheticCorpus& corpus) {
  if (sizes.empty()) throw Error(ErrorKind::config, "sweep needs at least one codebook size");
  const FeatureCorpus features = to_feature_corpus(corpus);
  const CorpusSplit split = split_heldout(features, base.heldout_fraction, base.split_seed);
  std::vector<std::size_t> heldout_ids;
  for (std::size_t i = 0; i < features.size(); ++i) {
    for (const auto& h : split.heldout) {
      if (h.utterance_id == features[i].utterance_id) heldout_ids.push_back(i);
    }
  }

  std::vector<int> sorted = sizes;
  std::sort(sorted.begin(), sorted.end());
  auto run_row = [&](int k) {
    SweepRow row;
    row.codebook_size = k;
    try {
      ModelConfig mc = base.model;
      mc.codebook_size = k;
      Checkpoint ck = init_checkpoint(base.train, mc, FrontendConfig{}, base.weights, split.train);
      TrainHooks hooks;
      hooks.on_step = [&](std::int64_t, const LossReport& r) { row.final_loss = r; };
      ck = train(std::move(ck), split.train, hooks);
      row.score = disentanglement_score(CheckpointEmbedder(ck), split.heldout);
      row.mcd = synthetic_conversion_mcd(ck, corpus, heldout_ids);
      row.ok = true;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    return row;
  };

  SweepReport report;
  report.rows.resize(sorted.size());
  if (base.threads > 1) {
    std::vector<std::future<SweepRow>> futs;
    for (int k : sorted) futs.push_back(std::async(std::launch::async, run_row, k));
    for (std::size_t i = 0; i < futs.size(); ++i) report.rows[i] = futs[i].get();
  } else {
    for (std::size_t i = 0; i < sorted.size(); ++i) report.rows[i] = run_row(sorted[i]);
  }

  KeyValues kv = base.model.to_kv();
  kv.merge(base.train.to_kv());
  kv.merge(base.weights.to_kv());
  kv.merge(corpus.spec.to_kv());
  const std::string text = kv.to_string();
  char buf[16];
  std::snprintf(buf, sizeof buf, "%08lx",
                crc32(0L, reinterpret_cast<const Bytef*>(text.data()), static_cast<uInt>(text.size())));
  report.fingerprint = buf;
  return report;
}

// Small synthetic setup used by the integration checks and the CLI defaults:
// 4 speakers x 20 utterances of 16-dim features, D=16, K=32.
struct SyntheticProtocol {
  SyntheticCorpusSpec corpus;
  SweepConfig run;
};

inline SyntheticProtocol tiny_protocol(std::uint64_t corpus_seed = 7) {
  SyntheticProtocol p;
  p.corpus.n_speakers = 4;
  p.corpus.utterances_per_speaker = 20;
  p.corpus.feature_dim = 16;
  p.corpus.offset_scale = 0.1;
  p.corpus.seed = corpus_seed;
  ModelConfig& m = p.run.model;
  m.n_mels = 16;
  m.latent_dim = 16;
  m.codebook_size = 32;
  m.encoder_width = m.decoder_width = 32;
  m.encoder_depth = m.decoder_depth = 1;
  m.kernel_size = 3;
  TrainConfig& t = p.run.train;
  t.steps = 2000;
  t.batch_size = 8;
  t.segment_len = 32;
  t.adam.learning_rate = 2e-3;
  return p;
}

struct ProtocolResult {
  DisentanglementScore untrained;
  DisentanglementScore trained;
  Checkpoint checkpoint;
};

inline ProtocolResult run_protocol(const SyntheticProtocol& p, TrainMode mode, const TrainHooks& hooks = {}) {
  const FeatureCorpus features = to_feature_corpus(generate_synthetic_corpus(p.corpus));
  const CorpusSplit split = split_heldout(features, p.run.heldout_fraction, p.run.split_seed);
  TrainConfig tc = p.run.train;
  tc.mode = mode;
  FrontendConfig fe;
  fe.n_mels = p.corpus.feature_dim;
  ProtocolResult r;
  r.checkpoint = init_checkpoint(tc, p.run.model, fe, p.run.weights, split.train);
  r.untrained = disentanglement_score(CheckpointEmbedder(r.checkpoint), split.heldout);
  r.checkpoint = train(std::move(r.checkpoint), split.train, hooks);
  r.trained = disentanglement_score(CheckpointEmbedder(r.checkpoint), split.heldout);
  return r;
}

inline std::string SweepReport::to_tsv() const {
  std::string out = "codebook_size\tok\trecon\tlatent\tspeaker\tdiff\ttotal\tseparation\tswap_ratio\tmcd\terror\n";
  char buf[512];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%d\t%d\t%.10g\t%.10g\t%.10g\t%.10g\t%.10g\t%.10g\t%.10g\t%.10g\t", r.codebook_size,
                  r.ok ? 1 : 0, r.final_loss.recon, r.final_loss.latent, r.final_loss.speaker, r.final_loss.diff,
                  r.final_loss.total, r.score.separation, r.score.swap_ratio, r.mcd);
    out += buf;
    out += r.error + "\n";
  }
  return out;
}

inline std::string SweepReport::to_json() const {
  nlohmann::ordered_json j;
  j["fingerprint"] = fingerprint;
  j["rows"] = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    nlohmann::ordered_json row;
    row["codebook_size"] = r.codebook_size;
    row["ok"] = r.ok;
    row["final_loss"] = {{"recon", r.final_loss.recon},     {"latent", r.final_loss.latent},
                         {"speaker", r.final_loss.speaker}, {"diff", r.final_loss.diff},
                         {"total", r.final_loss.total},     {"triggered", r.final_loss.schedule_triggered}};
    row["separation"] = r.score.separation;
    row["intra_cosine"] = r.score.intra_cosine;
    row["inter_cosine"] = r.score.inter_cosine;
    row["swap_ratio"] = r.score.swap_ratio;
    row["mcd"] = r.mcd;
    if (!r.ok) row["error"] = r.error;
    j["rows"].push_back(std::move(row));
  }
  return j.dump(2) + "\n";
}

}  // namespace avqvc
