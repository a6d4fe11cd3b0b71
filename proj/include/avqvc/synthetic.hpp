#pragma once

#include <string>
#include <vector>

#include "avqvc/kv_config.hpp"
#include "avqvc/tensor.hpp"

namespace avqvc {

// A corpus whose content and speaker factors are known exactly: every frame is
// one symbol from a shared alphabet plus the speaker's constant offset.
struct SyntheticCorpusSpec {
  int n_speakers = 4;
  int utterances_per_speaker = 20;
  int feature_dim = 80;
  int alphabet_size = 8;
  int min_frames = 48;
  int max_frames = 96;
  int min_segment = 3;
  int max_segment = 10;
  double content_scale = 1.0;
  double offset_scale = 0.5;
  std::uint64_t seed = 7;

  void validate() const {
    auto bad = [](const std::string& why) { throw Error(ErrorKind::config, "synthetic corpus: " + why); };
    if (n_speakers < 2) bad("n_speakers must be >= 2");
    if (utterances_per_speaker < 2) bad("utterances_per_speaker must be >= 2");
    if (feature_dim < 1) bad("feature_dim must be >= 1");
    if (alphabet_size < 1) bad("alphabet_size must be >= 1");
    if (min_frames < 1 || max_frames < min_frames) bad("require 1 <= min_frames <= max_frames");
    if (min_segment < 1 || max_segment < min_segment) bad("require 1 <= min_segment <= max_segment");
    if (!(offset_scale > 0.0)) bad("offset_scale must be positive");
  }

  KeyValues to_kv() const {
    KeyValues kv;
    kv.set("synth.n_speakers", n_speakers);
    kv.set("synth.utterances_per_speaker", utterances_per_speaker);
    kv.set("synth.feature_dim", feature_dim);
    kv.set("synth.alphabet_size", alphabet_size);
    kv.set("synth.min_frames", min_frames);
    kv.set("synth.max_frames", max_frames);
    kv.set("synth.min_segment", min_segment);
    kv.set("synth.max_segment", max_segment);
    kv.set("synth.content_scale", content_scale);
    kv.set("synth.offset_scale", offset_scale);
    kv.set("synth.seed", seed);
    return kv;
  }

  static SyntheticCorpusSpec from_kv(const KeyValues& kv) { return from_kv(kv, SyntheticCorpusSpec()); }

  static SyntheticCorpusSpec from_kv(const KeyValues& kv, SyntheticCorpusSpec s) {
    auto opt = [&](const char* k) { return kv.has(std::string("synth.") + k); };
    auto i = [&](const char* k) { return kv.get_int<int>(std::string("synth.") + k); };
    if (opt("n_speakers")) s.n_speakers = i("n_speakers");
    if (opt("utterances_per_speaker")) s.utterances_per_speaker = i("utterances_per_speaker");
    if (opt("feature_dim")) s.feature_dim = i("feature_dim");
    if (opt("alphabet_size")) s.alphabet_size = i("alphabet_size");
    if (opt("min_frames")) s.min_frames = i("min_frames");
    if (opt("max_frames")) s.max_frames = i("max_frames");
    if (opt("min_segment")) s.min_segment = i("min_segment");
    if (opt("max_segment")) s.max_segment = i("max_segment");
    if (opt("content_scale")) s.content_scale = kv.get_double("synth.content_scale");
    if (opt("offset_scale")) s.offset_scale = kv.get_double("synth.offset_scale");
    if (opt("seed")) s.seed = kv.get_int<std::uint64_t>("synth.seed");
    return s;
  }
};

struct SyntheticUtterance {
  int speaker = 0;
  std::string speaker_id;
  std::string utterance_id;
  std::uint64_t content_seed = 0;
  Matrix frames;         // content + offset
  Matrix content;        // ground-truth content signal
  IndexVector symbols;   // alphabet index per frame
};

struct SyntheticCorpus {
  SyntheticCorpusSpec spec;
  Matrix alphabet;  // alphabet_size x feature_dim
  Matrix offsets;   // n_speakers x feature_dim
  std::vector<SyntheticUtterance> utterances;
};

inline std::string synthetic_speaker_id(int s) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "spk%02d", s);
  return buf;
}

// Piecewise-constant symbol sequence drawn from its own seed, so the same
// content can be re-rendered for any speaker.
inline Matrix synthetic_content(const SyntheticCorpusSpec& spec, const Matrix& alphabet,
                                std::uint64_t content_seed, IndexVector* symbols = nullptr) {
  Rng rng(content_seed);
  std::uniform_int_distribution<int> len_dist(spec.min_frames, spec.max_frames);
  std::uniform_int_distribution<int> seg_dist(spec.min_segment, spec.max_segment);
  std::uniform_int_distribution<int> sym_dist(0, spec.alphabet_size - 1);
  const int n = len_dist(rng);
  Matrix content(n, spec.feature_dim);
  IndexVector syms(static_cast<std::size_t>(n));
  int t = 0, prev = -1;
  while (t < n) {
    const int len = seg_dist(rng);
    int sym = sym_dist(rng);
    if (spec.alphabet_size > 1) {
      while (sym == prev) sym = sym_dist(rng);
    }
    for (int k = 0; k < len && t < n; ++k, ++t) {
      content.row(t) = alphabet.row(sym);
      syms[static_cast<std::size_t>(t)] = sym;
    }
    prev = sym;
  }
  if (symbols) *symbols = std::move(syms);
  return content;
}

inline Matrix render_utterance(const Matrix& content, const RowVector& offset) {
  return content.rowwise() + offset;
}

inline SyntheticCorpus generate_synthetic_corpus(const SyntheticCorpusSpec& spec) {
  spec.validate();
  SyntheticCorpus corpus;
  corpus.spec = spec;
  Rng rng(derive_seed(spec.seed, 0));
  std::normal_distribution<double> gauss(0.0, 1.0);
  corpus.alphabet = Matrix(spec.alphabet_size, spec.feature_dim);
  for (Eigen::Index i = 0; i < corpus.alphabet.size(); ++i) corpus.alphabet.data()[i] = spec.content_scale * gauss(rng);
  corpus.offsets = Matrix(spec.n_speakers, spec.feature_dim);
  for (int s = 0; s < spec.n_speakers; ++s) {
    bool distinct = false;
    while (!distinct) {
      for (int d = 0; d < spec.feature_dim; ++d) corpus.offsets(s, d) = spec.offset_scale * gauss(rng);
      distinct = true;
      for (int p = 0; p < s; ++p) distinct = distinct && corpus.offsets.row(p) != corpus.offsets.row(s);
    }
  }
  for (int s = 0; s < spec.n_speakers; ++s) {
    for (int u = 0; u < spec.utterances_per_speaker; ++u) {
      SyntheticUtterance utt;
      utt.speaker = s;
      utt.speaker_id = synthetic_speaker_id(s);
      char buf[32];
      std::snprintf(buf, sizeof buf, "%s_u%03d", utt.speaker_id.c_str(), u);
      utt.utterance_id = buf;
      utt.content_seed = derive_seed(spec.seed, 1000 + static_cast<std::uint64_t>(s) * 100000 + u);
      utt.content = synthetic_content(spec, corpus.alphabet, utt.content_seed, &utt.symbols);
      utt.frames = render_utterance(utt.content, corpus.offsets.row(s));
      corpus.utterances.push_back(std::move(utt));
    }
  }
  return corpus;
}

}  // namespace avqvc
