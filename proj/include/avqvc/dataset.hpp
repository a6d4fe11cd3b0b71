#pragma once

#include <algorithm>
#include <cstdlib>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "avqvc/corpus.hpp"
#include "avqvc/frontend.hpp"
#include "avqvc/io.hpp"

namespace avqvc {

// Feature files: `<name>.npy` holds the T x n_mels matrix, `<name>.kv` the
// frontend configuration and ids it was produced with.
inline fs::path sidecar_path(const fs::path& npy_path) {
  fs::path p = npy_path;
  p.replace_extension(".kv");
  return p;
}

inline void save_features(const fs::path& path, const MelSpectrogram& mel) {
  KeyValues kv = mel.config.to_kv();
  kv.set("id.speaker", mel.speaker_id);
  kv.set("id.utterance", mel.utterance_id);
  npy::save(path, mel.frames);
  write_file_atomic(sidecar_path(path), kv.to_string());
}

inline MelSpectrogram load_features(const fs::path& path) {
  MelSpectrogram mel;
  mel.frames = npy::load(path);
  const fs::path side = sidecar_path(path);
  if (!fs::exists(side)) {
    throw Error(ErrorKind::data, path.string() + ": missing feature sidecar " + side.filename().string());
  }
  const KeyValues kv = KeyValues::parse(read_file(side), side.string());
  mel.config = FrontendConfig::from_kv(kv);
  mel.speaker_id = kv.has("id.speaker") ? kv.get("id.speaker") : path.parent_path().filename().string();
  mel.utterance_id = kv.has("id.utterance") ? kv.get("id.utterance") : path.stem().string();
  if (mel.frames.cols() != mel.config.n_mels) {
    throw Error(ErrorKind::data, path.string() + ": " + std::to_string(mel.frames.cols()) +
                                     " bins but sidecar says n_mels=" + std::to_string(mel.config.n_mels));
  }
  return mel;
}

// Speaker-level partition. With at least 109 speakers the split is 90 / 10 /
// rest; smaller corpora keep the same proportions, with at least two
// training speakers so triplets can be drawn.
struct SpeakerSplit {
  std::vector<std::string> train;
  std::vector<std::string> eval;
  std::vector<std::string> test;
};

inline constexpr std::size_t kFullSplitSpeakers = 109;

inline SpeakerSplit split_speakers(std::vector<std::string> speakers, std::uint64_t seed) {
  std::sort(speakers.begin(), speakers.end());
  speakers.erase(std::unique(speakers.begin(), speakers.end()), speakers.end());
  const std::size_t n = speakers.size();
  if (n < 2) throw Error(ErrorKind::data, "need at least 2 speakers to split, found " + std::to_string(n));
  Rng rng(derive_seed(seed, 0x5b11));
  std::shuffle(speakers.begin(), speakers.end(), rng);
  std::size_t n_train, n_eval;
  if (n >= kFullSplitSpeakers) {
    n_train = 90;
    n_eval = 10;
  } else {
    n_train = std::max<std::size_t>(2, n * 90 / kFullSplitSpeakers);
    n_eval = std::min(n - n_train, std::max<std::size_t>(n >= 3 ? 1 : 0, (n * 10 + 54) / kFullSplitSpeakers));
  }
  SpeakerSplit s;
  s.train.assign(speakers.begin(), speakers.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.eval.assign(speakers.begin() + static_cast<std::ptrdiff_t>(n_train),
                speakers.begin() + static_cast<std::ptrdiff_t>(n_train + n_eval));
  s.test.assign(speakers.begin() + static_cast<std::ptrdiff_t>(n_train + n_eval), speakers.end());
  for (auto* v : {&s.train, &s.eval, &s.test}) std::sort(v->begin(), v->end());
  return s;
}

// Feature cache root: $AVQVC_CACHE_DIR when set, otherwise `fallback`.
inline fs::path cache_root(const fs::path& fallback) {
  if (const char* env = std::getenv("AVQVC_CACHE_DIR"); env && *env) return env;
  return fallback;
}

struct PreparedCorpus {
  SpeakerSplit split;
  std::vector<fs::path> files;  // one feature file per utterance, sorted
  std::size_t cache_hits = 0;
};

// Walks `<data>/<speaker>/<utterance>.{wav,npy}`. WAV files are converted
// to features in the cache (reused when the sidecar config matches); .npy
// inputs must already carry a sidecar. Writes train/eval/test lists to `out`.
inline PreparedCorpus prepare_corpus(const fs::path& data, const fs::path& out, const FrontendConfig& frontend,
                                     std::uint64_t split_seed, const fs::path& cache) {
  frontend.validate();
  if (!fs::is_directory(data)) throw Error(ErrorKind::data, data.string() + ": not a directory");
  std::vector<fs::path> inputs;
  for (const auto& spk : fs::directory_iterator(data)) {
    // `_name` and `.name` directories hold metadata, not speakers
    const std::string dname = spk.path().filename().string();
    if (!spk.is_directory() || dname.starts_with('_') || dname.starts_with('.')) continue;
    for (const auto& f : fs::directory_iterator(spk.path())) {
      const auto ext = f.path().extension();
      if (f.is_regular_file() && (ext == ".wav" || ext == ".npy")) inputs.push_back(f.path());
    }
  }
  if (inputs.empty()) {
    throw Error(ErrorKind::data, data.string() + ": no <speaker>/<utterance>.wav or .npy files found");
  }
  std::sort(inputs.begin(), inputs.end());

  PreparedCorpus result;
  std::map<std::string, std::vector<fs::path>> by_speaker;
  for (const auto& in : inputs) {
    const std::string spk = in.parent_path().filename().string();
    fs::path feat;
    if (in.extension() == ".npy") {
      const MelSpectrogram m = load_features(in);
      if (!(m.config == frontend)) {
        throw Error(ErrorKind::compatibility, in.string() + ": features were extracted with a different frontend "
                                                            "configuration than requested");
      }
      feat = fs::absolute(in);
    } else {
      feat = fs::absolute(cache / spk / (in.stem().string() + ".npy"));
      bool fresh = false;
      if (fs::exists(feat) && fs::exists(sidecar_path(feat))) {
        try {
          fresh = load_features(feat).config == frontend;
        } catch (const Error&) {
          fresh = false;
        }
      }
      if (fresh) {
        ++result.cache_hits;
      } else {
        AudioClip clip = load_audio(in);
        save_features(feat, compute_mel(clip, frontend));
      }
    }
    by_speaker[spk].push_back(feat.lexically_normal());
  }
  std::vector<std::string> speakers;
  for (const auto& [spk, _] : by_speaker) speakers.push_back(spk);
  result.split = split_speakers(speakers, split_seed);

  auto write_list = [&](const std::string& name, const std::vector<std::string>& spks) {
    std::string text;
    for (const auto& s : spks)
      for (const auto& f : by_speaker[s]) text += f.string() + "\n";
    write_file_atomic(out / (name + ".txt"), text);
  };
  write_list("train", result.split.train);
  write_list("eval", result.split.eval);
  write_list("test", result.split.test);
  for (const auto& [_, files] : by_speaker) result.files.insert(result.files.end(), files.begin(), files.end());
  return result;
}

struct LoadedSplit {
  FeatureCorpus corpus;
  FrontendConfig frontend;
};

// Reads a split list written by prepare_corpus. Every file must share one
// frontend configuration.
inline LoadedSplit load_split(const fs::path& list) {
  if (!fs::exists(list)) throw Error(ErrorKind::data, list.string() + ": split list not found");
  std::istringstream in(read_file(list));
  LoadedSplit out;
  bool first = true;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const MelSpectrogram m = load_features(line);
    if (first) {
      out.frontend = m.config;
      first = false;
    } else if (!(m.config == out.frontend)) {
      throw Error(ErrorKind::compatibility, line + ": frontend configuration differs from the rest of the split");
    }
    out.corpus.push_back({m.speaker_id, m.utterance_id, m.frames});
  }
  if (out.corpus.empty()) throw Error(ErrorKind::data, list.string() + ": split is empty");
  return out;
}

}  // namespace avqvc
