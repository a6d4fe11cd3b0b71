#include <gtest/gtest.h>

#include <set>

#include "avqvc/dataset.hpp"
#include "avqvc/synthetic.hpp"
#include "test_util.hpp"

using namespace avqvc;
using avqvc::testing::TempDir;

namespace {

std::vector<std::string> names(int n) {
  std::vector<std::string> v;
  for (int i = 0; i < n; ++i) v.push_back("p" + std::to_string(225 + i));
  return v;
}

std::set<std::string> as_set(const std::vector<std::string>& v) { return {v.begin(), v.end()}; }

AudioClip tone(double hz, int samples, int rate = 16000) {
  AudioClip c;
  c.sample_rate = rate;
  c.samples.resize(static_cast<std::size_t>(samples));
  for (int i = 0; i < samples; ++i) c.samples[static_cast<std::size_t>(i)] = 0.3 * std::sin(2 * M_PI * hz * i / rate);
  return c;
}

}  // namespace

TEST(SpeakerSplit, FullCorpusIs90Train10Eval) {
  const auto s = split_speakers(names(109), 0);
  EXPECT_EQ(s.train.size(), 90u);
  EXPECT_EQ(s.eval.size(), 10u);
  EXPECT_EQ(s.test.size(), 9u);
}

TEST(SpeakerSplit, DisjointAndCovering) {
  for (int n : {2, 3, 6, 20, 109, 150}) {
    for (std::uint64_t seed : {0u, 1u, 99u}) {
      const auto s = split_speakers(names(n), seed);
      std::set<std::string> all;
      for (const auto* part : {&s.train, &s.eval, &s.test}) {
        for (const auto& x : *part) EXPECT_TRUE(all.insert(x).second) << x << " in two partitions, n=" << n;
      }
      EXPECT_EQ(all, as_set(names(n)));
      EXPECT_GE(s.train.size(), 2u);
    }
  }
}

TEST(SpeakerSplit, SmallCorpusProportions) {
  const auto s = split_speakers(names(6), 0);
  EXPECT_EQ(s.train.size(), 4u);
  EXPECT_EQ(s.eval.size(), 1u);
  EXPECT_EQ(s.test.size(), 1u);
}

TEST(SpeakerSplit, DeterministicInSeedAndInputOrder) {
  auto shuffled = names(40);
  std::reverse(shuffled.begin(), shuffled.end());
  const auto a = split_speakers(names(40), 5);
  const auto b = split_speakers(shuffled, 5);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.eval, b.eval);
  EXPECT_EQ(a.test, b.test);
  EXPECT_NE(split_speakers(names(40), 6).train, a.train);
}

TEST(SpeakerSplit, OneSpeakerIsADataError) {
  try {
    split_speakers({"only"}, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::data);
  }
}

TEST(Features, SaveLoadRoundTrip) {
  TempDir dir;
  MelSpectrogram m;
  m.frames = Matrix::Random(7, 80);
  m.speaker_id = "p225";
  m.utterance_id = "p225_001";
  save_features(dir.path / "x.npy", m);
  const MelSpectrogram r = load_features(dir.path / "x.npy");
  EXPECT_EQ(r.frames, m.frames);
  EXPECT_EQ(r.config, m.config);
  EXPECT_EQ(r.speaker_id, "p225");
  EXPECT_EQ(r.utterance_id, "p225_001");
}

TEST(Features, MissingSidecarOrWrongWidthFails) {
  TempDir dir;
  npy::save(dir.path / "bare.npy", Matrix::Zero(3, 80));
  EXPECT_THROW(load_features(dir.path / "bare.npy"), Error);
  MelSpectrogram m;
  m.frames = Matrix::Zero(3, 80);
  save_features(dir.path / "w.npy", m);
  npy::save(dir.path / "w.npy", Matrix::Zero(3, 40));
  EXPECT_THROW(load_features(dir.path / "w.npy"), Error);
}

TEST(Prepare, WavCorpusIsCachedAndSplitsAreStable) {
  TempDir dir;
  const fs::path data = dir.path / "wav";
  for (int s = 0; s < 3; ++s) {
    for (int u = 0; u < 2; ++u) {
      save_wav(data / ("spk" + std::to_string(s)) / ("u" + std::to_string(u) + ".wav"),
               tone(200.0 + 100 * s + 10 * u, 4000));
    }
  }
  fs::create_directories(data / "_meta");
  const FrontendConfig fe;
  const auto first = prepare_corpus(data, dir.path / "a", fe, 0, dir.path / "cache");
  EXPECT_EQ(first.cache_hits, 0u);
  EXPECT_EQ(first.files.size(), 6u);
  const auto second = prepare_corpus(data, dir.path / "b", fe, 0, dir.path / "cache");
  EXPECT_EQ(second.cache_hits, 6u);
  for (const char* name : {"train.txt", "eval.txt", "test.txt"}) {
    EXPECT_EQ(read_file(dir.path / "a" / name), read_file(dir.path / "b" / name)) << name;
  }
  const LoadedSplit train = load_split(dir.path / "a" / "train.txt");
  EXPECT_EQ(train.frontend, fe);
  EXPECT_EQ(train.corpus.size(), 4u);

  // a different frontend invalidates the cache
  FrontendConfig other = fe;
  other.n_mels = 40;
  const auto third = prepare_corpus(data, dir.path / "c", other, 0, dir.path / "cache");
  EXPECT_EQ(third.cache_hits, 0u);
}

TEST(Prepare, NpyWithOtherFrontendIsACompatibilityError) {
  TempDir dir;
  FrontendConfig fe;
  fe.n_mels = 16;
  for (const char* spk : {"a", "b"}) {
    MelSpectrogram m{Matrix::Zero(5, 16), fe, spk, "u0"};
    save_features(dir.path / "data" / spk / "u0.npy", m);
  }
  EXPECT_NO_THROW(prepare_corpus(dir.path / "data", dir.path / "ok", fe, 0, dir.path / "cache"));
  try {
    prepare_corpus(dir.path / "data", dir.path / "bad", FrontendConfig{}, 0, dir.path / "cache");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::compatibility);
  }
}

TEST(Prepare, CacheRootHonorsEnvironment) {
  ::unsetenv("AVQVC_CACHE_DIR");
  EXPECT_EQ(cache_root("/x/cache"), fs::path("/x/cache"));
  ::setenv("AVQVC_CACHE_DIR", "/tmp/elsewhere", 1);
  EXPECT_EQ(cache_root("/x/cache"), fs::path("/tmp/elsewhere"));
  ::unsetenv("AVQVC_CACHE_DIR");
}
