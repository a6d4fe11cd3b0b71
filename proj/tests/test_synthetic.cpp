#include <gtest/gtest.h>

#include "avqvc/synthetic.hpp"

using namespace avqvc;

TEST(SyntheticCorpus, DeterministicUnderSeed) {
  SyntheticCorpusSpec spec;
  const auto a = generate_synthetic_corpus(spec), b = generate_synthetic_corpus(spec);
  ASSERT_EQ(a.utterances.size(), b.utterances.size());
  EXPECT_EQ(a.offsets, b.offsets);
  EXPECT_EQ(a.alphabet, b.alphabet);
  for (std::size_t i = 0; i < a.utterances.size(); ++i) {
    EXPECT_EQ(a.utterances[i].frames, b.utterances[i].frames);
    EXPECT_EQ(a.utterances[i].utterance_id, b.utterances[i].utterance_id);
  }
  spec.seed = 8;
  EXPECT_NE(generate_synthetic_corpus(spec).offsets, a.offsets);
}

TEST(SyntheticCorpus, ShapeAndIds) {
  SyntheticCorpusSpec spec;
  spec.n_speakers = 3;
  spec.utterances_per_speaker = 4;
  spec.feature_dim = 6;
  const auto c = generate_synthetic_corpus(spec);
  ASSERT_EQ(c.utterances.size(), 12u);
  EXPECT_EQ(c.utterances[5].speaker_id, "spk01");
  EXPECT_EQ(c.utterances[5].utterance_id, "spk01_u001");
  for (const auto& u : c.utterances) {
    EXPECT_EQ(u.frames.cols(), 6);
    EXPECT_GE(u.frames.rows(), spec.min_frames);
    EXPECT_LE(u.frames.rows(), spec.max_frames);
  }
}

TEST(SyntheticCorpus, FramesMinusOffsetIsContent) {
  const auto c = generate_synthetic_corpus({});
  for (const auto& u : c.utterances) {
    EXPECT_LT((Matrix(u.frames.rowwise() - c.offsets.row(u.speaker)) - u.content).cwiseAbs().maxCoeff(), 1e-12);
    for (Eigen::Index t = 0; t < u.content.rows(); ++t) {
      EXPECT_TRUE(u.content.row(t) == c.alphabet.row(u.symbols[static_cast<std::size_t>(t)]));
    }
  }
}

TEST(SyntheticCorpus, OffsetsCancelBetweenSameSpeakerUtterances) {
  const auto c = generate_synthetic_corpus({});
  const auto& a = c.utterances[0];
  const auto& b = c.utterances[1];
  ASSERT_EQ(a.speaker, b.speaker);
  const RowVector lhs = a.frames.colwise().mean() - b.frames.colwise().mean();
  const RowVector rhs = a.content.colwise().mean() - b.content.colwise().mean();
  EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(SyntheticCorpus, ReRenderedDifferenceIsOffsetDifference) {
  SyntheticCorpusSpec spec;
  const auto c = generate_synthetic_corpus(spec);
  const auto& u = c.utterances[3];
  const Matrix content = synthetic_content(spec, c.alphabet, u.content_seed);
  const Matrix as_b = render_utterance(content, c.offsets.row(2));
  const Matrix d = u.frames - as_b;
  const RowVector expect = c.offsets.row(u.speaker) - c.offsets.row(2);
  for (Eigen::Index t = 0; t < d.rows(); ++t) EXPECT_LT((d.row(t) - expect).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(SyntheticCorpus, DistinctOffsetsAndValidation) {
  const auto c = generate_synthetic_corpus({});
  for (int i = 0; i < c.offsets.rows(); ++i)
    for (int j = i + 1; j < c.offsets.rows(); ++j) EXPECT_NE(c.offsets.row(i), c.offsets.row(j));
  SyntheticCorpusSpec bad;
  bad.n_speakers = 1;
  try {
    generate_synthetic_corpus(bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::config);
  }
  bad = {};
  bad.utterances_per_speaker = 1;
  EXPECT_THROW(generate_synthetic_corpus(bad), Error);
}
