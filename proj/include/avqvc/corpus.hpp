#pragma once

#include <algorithm>
#include <condition_variable>
#include <exception>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "avqvc/synthetic.hpp"
#include "avqvc/tensor.hpp"

namespace avqvc {

struct FeatureItem {
  std::string speaker_id;
  std::string utterance_id;
  Matrix frames;  // T x n_mels
};

using FeatureCorpus = std::vector<FeatureItem>;

inline FeatureCorpus to_feature_corpus(const SyntheticCorpus& corpus) {
  FeatureCorpus out;
  out.reserve(corpus.utterances.size());
  for (const auto& u : corpus.utterances) out.push_back({u.speaker_id, u.utterance_id, u.frames});
  return out;
}

// Speaker -> utterance lookup. Speakers are kept in sorted order so sampling
// depends only on corpus content, not on insertion order.
class CorpusIndex {
 public:
  explicit CorpusIndex(const FeatureCorpus& corpus) : corpus_(&corpus) {
    for (std::size_t i = 0; i < corpus.size(); ++i) by_speaker_[corpus[i].speaker_id].push_back(i);
    for (const auto& [spk, _] : by_speaker_) speakers_.push_back(spk);
  }

  const FeatureCorpus& corpus() const { return *corpus_; }
  const std::vector<std::string>& speakers() const { return speakers_; }
  const std::vector<std::size_t>& utterances_of(const std::string& spk) const { return by_speaker_.at(spk); }

  // Triplet sampling needs two speakers, and two utterances for any speaker
  // that can be drawn as the anchor.
  void require_triplet_ready() const {
    if (speakers_.size() < 2) {
      throw Error(ErrorKind::data, "triplet sampling needs >= 2 speakers, corpus has " +
                                       std::to_string(speakers_.size()) +
                                       (speakers_.empty() ? "" : " (" + speakers_.front() + ")"));
    }
    for (const auto& spk : speakers_) {
      if (by_speaker_.at(spk).size() < 2) {
        throw Error(ErrorKind::data, "speaker '" + spk + "' has " + std::to_string(by_speaker_.at(spk).size()) +
                                         " utterance(s); triplet sampling needs >= 2");
      }
    }
  }

 private:
  const FeatureCorpus* corpus_;
  std::map<std::string, std::vector<std::size_t>> by_speaker_;
  std::vector<std::string> speakers_;
};

struct Segment {
  std::size_t item = 0;      // index into the corpus
  Eigen::Index offset = 0;   // first frame of the crop
  Matrix frames;
};

// x1, x2 share a speaker and differ in utterance; x3 is another speaker.
struct Triplet {
  Segment x1, x2, x3;
};

using TripletBatch = std::vector<Triplet>;
using UtteranceBatch = std::vector<Segment>;

inline Segment crop(const FeatureCorpus& corpus, std::size_t item, int segment_len, Rng& rng) {
  const Matrix& full = corpus[item].frames;
  Segment s;
  s.item = item;
  if (segment_len <= 0 || full.rows() <= segment_len) {
    s.frames = full;
    return s;
  }
  std::uniform_int_distribution<Eigen::Index> off(0, full.rows() - segment_len);
  s.offset = off(rng);
  s.frames = full.middleRows(s.offset, segment_len);
  return s;
}

inline Triplet sample_triplet(const CorpusIndex& index, Rng& rng, int segment_len) {
  index.require_triplet_ready();
  const auto& speakers = index.speakers();
  std::uniform_int_distribution<std::size_t> pick_spk(0, speakers.size() - 1);
  const std::size_t a = pick_spk(rng);
  std::uniform_int_distribution<std::size_t> pick_other(0, speakers.size() - 2);
  std::size_t b = pick_other(rng);
  if (b >= a) ++b;
  const auto& utts = index.utterances_of(speakers[a]);
  std::uniform_int_distribution<std::size_t> pick_u(0, utts.size() - 1);
  const std::size_t u1 = pick_u(rng);
  std::uniform_int_distribution<std::size_t> pick_u2(0, utts.size() - 2);
  std::size_t u2 = pick_u2(rng);
  if (u2 >= u1) ++u2;
  const auto& others = index.utterances_of(speakers[b]);
  std::uniform_int_distribution<std::size_t> pick_u3(0, others.size() - 1);
  const std::size_t u3 = pick_u3(rng);
  Triplet t;
  t.x1 = crop(index.corpus(), utts[u1], segment_len, rng);
  t.x2 = crop(index.corpus(), utts[u2], segment_len, rng);
  t.x3 = crop(index.corpus(), others[u3], segment_len, rng);
  return t;
}

// Batches are a pure function of (seed, step), which makes resumption and
// prefetching order-independent.
inline TripletBatch triplet_batch_for_step(const CorpusIndex& index, std::uint64_t seed, std::int64_t step,
                                           int batch_size, int segment_len) {
  Rng rng(derive_seed(seed, 0x7419000000ULL + static_cast<std::uint64_t>(step)));
  TripletBatch batch;
  batch.reserve(static_cast<std::size_t>(batch_size));
  for (int i = 0; i < batch_size; ++i) batch.push_back(sample_triplet(index, rng, segment_len));
  return batch;
}

inline UtteranceBatch utterance_batch_for_step(const CorpusIndex& index, std::uint64_t seed, std::int64_t step,
                                               int batch_size, int segment_len) {
  const auto& corpus = index.corpus();
  if (corpus.empty()) throw Error(ErrorKind::data, "empty corpus");
  Rng rng(derive_seed(seed, 0x5e1f000000ULL + static_cast<std::uint64_t>(step)));
  std::uniform_int_distribution<std::size_t> pick(0, corpus.size() - 1);
  UtteranceBatch batch;
  batch.reserve(static_cast<std::size_t>(batch_size));
  for (int i = 0; i < batch_size; ++i) batch.push_back(crop(corpus, pick(rng), segment_len, rng));
  return batch;
}

// Bounded-queue prefetcher. Workers build batches for steps in
// [first, last) ahead of the consumer; the consumer always receives them in
// step order, so the stream is identical for any worker count.
template <typename Batch>
class Prefetcher {
 public:
  using Producer = std::function<Batch(std::int64_t)>;

  Prefetcher(Producer produce, std::int64_t first, std::int64_t last, int workers, std::size_t capacity = 4)
      : produce_(std::move(produce)), next_claim_(first), next_take_(first), last_(last),
        capacity_(std::max<std::size_t>(1, capacity)) {
    for (int w = 0; w < workers; ++w) threads_.emplace_back([this] { run(); });
  }

  ~Prefetcher() {
    {
      std::lock_guard lock(mu_);
      stop_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
  }

  Prefetcher(const Prefetcher&) = delete;
  Prefetcher& operator=(const Prefetcher&) = delete;

  Batch next() {
    if (threads_.empty()) return produce_(next_take_++);
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return ready_.count(next_take_) != 0 || error_; });
    if (error_) std::rethrow_exception(error_);
    Batch b = std::move(ready_.at(next_take_));
    ready_.erase(next_take_);
    ++next_take_;
    cv_.notify_all();
    return b;
  }

 private:
  void run() {
    while (true) {
      std::int64_t step;
      {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] {
          return stop_ || next_claim_ >= last_ ||
                 next_claim_ < next_take_ + static_cast<std::int64_t>(capacity_);
        });
        if (stop_ || next_claim_ >= last_) return;
        step = next_claim_++;
      }
      try {
        Batch b = produce_(step);
        std::lock_guard lock(mu_);
        ready_.emplace(step, std::move(b));
      } catch (...) {
        std::lock_guard lock(mu_);
        error_ = std::current_exception();
      }
      cv_.notify_all();
    }
  }

  Producer produce_;
  std::int64_t next_claim_;
  std::int64_t next_take_;
  std::int64_t last_;
  std::size_t capacity_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::map<std::int64_t, Batch> ready_;
  std::exception_ptr error_;
  bool stop_ = false;
  std::vector<std::thread> threads_;
};

}  // namespace avqvc
