#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "geopulse/types.hpp"

namespace geopulse {

/// NFKC-casefolded tokens. Splits on whitespace and punctuation except
/// that a leading '#' or '@' stays glued to its token; standalone
/// punctuation and pure-number tokens are dropped. No stemming.
std::vector<std::string> normalize(std::string_view text);

/// L2-normalized sparse vector over the 2^18 hashed term space.
/// Entries sorted by index, weights > 0.
struct SparseVector {
  static constexpr std::uint32_t kDimension = 1u << 18;

  std::vector<std::pair<std::uint32_t, double>> entries;

  bool empty() const { return entries.empty(); }
  double norm() const;
  void scale_to_unit();  // no-op on the empty vector
};

/// Cosine similarity of unit vectors in [0, 1]; 0 if either is empty.
double cosine(const SparseVector& a, const SparseVector& b);

/// Stable 64-bit FNV-1a; term index = hash mod 2^18.
std::uint64_t stable_hash64(std::string_view s);

/// Hashed TF-IDF with a running document-frequency table: each document is
/// weighted with the DF state before it arrives, then folded in. idf =
/// ln((1+N)/(1+df)) + 1. State starts empty per run; no fixed vocabulary.
class TextVectorizer {
 public:
  SparseVector vectorize(std::span<const std::string> tokens);
  std::size_t documents_seen() const { return n_docs_; }

 private:
  std::unordered_map<std::uint32_t, std::uint32_t> df_;
  std::size_t n_docs_ = 0;
};

struct LshParams {
  int bands = 8;
  int rows = 12;               // signature bits per band, <= 32
  int bucket_cap = 64;         // <= 0: unbounded
  std::int64_t window_s = 24 * 3600;  // <= 0: unbounded
  std::uint64_t seed = 0;
};

/// Random-hyperplane LSH over the hashed term space. Hyperplane components
/// are Gaussian values derived on the fly from (seed, plane, dimension), so
/// no dense planes are stored and signatures are reproducible from the
/// seed alone. Sign bits are invariant to vector scale.
class LshIndex {
 public:
  explicit LshIndex(const LshParams& params);

  std::uint32_t signature(const SparseVector& v, int band) const;
  void insert(std::int64_t id, const SparseVector& v, std::int64_t t);
  /// Union of the bucket mates across bands, deduplicated, ascending;
  /// entries older than the window are skipped.
  std::vector<std::int64_t> candidates(const SparseVector& v, std::int64_t now) const;

  const LshParams& params() const { return params_; }
  std::size_t stored_entries() const;  // over all bands

 private:
  struct Entry {
    std::int64_t id;
    std::int64_t t;
  };
  LshParams params_;
  std::vector<std::unordered_map<std::uint32_t, std::deque<Entry>>> bands_;
};

using ThreadId = std::int64_t;

/// An aggregated story: members in arrival order plus the running
/// (unnormalized) sum of member vectors. centroid() is the normalized sum.
struct Thread {
  ThreadId id = 0;
  std::vector<std::int64_t> members;  // post sequence numbers
  SparseVector sum;
  Instant first_t, last_t;
  std::string representative_text;    // earliest member's text

  std::size_t size() const { return members.size(); }
  SparseVector centroid() const;
};

struct ThreadsConfig {
  double threshold = 0.65;  // cosine join threshold, in (0, 1]
  LshParams lsh;
  /// Candidate retrieval: LSH buckets (default) or every live thread.
  bool exhaustive_candidates = false;
  /// Record per-post candidate sets and whether they contained every
  /// above-threshold thread (test instrumentation, off in production).
  bool audit = false;
};

struct AssignOutcome {
  std::int64_t post_seq = 0;
  ThreadId thread = 0;
  bool created = false;
  double best_cosine = 0.0;
  std::vector<ThreadId> candidates;  // audit only
  bool recall_complete = true;       // audit only
};

/// Single-writer streaming thread discovery: normalize -> vectorize ->
/// LSH-filtered candidate threads -> join best centroid match above the
/// threshold or open a new thread.
class ThreadsPipeline {
 public:
  explicit ThreadsPipeline(const ThreadsConfig& config);

  AssignOutcome process(const Post& post);
  AssignOutcome assign(std::int64_t seq, const std::string& post_id,
                       const std::string& text, const SparseVector& v,
                       const Instant& t);

  const std::vector<Thread>& threads() const { return threads_; }
  const std::vector<std::string>& post_ids() const { return post_ids_; }
  ThreadId thread_of(std::int64_t seq) const { return post_thread_[seq]; }
  std::size_t posts_processed() const { return post_thread_.size(); }
  const ThreadsConfig& config() const { return config_; }
  const LshIndex& lsh() const { return lsh_; }

 private:
  ThreadsConfig config_;
  TextVectorizer vectorizer_;
  LshIndex lsh_;
  std::vector<Thread> threads_;              // id = position
  std::vector<ThreadId> post_thread_;        // seq -> thread
  std::vector<std::string> post_ids_;        // seq -> external id
  std::int64_t next_seq_ = 0;
  mutable std::vector<SparseVector> centroid_cache_;
  std::vector<bool> centroid_dirty_;

  const SparseVector& centroid_of(ThreadId tid) const;
};

/// thread_id,size,first_t,last_t,representative_text (RFC 3339 UTC).
std::string threads_to_csv(const std::vector<Thread>& threads,
                           std::span<const std::string> post_ids);
std::string threads_to_json(const std::vector<Thread>& threads,
                            std::span<const std::string> post_ids);

}  // namespace geopulse
