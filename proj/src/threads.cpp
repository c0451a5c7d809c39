#include "geopulse/threads.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

#include <nlohmann/json.hpp>

#include "geopulse/geo.hpp"
#include "geopulse/tz.hpp"

namespace geopulse {

// ---- Tokenization ----------------------------------------------------------

namespace {

bool is_word_cp(UChar32 cp) {
  if (cp == '_') return true;
  if (u_hasBinaryProperty(cp, UCHAR_ALPHABETIC)) return true;
  if (u_isdigit(cp)) return true;
  const auto type = u_charType(cp);
  return type == U_NON_SPACING_MARK || type == U_COMBINING_SPACING_MARK;
}

bool all_digits(const std::string& token) {
  const char* s = token.data();
  std::int32_t i = 0;
  const auto len = static_cast<std::int32_t>(token.size());
  while (i < len) {
    UChar32 cp;
    U8_NEXT(s, i, len, cp);
    if (cp < 0 || !u_isdigit(cp)) return false;
  }
  return true;
}

void append_cp(std::string& out, UChar32 cp) {
  char buf[U8_MAX_LENGTH];
  std::int32_t n = 0;
  UBool err = false;
  U8_APPEND(reinterpret_cast<std::uint8_t*>(buf), n, U8_MAX_LENGTH, cp, err);
  if (!err) out.append(buf, n);
}

}  // namespace

std::vector<std::string> normalize(std::string_view text) {
  if (text.empty()) return {};

  // NFKC + case fold in one pass (ICU's nfkc_cf).
  UErrorCode ec = U_ZERO_ERROR;
  const icu::Normalizer2* nfkc_cf = icu::Normalizer2::getNFKCCasefoldInstance(ec);
  if (U_FAILURE(ec)) throw Error("ICU NFKC_Casefold unavailable");
  icu::UnicodeString in = icu::UnicodeString::fromUTF8(
      icu::StringPiece(text.data(), static_cast<std::int32_t>(text.size())));
  std::string folded;
  nfkc_cf->normalize(in, ec).toUTF8String(folded);
  if (U_FAILURE(ec)) throw Error("unicode normalization failed");

  std::vector<std::string> tokens;
  std::string current;
  bool has_prefix = false;

  auto flush = [&] {
    if (!current.empty()) {
      // pure numbers carry no story signal; tagged ones ("#2016") do
      if (has_prefix || !all_digits(current)) tokens.push_back(current);
    }
    current.clear();
    has_prefix = false;
  };

  const char* s = folded.data();
  const auto len = static_cast<std::int32_t>(folded.size());
  std::int32_t i = 0;
  while (i < len) {
    UChar32 cp;
    U8_NEXT(s, i, len, cp);
    if (cp < 0) continue;  // invalid byte, skip
    if ((cp == '#' || cp == '@') && current.empty()) {
      // glue to the following word char; a standalone mark is punctuation
      std::int32_t peek = i;
      UChar32 next = -1;
      if (peek < len) U8_NEXT(s, peek, len, next);
      if (next >= 0 && is_word_cp(next)) {
        current.push_back(static_cast<char>(cp));
        has_prefix = true;
      }
      continue;
    }
    if (is_word_cp(cp)) {
      append_cp(current, cp);
    } else {
      flush();
    }
  }
  flush();
  return tokens;
}

// ---- Sparse vectors --------------------------------------------------------

double SparseVector::norm() const {
  double s = 0.0;
  for (const auto& [i, w] : entries) s += w * w;
  return std::sqrt(s);
}

void SparseVector::scale_to_unit() {
  if (entries.empty()) return;
  const double n = norm();
  if (n <= 0.0) {
    entries.clear();
    return;
  }
  if (std::abs(n - 1.0) <= 1e-12) return;  // keep bit-identical unit vectors
  for (auto& [i, w] : entries) w /= n;
}

double cosine(const SparseVector& a, const SparseVector& b) {
  if (a.empty() || b.empty()) return 0.0;
  if (a.entries == b.entries) return 1.0;  // exact duplicates compare as 1
  double dot = 0.0;
  auto ia = a.entries.begin();
  auto ib = b.entries.begin();
  while (ia != a.entries.end() && ib != b.entries.end()) {
    if (ia->first < ib->first) {
      ++ia;
    } else if (ib->first < ia->first) {
      ++ib;
    } else {
      dot += ia->second * ib->second;
      ++ia;
      ++ib;
    }
  }
  return std::clamp(dot, 0.0, 1.0);
}

std::uint64_t stable_hash64(std::string_view s) {
  // FNV-1a
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

SparseVector TextVectorizer::vectorize(std::span<const std::string> tokens) {
  SparseVector v;
  if (tokens.empty()) return v;

  std::vector<std::pair<std::uint32_t, double>> tf;
  tf.reserve(tokens.size());
  for (const auto& tok : tokens)
    tf.emplace_back(static_cast<std::uint32_t>(stable_hash64(tok) %
                                               SparseVector::kDimension),
                    1.0);
  std::sort(tf.begin(), tf.end());
  // fold duplicate indices (repeated terms and hash collisions)
  std::size_t out = 0;
  for (std::size_t i = 0; i < tf.size(); ++i) {
    if (out > 0 && tf[out - 1].first == tf[i].first)
      tf[out - 1].second += 1.0;
    else
      tf[out++] = tf[i];
  }
  tf.resize(out);

  // weight with the DF state before this document, then fold it in
  const double n = static_cast<double>(n_docs_);
  for (auto& [idx, w] : tf) {
    const auto it = df_.find(idx);
    const double df = it == df_.end() ? 0.0 : static_cast<double>(it->second);
    w *= std::log((1.0 + n) / (1.0 + df)) + 1.0;
  }
  for (const auto& [idx, w] : tf) ++df_[idx];
  ++n_docs_;

  v.entries = std::move(tf);
  v.scale_to_unit();
  return v;
}

// ---- LSH -------------------------------------------------------------------

namespace {

inline std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ull;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBull;
  z ^= z >> 31;
  return z;
}

/// Standard-normal component of hyperplane `plane` at dimension `dim`.
/// Counter-based: one hash supplies the two Box-Muller uniforms.
inline double plane_component(std::uint64_t seed, std::uint32_t plane,
                              std::uint32_t dim) {
  const std::uint64_t key =
      (static_cast<std::uint64_t>(plane) << 18) | dim;
  const std::uint64_t z = mix64(seed + 0x9E3779B97F4A7C15ull * (key + 1));
  const double u1 = (static_cast<double>(z >> 32) + 0.5) / 4294967296.0;
  const double u2 = (static_cast<double>(z & 0xffffffffull) + 0.5) / 4294967296.0;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
}

}  // namespace

LshIndex::LshIndex(const LshParams& params) : params_(params) {
  if (params_.bands < 1 || params_.rows < 1 || params_.rows > 32)
    throw ConfigError("LSH geometry: need bands >= 1 and 1 <= rows <= 32");
  bands_.resize(params_.bands);
}

std::uint32_t LshIndex::signature(const SparseVector& v, int band) const {
  std::uint32_t sig = 0;
  for (int r = 0; r < params_.rows; ++r) {
    const auto plane = static_cast<std::uint32_t>(band * params_.rows + r);
    double proj = 0.0;
    for (const auto& [idx, w] : v.entries)
      proj += w * plane_component(params_.seed, plane, idx);
    sig = (sig << 1) | (proj >= 0.0 ? 1u : 0u);
  }
  return sig;
}

void LshIndex::insert(std::int64_t id, const SparseVector& v, std::int64_t t) {
  for (int b = 0; b < params_.bands; ++b) {
    auto& bucket = bands_[b][signature(v, b)];
    bucket.push_back({id, t});
    if (params_.window_s > 0)
      while (!bucket.empty() && bucket.front().t < t - params_.window_s)
        bucket.pop_front();
    if (params_.bucket_cap > 0)
      while (static_cast<int>(bucket.size()) > params_.bucket_cap)
        bucket.pop_front();
  }
}

std::vector<std::int64_t> LshIndex::candidates(const SparseVector& v,
                                               std::int64_t now) const {
  std::vector<std::int64_t> out;
  for (int b = 0; b < params_.bands; ++b) {
    const auto it = bands_[b].find(signature(v, b));
    if (it == bands_[b].end()) continue;
    for (const auto& e : it->second) {
      if (params_.window_s > 0 && e.t < now - params_.window_s) continue;
      out.push_back(e.id);
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::size_t LshIndex::stored_entries() const {
  std::size_t n = 0;
  for (const auto& band : bands_)
    for (const auto& [sig, bucket] : band) n += bucket.size();
  return n;
}

// ---- Threads ---------------------------------------------------------------

SparseVector Thread::centroid() const {
  SparseVector c = sum;
  c.scale_to_unit();
  return c;
}

ThreadsPipeline::ThreadsPipeline(const ThreadsConfig& config)
    : config_(config), lsh_(config.lsh) {
  if (!(config_.threshold > 0.0) || config_.threshold > 1.0)
    throw ConfigError("similarity threshold must be in (0, 1]");
}

const SparseVector& ThreadsPipeline::centroid_of(ThreadId tid) const {
  auto& self = const_cast<ThreadsPipeline&>(*this);
  if (self.centroid_dirty_[tid]) {
    self.centroid_cache_[tid] = threads_[tid].centroid();
    self.centroid_dirty_[tid] = false;
  }
  return centroid_cache_[tid];
}

AssignOutcome ThreadsPipeline::process(const Post& post) {
  const auto tokens = normalize(post.text);
  const SparseVector v = vectorizer_.vectorize(tokens);
  return assign(next_seq_, post.id, post.text, v, post.t);
}

AssignOutcome ThreadsPipeline::assign(std::int64_t seq, const std::string& post_id,
                                      const std::string& text,
                                      const SparseVector& v, const Instant& t) {
  if (seq != next_seq_) throw Error("assign: out-of-order sequence number");
  ++next_seq_;
  post_ids_.push_back(post_id);

  AssignOutcome outcome;
  outcome.post_seq = seq;

  auto new_thread = [&]() -> ThreadId {
    const auto tid = static_cast<ThreadId>(threads_.size());
    Thread th;
    th.id = tid;
    th.members.push_back(seq);
    th.sum = v;
    th.first_t = th.last_t = t;
    th.representative_text = text;
    threads_.push_back(std::move(th));
    centroid_cache_.emplace_back();
    centroid_dirty_.push_back(true);
    return tid;
  };

  // Empty vectors carry no comparable content: always a lone thread, and
  // they never enter the LSH store.
  if (v.empty()) {
    const ThreadId tid = new_thread();
    post_thread_.push_back(tid);
    outcome.thread = tid;
    outcome.created = true;
    return outcome;
  }

  std::vector<ThreadId> cand_threads;
  if (config_.exhaustive_candidates) {
    cand_threads.reserve(threads_.size());
    for (const auto& th : threads_)
      if (!th.sum.empty()) cand_threads.push_back(th.id);
  } else {
    const auto cand_posts = lsh_.candidates(v, t.epoch_s);
    cand_threads.reserve(cand_posts.size());
    for (std::int64_t p : cand_posts) cand_threads.push_back(post_thread_[p]);
    std::sort(cand_threads.begin(), cand_threads.end());
    cand_threads.erase(std::unique(cand_threads.begin(), cand_threads.end()),
                       cand_threads.end());
  }

  ThreadId best_tid = -1;
  double best_cos = -1.0;
  for (ThreadId tid : cand_threads) {  // ascending: ties keep the oldest thread
    const double c = cosine(v, centroid_of(tid));
    if (c > best_cos) {
      best_cos = c;
      best_tid = tid;
    }
  }
  outcome.best_cosine = std::max(best_cos, 0.0);

  if (config_.audit) {
    outcome.candidates = cand_threads;
    for (const auto& th : threads_) {
      if (th.sum.empty()) continue;
      if (cosine(v, centroid_of(th.id)) >= config_.threshold &&
          !std::binary_search(cand_threads.begin(), cand_threads.end(), th.id)) {
        outcome.recall_complete = false;
        break;
      }
    }
  }

  ThreadId tid;
  if (best_tid >= 0 && best_cos >= config_.threshold) {
    tid = best_tid;
    Thread& th = threads_[tid];
    th.members.push_back(seq);
    // accumulate into the unnormalized running sum
    SparseVector merged;
    merged.entries.reserve(th.sum.entries.size() + v.entries.size());
    auto ia = th.sum.entries.begin();
    auto ib = v.entries.begin();
    while (ia != th.sum.entries.end() || ib != v.entries.end()) {
      if (ib == v.entries.end() ||
          (ia != th.sum.entries.end() && ia->first < ib->first)) {
        merged.entries.push_back(*ia++);
      } else if (ia == th.sum.entries.end() || ib->first < ia->first) {
        merged.entries.push_back(*ib++);
      } else {
        merged.entries.emplace_back(ia->first, ia->second + ib->second);
        ++ia;
        ++ib;
      }
    }
    th.sum = std::move(merged);
    if (t > th.last_t) th.last_t = t;
    if (t < th.first_t) th.first_t = t;
    centroid_dirty_[tid] = true;
  } else {
    tid = new_thread();
    outcome.created = true;
  }

  lsh_.insert(seq, v, t.epoch_s);
  post_thread_.push_back(tid);
  outcome.thread = tid;
  return outcome;
}

// ---- Dumps -----------------------------------------------------------------

namespace {

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += '"';
  return out;
}

}  // namespace

std::string threads_to_csv(const std::vector<Thread>& threads,
                           std::span<const std::string> post_ids) {
  (void)post_ids;
  std::ostringstream out;
  out << "thread_id,size,first_t,last_t,representative_text\n";
  for (const auto& th : threads) {
    out << th.id << ',' << th.size() << ','
        << format_rfc3339(th.first_t.epoch_s, 0) << ','
        << format_rfc3339(th.last_t.epoch_s, 0) << ','
        << csv_escape(th.representative_text) << '\n';
  }
  return out.str();
}

std::string threads_to_json(const std::vector<Thread>& threads,
                            std::span<const std::string> post_ids) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& th : threads) {
    nlohmann::json j;
    j["thread_id"] = th.id;
    j["size"] = th.size();
    j["first_t"] = format_rfc3339(th.first_t.epoch_s, 0);
    j["last_t"] = format_rfc3339(th.last_t.epoch_s, 0);
    j["representative_text"] = th.representative_text;
    auto& members = j["member_ids"] = nlohmann::json::array();
    for (std::int64_t seq : th.members) members.push_back(post_ids[seq]);
    arr.push_back(std::move(j));
  }
  return arr.dump(2) + "\n";
}

}  // namespace geopulse
