#include "geopulse/rank.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "geopulse/tz.hpp"

namespace geopulse {

double verdict_weight(const ClusterVerdict& v, const SeverityWeights& w) {
  if (v.kind == VerdictKind::UnexpectedLocation) return w.extreme;
  switch (v.cls) {
    case OutlierClass::ExtremeHigh: return w.extreme;
    case OutlierClass::MildHigh: return w.mild;
    default: return w.normal;
  }
}

namespace {

// post id -> verdict index for every clustered post of the slot
std::unordered_map<std::string, int> cluster_of_post(const OutlierReport& report,
                                                     std::span<const Post> slot_posts) {
  std::unordered_map<std::string, int> m;
  m.reserve(slot_posts.size());
  for (std::size_t v = 0; v < report.verdicts.size(); ++v)
    for (int i : report.verdicts[v].cluster.members)
      m.emplace(slot_posts[static_cast<std::size_t>(i)].id, static_cast<int>(v));
  return m;
}

std::unordered_map<std::string, bool> in_slot_set(std::span<const Post> slot_posts) {
  std::unordered_map<std::string, bool> m;
  m.reserve(slot_posts.size());
  for (const auto& p : slot_posts) m.emplace(p.id, true);
  return m;
}

}  // namespace

std::vector<ThreadSlotScore> score_slot(const std::vector<Thread>& threads,
                                        std::span<const std::string> post_ids,
                                        const OutlierReport& report,
                                        std::span<const Post> slot_posts,
                                        const SeverityWeights& weights) {
  const auto post_cluster = cluster_of_post(report, slot_posts);
  const auto slot_ids = in_slot_set(slot_posts);

  std::vector<ThreadSlotScore> scores;
  for (const auto& th : threads) {
    ThreadSlotScore s;
    s.thread = th.id;
    s.date = report.date;
    s.key = report.key;
    for (std::int64_t seq : th.members) {
      const std::string& pid = post_ids[static_cast<std::size_t>(seq)];
      if (!slot_ids.count(pid)) continue;
      ++s.n_slot;
      const auto it = post_cluster.find(pid);
      if (it != post_cluster.end()) ++s.in_cluster_counts[it->second];
    }
    if (s.n_slot == 0) continue;

    int best_count = 0;
    int best_verdict = -1;
    for (const auto& [v, count] : s.in_cluster_counts) {
      if (count > best_count) {  // map order: ties keep the lowest index
        best_count = count;
        best_verdict = v;
      }
    }
    if (best_verdict >= 0) {
      const auto& verdict = report.verdicts[static_cast<std::size_t>(best_verdict)];
      s.concentration = static_cast<double>(best_count) / s.n_slot;
      s.weight = verdict_weight(verdict, weights);
      s.cls = verdict.cls;
      s.unexpected = verdict.kind == VerdictKind::UnexpectedLocation;
      s.relevance = s.n_slot * s.concentration * s.weight;
    }
    scores.push_back(std::move(s));
  }
  return scores;
}

RelevanceSeries cluster_relevance(int verdict_index, const OutlierReport& report,
                                  const std::vector<Thread>& threads,
                                  std::span<const std::string> post_ids,
                                  std::span<const Post> slot_posts,
                                  const SeverityWeights& weights) {
  RelevanceSeries series;
  series.verdict_index = verdict_index;
  if (verdict_index < 0 ||
      verdict_index >= static_cast<int>(report.verdicts.size()))
    throw Error("cluster_relevance: verdict index out of range");
  const auto& verdict = report.verdicts[static_cast<std::size_t>(verdict_index)];
  const double w = verdict_weight(verdict, weights);

  std::unordered_map<std::string, bool> member_ids;
  for (int i : verdict.cluster.members)
    member_ids.emplace(slot_posts[static_cast<std::size_t>(i)].id, true);

  // restricted to the cluster, each thread's share is w * members-inside;
  // the sum telescopes over any re-partition of the same posts
  double total = 0.0;
  for (const auto& th : threads) {
    int inside = 0;
    for (std::int64_t seq : th.members)
      if (member_ids.count(post_ids[static_cast<std::size_t>(seq)])) ++inside;
    total += w * inside;
  }
  series.values[report.key] = total;
  return series;
}

std::vector<ThreadDayScore> rank_threads(const std::vector<ThreadSlotScore>& scores,
                                         const std::vector<Thread>& threads,
                                         std::size_t k) {
  std::unordered_map<ThreadId, double> day_relevance;
  for (const auto& s : scores) day_relevance[s.thread] += s.relevance;

  std::vector<ThreadDayScore> out;
  out.reserve(threads.size());
  for (const auto& th : threads) {
    ThreadDayScore d;
    d.thread = th.id;
    const auto it = day_relevance.find(th.id);
    d.relevance = it == day_relevance.end() ? 0.0 : it->second;
    d.size = th.size();
    d.first_t = th.first_t;
    d.representative_text = th.representative_text;
    out.push_back(std::move(d));
  }
  std::sort(out.begin(), out.end(), [](const ThreadDayScore& a, const ThreadDayScore& b) {
    if (a.relevance != b.relevance) return a.relevance > b.relevance;
    if (a.size != b.size) return a.size > b.size;
    if (a.first_t.epoch_s != b.first_t.epoch_s)
      return a.first_t.epoch_s < b.first_t.epoch_s;
    return a.thread < b.thread;
  });
  if (out.size() > k) out.resize(k);
  return out;
}

std::string relevance_csv(const std::vector<ThreadSlotScore>& scores) {
  std::ostringstream out;
  out << "thread_id,date,slot,relevance,concentration,class\n";
  for (const auto& s : scores) {
    char date[16];
    std::snprintf(date, sizeof date, "%04d-%02d-%02d", s.date.year, s.date.month,
                  s.date.day);
    out << s.thread << ',' << date << ',' << s.key.slot << ',' << s.relevance
        << ',' << s.concentration << ','
        << (s.unexpected ? "unexpected_location" : to_string(s.cls)) << '\n';
  }
  return out.str();
}

std::string topk_json(const std::vector<ThreadDayScore>& ranked) {
  nlohmann::json arr = nlohmann::json::array();
  int rank = 1;
  for (const auto& d : ranked) {
    nlohmann::json j;
    j["rank"] = rank++;
    j["thread_id"] = d.thread;
    j["relevance"] = d.relevance;
    j["size"] = d.size;
    j["first_t"] = format_rfc3339(d.first_t.epoch_s, 0);
    j["representative_text"] = d.representative_text;
    arr.push_back(std::move(j));
  }
  return arr.dump(2) + "\n";
}

std::string topk_markdown(const std::vector<ThreadDayScore>& ranked) {
  std::ostringstream out;
  out << "| rank | thread | relevance | size | first seen | text |\n";
  out << "|-----:|-------:|----------:|-----:|------------|------|\n";
  int rank = 1;
  for (const auto& d : ranked) {
    std::string text = d.representative_text;
    for (auto& c : text)
      if (c == '|' || c == '\n') c = ' ';
    if (text.size() > 60) text = text.substr(0, 57) + "...";
    out << "| " << rank++ << " | " << d.thread << " | " << d.relevance << " | "
        << d.size << " | " << format_rfc3339(d.first_t.epoch_s, 0) << " | "
        << text << " |\n";
  }
  return out.str();
}

}  // namespace geopulse
