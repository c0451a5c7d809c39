#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "geopulse/detect.hpp"
#include "geopulse/threads.hpp"

namespace geopulse {

/// Class-to-weight mapping used by the relevance product. A cluster at an
/// unexpected location always takes the extreme weight.
struct SeverityWeights {
  double extreme = 3.0;  // ExtremeHigh and unexpected-location clusters
  double mild = 2.0;     // MildHigh
  double normal = 1.0;   // everything else that matched a reference
};

double verdict_weight(const ClusterVerdict& v, const SeverityWeights& w);

/// One thread's geography-aware score for one half-hour slot.
///
/// relevance = n_slot * concentration * weight, where n_slot is how many of
/// the thread's posts fall in the slot, concentration is the largest fraction
/// of them inside a single live cluster, and weight comes from that cluster's
/// verdict. A thread whose slot posts all sit outside every cluster scores 0.
struct ThreadSlotScore {
  ThreadId thread = -1;
  CivilDate date;
  TimeSlotKey key;
  std::map<int, int> in_cluster_counts;  // verdict index -> member count
  int n_slot = 0;
  double concentration = 0.0;
  double weight = 0.0;
  double relevance = 0.0;
  OutlierClass cls = OutlierClass::Normal;
  bool unexpected = false;  // concentration cluster sits at an unexpected spot
};

/// Scores every thread that has at least one post in the slot.
/// `post_ids` maps pipeline sequence numbers to external post ids;
/// `slot_posts` is the exact post vector the report's member indices refer to.
std::vector<ThreadSlotScore> score_slot(const std::vector<Thread>& threads,
                                        std::span<const std::string> post_ids,
                                        const OutlierReport& report,
                                        std::span<const Post> slot_posts,
                                        const SeverityWeights& weights = {});

/// Per-slot relevance sums for one live cluster: each thread contributes
/// weight(cluster) * (its members inside the cluster), so splitting a thread
/// never changes a cluster's series.
struct RelevanceSeries {
  int verdict_index = -1;
  std::map<TimeSlotKey, double> values;
};

RelevanceSeries cluster_relevance(int verdict_index, const OutlierReport& report,
                                  const std::vector<Thread>& threads,
                                  std::span<const std::string> post_ids,
                                  std::span<const Post> slot_posts,
                                  const SeverityWeights& weights = {});

/// Day-level roll-up of one thread: summed relevance over its slots.
struct ThreadDayScore {
  ThreadId thread = -1;
  double relevance = 0.0;
  std::size_t size = 0;
  Instant first_t;
  std::string representative_text;
};

/// Strict total order: relevance desc, then size desc, then first_t asc,
/// then thread id asc. Returns at most k entries.
std::vector<ThreadDayScore> rank_threads(const std::vector<ThreadSlotScore>& scores,
                                         const std::vector<Thread>& threads,
                                         std::size_t k);

std::string relevance_csv(const std::vector<ThreadSlotScore>& scores);
std::string topk_json(const std::vector<ThreadDayScore>& ranked);
std::string topk_markdown(const std::vector<ThreadDayScore>& ranked);

}  // namespace geopulse
