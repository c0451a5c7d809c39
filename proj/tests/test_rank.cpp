#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <nlohmann/json.hpp>

#include "geopulse/rank.hpp"
#include "helpers.hpp"

using namespace geopulse;

namespace {

ClusterVerdict verdict(int id, std::vector<int> members, OutlierClass cls,
                       VerdictKind kind) {
  ClusterVerdict v;
  v.cluster.id = id;
  v.cluster.members = std::move(members);
  v.cls = cls;
  v.kind = kind;
  return v;
}

Thread thread(ThreadId id, std::vector<std::int64_t> members, std::int64_t first_s,
              std::string text = "") {
  Thread t;
  t.id = id;
  t.members = std::move(members);
  t.first_t = {first_s, 0};
  t.last_t = t.first_t;
  t.representative_text = std::move(text);
  return t;
}

/// Ten slot posts p0..p9: a 6-post extreme cluster, a 2-post normal cluster,
/// 2 noise posts. Sequence numbers equal the p-index; seqs 10/11 are posts
/// from another slot ("q0", "q1").
struct Fixture {
  std::vector<Post> slot_posts;
  std::vector<std::string> post_ids;
  OutlierReport report;

  Fixture() {
    for (int i = 0; i < 10; ++i) {
      slot_posts.push_back(helpers::make_post("p" + std::to_string(i), 1000 + i,
                                              {40.75, -73.98}, ""));
      post_ids.push_back("p" + std::to_string(i));
    }
    post_ids.push_back("q0");
    post_ids.push_back("q1");
    report.key = {5, 35};
    report.date = {2016, 1, 23};
    report.verdicts.push_back(
        verdict(0, {0, 1, 2, 3, 4, 5}, OutlierClass::ExtremeHigh, VerdictKind::Matched));
    report.verdicts.push_back(
        verdict(1, {6, 7}, OutlierClass::Normal, VerdictKind::Matched));
    report.noise = {8, 9};
  }
};

const ThreadSlotScore* find_score(const std::vector<ThreadSlotScore>& scores,
                                  ThreadId id) {
  for (const auto& s : scores)
    if (s.thread == id) return &s;
  return nullptr;
}

}  // namespace

TEST_CASE("verdict weights by class, unexpected location always extreme") {
  const SeverityWeights w;
  CHECK(verdict_weight(verdict(0, {}, OutlierClass::ExtremeHigh, VerdictKind::Matched), w) == 3.0);
  CHECK(verdict_weight(verdict(0, {}, OutlierClass::MildHigh, VerdictKind::Matched), w) == 2.0);
  CHECK(verdict_weight(verdict(0, {}, OutlierClass::Normal, VerdictKind::Matched), w) == 1.0);
  CHECK(verdict_weight(verdict(0, {}, OutlierClass::MildLow, VerdictKind::Matched), w) == 1.0);
  CHECK(verdict_weight(verdict(0, {}, OutlierClass::ExtremeLow, VerdictKind::Matched), w) == 1.0);
  CHECK(verdict_weight(verdict(0, {}, OutlierClass::Normal, VerdictKind::UnexpectedLocation), w) == 3.0);

  const SeverityWeights custom{5.0, 4.0, 0.5};
  CHECK(verdict_weight(verdict(0, {}, OutlierClass::MildHigh, VerdictKind::Matched), custom) == 4.0);
  CHECK(verdict_weight(verdict(0, {}, OutlierClass::Normal, VerdictKind::Matched), custom) == 0.5);
}

TEST_CASE("score_slot: concentration times slot count times weight") {
  Fixture f;
  std::vector<Thread> threads;
  threads.push_back(thread(0, {0, 1, 2, 3}, 1000));    // fully inside the extreme cluster
  threads.push_back(thread(1, {4, 5, 6}, 1004));       // 2 extreme, 1 normal
  threads.push_back(thread(2, {8, 9}, 1008));          // noise only
  threads.push_back(thread(3, {10, 11}, 2000));        // different slot entirely
  threads.push_back(thread(4, {7}, 1007));             // 1 normal

  const auto scores = score_slot(threads, f.post_ids, f.report, f.slot_posts);
  REQUIRE(scores.size() == 4);  // thread 3 has nothing in the slot
  CHECK(find_score(scores, 3) == nullptr);

  const auto* a = find_score(scores, 0);
  REQUIRE(a);
  CHECK(a->n_slot == 4);
  CHECK(a->concentration == 1.0);
  CHECK(a->weight == 3.0);
  CHECK(a->relevance == 12.0);
  CHECK(a->cls == OutlierClass::ExtremeHigh);
  CHECK_FALSE(a->unexpected);
  CHECK(a->date == CivilDate{2016, 1, 23});
  CHECK(a->key == TimeSlotKey{5, 35});

  const auto* b = find_score(scores, 1);
  REQUIRE(b);
  CHECK(b->n_slot == 3);
  CHECK(b->concentration == doctest::Approx(2.0 / 3.0));
  CHECK(b->relevance == doctest::Approx(6.0));
  CHECK(b->in_cluster_counts.at(0) == 2);
  CHECK(b->in_cluster_counts.at(1) == 1);

  const auto* c = find_score(scores, 2);
  REQUIRE(c);
  CHECK(c->n_slot == 2);
  CHECK(c->relevance == 0.0);
  CHECK(c->concentration == 0.0);

  const auto* e = find_score(scores, 4);
  REQUIRE(e);
  CHECK(e->relevance == 1.0);  // 1 * 1.0 * normal weight
}

TEST_CASE("a forty-post thread saturating an extreme cluster scores 120") {
  std::vector<Post> posts;
  std::vector<std::string> ids;
  std::vector<int> members;
  for (int i = 0; i < 40; ++i) {
    posts.push_back(helpers::make_post("e" + std::to_string(i), i, {40.75, -73.98}, ""));
    ids.push_back("e" + std::to_string(i));
    members.push_back(i);
  }
  OutlierReport rep;
  rep.key = {5, 34};
  rep.date = {2016, 1, 23};
  rep.verdicts.push_back(
      verdict(0, members, OutlierClass::ExtremeHigh, VerdictKind::Matched));

  std::vector<std::int64_t> seqs(members.begin(), members.end());
  const std::vector<Thread> threads = {thread(0, seqs, 0)};
  const auto scores = score_slot(threads, ids, rep, posts);
  REQUIRE(scores.size() == 1);
  CHECK(scores[0].relevance == 120.0);
}

TEST_CASE("tied cluster counts resolve to the lowest verdict index") {
  Fixture f;
  // one member in each cluster: counts tie 1-1, the extreme cluster (index 0) wins
  const std::vector<Thread> threads = {thread(0, {5, 6}, 1005)};
  const auto scores = score_slot(threads, f.post_ids, f.report, f.slot_posts);
  REQUIRE(scores.size() == 1);
  CHECK(scores[0].concentration == 0.5);
  CHECK(scores[0].weight == 3.0);
  CHECK(scores[0].cls == OutlierClass::ExtremeHigh);
}

TEST_CASE("an unexpected-location cluster flags its thread") {
  Fixture f;
  f.report.verdicts[1] =
      verdict(1, {6, 7}, OutlierClass::Normal, VerdictKind::UnexpectedLocation);
  const std::vector<Thread> threads = {thread(0, {6, 7}, 1006)};
  const auto scores = score_slot(threads, f.post_ids, f.report, f.slot_posts);
  REQUIRE(scores.size() == 1);
  CHECK(scores[0].unexpected);
  CHECK(scores[0].weight == 3.0);
  CHECK(scores[0].relevance == 6.0);  // 2 * 1.0 * 3
}

TEST_CASE("cluster relevance telescopes under thread splits") {
  Fixture f;
  const std::vector<Thread> whole = {thread(0, {0, 1, 2, 3}, 1000),
                                     thread(1, {4, 5, 6}, 1004),
                                     thread(2, {8, 9}, 1008)};
  const std::vector<Thread> split = {thread(0, {0, 1}, 1000), thread(1, {2, 3}, 1002),
                                     thread(2, {4}, 1004),    thread(3, {5, 6}, 1005),
                                     thread(4, {8}, 1008),    thread(5, {9}, 1009)};

  const auto before = cluster_relevance(0, f.report, whole, f.post_ids, f.slot_posts);
  const auto after = cluster_relevance(0, f.report, split, f.post_ids, f.slot_posts);
  CHECK(before.verdict_index == 0);
  CHECK(before.values.at({5, 35}) == 18.0);  // 3 * 6 members covered
  CHECK(after.values.at({5, 35}) == 18.0);

  const auto small = cluster_relevance(1, f.report, whole, f.post_ids, f.slot_posts);
  CHECK(small.values.at({5, 35}) == 1.0);  // 1 * 1 covered member (seq 6)

  CHECK_THROWS_AS(cluster_relevance(2, f.report, whole, f.post_ids, f.slot_posts),
                  Error);
  CHECK_THROWS_AS(cluster_relevance(-1, f.report, whole, f.post_ids, f.slot_posts),
                  Error);
}

TEST_CASE("rank_threads orders by relevance, size, first seen, id") {
  Fixture f;
  std::vector<Thread> threads;
  threads.push_back(thread(0, {0, 1, 2, 3}, 1000, "big story"));
  threads.push_back(thread(1, {4, 5, 6}, 1004, "second"));
  threads.push_back(thread(2, {8, 9}, 1100, "late noise"));
  threads.push_back(thread(3, {10, 11}, 50, "early elsewhere"));
  threads.push_back(thread(4, {7}, 1007, "tiny"));

  const auto scores = score_slot(threads, f.post_ids, f.report, f.slot_posts);
  const auto ranked = rank_threads(scores, threads, 10);
  REQUIRE(ranked.size() == 5);
  CHECK(ranked[0].thread == 0);
  CHECK(ranked[0].relevance == 12.0);
  CHECK(ranked[1].thread == 1);
  CHECK(ranked[2].thread == 4);
  // threads 2 and 3: both relevance 0, both size 2, earlier first_t first
  CHECK(ranked[3].thread == 3);
  CHECK(ranked[4].thread == 2);

  CHECK(rank_threads(scores, threads, 0).empty());
  CHECK(rank_threads(scores, threads, 3).size() == 3);

  // equal everything except id: the lower id sorts first
  const std::vector<Thread> twins = {thread(7, {8}, 500), thread(6, {9}, 500)};
  const auto tied = rank_threads({}, twins, 5);
  CHECK(tied[0].thread == 6);
  CHECK(tied[1].thread == 7);
}

TEST_CASE("relevance csv rows carry class labels") {
  Fixture f;
  std::vector<Thread> threads = {thread(0, {0, 1, 2, 3}, 1000)};
  auto scores = score_slot(threads, f.post_ids, f.report, f.slot_posts);
  REQUIRE(scores.size() == 1);
  scores[0].unexpected = false;
  auto csv = relevance_csv(scores);
  CHECK(csv.find("thread_id,date,slot,relevance,concentration,class\n") == 0);
  CHECK(csv.find("0,2016-01-23,35,12,1,extreme_high\n") != std::string::npos);

  scores[0].unexpected = true;
  csv = relevance_csv(scores);
  CHECK(csv.find("unexpected_location") != std::string::npos);
}

TEST_CASE("top-k outputs are faithful and safe to embed") {
  std::vector<ThreadDayScore> ranked(2);
  ranked[0].thread = 9;
  ranked[0].relevance = 42.5;
  ranked[0].size = 17;
  ranked[0].first_t = {0, 0};
  ranked[0].representative_text = "pipes | in | text\nand a newline";
  ranked[1].thread = 2;
  ranked[1].relevance = 1.0;
  ranked[1].size = 3;
  ranked[1].first_t = {3600, -300};
  ranked[1].representative_text = std::string(80, 'x');

  const auto parsed = nlohmann::json::parse(topk_json(ranked));
  REQUIRE(parsed.size() == 2);
  CHECK(parsed[0]["rank"] == 1);
  CHECK(parsed[0]["thread_id"] == 9);
  CHECK(parsed[0]["relevance"] == 42.5);
  CHECK(parsed[0]["first_t"] == "1970-01-01T00:00:00Z");
  CHECK(parsed[1]["rank"] == 2);
  CHECK(parsed[1]["first_t"] == "1970-01-01T01:00:00Z");  // rendered in UTC

  const auto md = topk_markdown(ranked);
  CHECK(md.find("| rank |") == 0);
  CHECK(md.find('\n') != std::string::npos);
  CHECK(md.find("pipes   in   text and a newline") != std::string::npos);
  CHECK(md.find(std::string(57, 'x') + "...") != std::string::npos);
  CHECK(md.find(std::string(58, 'x')) == std::string::npos);
}
