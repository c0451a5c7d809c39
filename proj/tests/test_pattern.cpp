#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>
#include <sstream>

#include "geopulse/pattern.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace geopulse;

TEST_CASE("quartiles of {5,7,8,9,30} land on the sample values") {
  const double v[] = {5, 7, 8, 9, 30};
  const auto s = quartiles(v);
  CHECK(s.q1 == 7.0);
  CHECK(s.q2 == 8.0);
  CHECK(s.q3 == 9.0);
  CHECK(s.iqr == 2.0);
  CHECK(s.mild_low == 4.0);
  CHECK(s.mild_high == 12.0);
  CHECK(s.extreme_low == 1.0);
  CHECK(s.extreme_high == 15.0);
}

TEST_CASE("quartiles interpolate between order statistics") {
  const double v[] = {1, 2, 3, 4};  // h = 0.75, 1.5, 2.25
  const auto s = quartiles(v);
  CHECK(s.q1 == doctest::Approx(1.75));
  CHECK(s.q2 == doctest::Approx(2.5));
  CHECK(s.q3 == doctest::Approx(3.25));
}

TEST_CASE("quartiles edge samples") {
  const double one[] = {42};
  const auto s1 = quartiles(one);
  CHECK(s1.q1 == 42.0);
  CHECK(s1.q2 == 42.0);
  CHECK(s1.q3 == 42.0);
  CHECK(s1.iqr == 0.0);
  CHECK(s1.mild_low == 42.0);
  CHECK(s1.extreme_high == 42.0);

  const double two[] = {10, 20};
  const auto s2 = quartiles(two);
  CHECK(s2.q1 == 12.5);
  CHECK(s2.q2 == 15.0);
  CHECK(s2.q3 == 17.5);

  CHECK_THROWS_AS(quartiles(std::span<const double>{}), InsufficientDataError);
}

TEST_CASE("quartiles do not require sorted input") {
  const double shuffled[] = {30, 8, 5, 9, 7};
  const double sorted[] = {5, 7, 8, 9, 30};
  CHECK(quartiles(shuffled) == quartiles(sorted));
}

TEST_CASE("quartiles agree with a reference implementation on random samples") {
  std::mt19937_64 rng(20260823);
  std::uniform_int_distribution<int> len(1, 40);
  std::uniform_real_distribution<double> val(0.0, 400.0);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<double> v(len(rng));
    for (auto& x : v)
      x = (trial % 2) ? std::floor(val(rng)) : val(rng);  // integer-ish half the time
    const auto got = quartiles(v);
    const auto want = oracle::box_stats(v);
    CHECK(got.q1 == want.q1);
    CHECK(got.q2 == want.q2);
    CHECK(got.q3 == want.q3);
    const double iqr = want.q3 - want.q1;
    CHECK(got.mild_low == want.q1 - 1.5 * iqr);
    CHECK(got.mild_high == want.q3 + 1.5 * iqr);
    CHECK(got.extreme_low == want.q1 - 3.0 * iqr);
    CHECK(got.extreme_high == want.q3 + 3.0 * iqr);
  }
}

TEST_CASE("stats_from_quartiles spreads the fences") {
  const auto s = stats_from_quartiles(10, 12, 18);
  CHECK(s.iqr == 8.0);
  CHECK(s.mild_low == -2.0);
  CHECK(s.mild_high == 30.0);
  CHECK(s.extreme_low == -14.0);
  CHECK(s.extreme_high == 42.0);
}

TEST_CASE("train_slot needs at least two dates") {
  std::map<CivilDate, std::vector<GeoPoint>> daily;
  CHECK_THROWS_AS(train_slot(daily, {5, 35}, {150.0, 4}, 500.0),
                  InsufficientDataError);
  daily[{2016, 1, 16}] = {{40.0, -73.0}};
  CHECK_THROWS_AS(train_slot(daily, {5, 35}, {150.0, 4}, 500.0),
                  InsufficientDataError);
}

TEST_CASE("train_slot: stable crowd plus a one-day stray") {
  const GeoPoint plaza{40.7580, -73.9855};
  const GeoPoint stray = helpers::offset_m(plaza, 1500.0, 0.0);
  std::mt19937_64 rng(7);

  std::map<CivilDate, std::vector<GeoPoint>> daily;
  daily[{2016, 1, 16}] = helpers::blob(rng, plaza, 20.0, 10);
  auto day2 = helpers::blob(rng, plaza, 20.0, 12);
  const auto extra = helpers::blob(rng, stray, 20.0, 8);
  day2.insert(day2.end(), extra.begin(), extra.end());
  daily[{2016, 1, 23}] = day2;

  const auto sp = train_slot(daily, {5, 35}, {150.0, 4}, 500.0);
  CHECK(sp.key == TimeSlotKey{5, 35});
  CHECK(sp.match_eps_m == 500.0);
  REQUIRE(sp.references.size() == 2);

  // the plaza crowd is discovered first (day-1 points lead the union)
  const auto& both_days = sp.references[0];
  const auto& one_day = sp.references[1];
  CHECK(both_days.points.size() == 22);
  CHECK(one_day.points.size() == 8);

  // count sample per day: [10, 12] at the plaza, [0, 8] at the stray spot
  CHECK(both_days.stats.q2 == 11.0);
  CHECK(both_days.stats.q1 == 10.5);
  CHECK(both_days.stats.q3 == 11.5);
  CHECK(both_days.support == 2);
  CHECK_FALSE(both_days.low_confidence());

  CHECK(one_day.stats.q1 == 2.0);
  CHECK(one_day.stats.q2 == 4.0);
  CHECK(one_day.stats.q3 == 6.0);
  CHECK(one_day.support == 1);
  CHECK(one_day.low_confidence());
}

TEST_CASE("train_slot with only sparse noise yields no references") {
  std::mt19937_64 rng(9);
  std::map<CivilDate, std::vector<GeoPoint>> daily;
  daily[{2016, 1, 16}] = helpers::disc(rng, {40.75, -73.98}, 4000.0, 6);
  daily[{2016, 1, 23}] = helpers::disc(rng, {40.75, -73.98}, 4000.0, 6);
  const auto sp = train_slot(daily, {2, 10}, {30.0, 5}, 500.0);
  CHECK(sp.references.empty());
}

namespace {

CityPattern sample_pattern() {
  CityPattern p;
  p.timezone = "America/New_York";
  p.geofence = {{40.756667, -73.986389}, 5000.0};

  SlotPattern a;
  a.key = {5, 35};
  a.params = {120.0, 4};
  a.match_eps_m = 480.0;
  ReferenceCluster r0;
  r0.id = 0;
  r0.points = {{40.758, -73.9855}, {40.7581, -73.98545}, {40.75795, -73.98561}};
  r0.stats = stats_from_quartiles(7, 8, 9);
  r0.support = 4;
  ReferenceCluster r1;
  r1.id = 1;
  r1.points = {{40.7505, -73.9934}, {40.75053, -73.99341}};
  r1.stats = stats_from_quartiles(0, 2, 5);
  r1.support = 1;
  a.references = {r0, r1};
  p.slots[a.key] = a;

  SlotPattern b;
  b.key = {6, 20};
  b.params = {150.0, 5};
  b.match_eps_m = 600.0;
  p.slots[b.key] = b;  // a trained slot can legitimately have no references
  return p;
}

std::string dump(const CityPattern& p) {
  std::ostringstream out;
  save_pattern(p, out);
  return out.str();
}

}  // namespace

TEST_CASE("pattern save / load round trip preserves every field") {
  const auto p = sample_pattern();
  std::istringstream in(dump(p));
  const auto q = load_pattern(in);

  CHECK(q.format_version == 1);
  CHECK(q.timezone == p.timezone);
  CHECK(q.geofence.center == p.geofence.center);
  CHECK(q.geofence.radius_m == p.geofence.radius_m);
  REQUIRE(q.slots.size() == 2);

  const auto& a = q.slots.at({5, 35});
  CHECK(a.params.eps_m == 120.0);
  CHECK(a.params.min_points == 4);
  CHECK(a.match_eps_m == 480.0);
  REQUIRE(a.references.size() == 2);
  CHECK(a.references[0].points == p.slots.at({5, 35}).references[0].points);
  CHECK(a.references[0].stats == p.slots.at({5, 35}).references[0].stats);
  CHECK(a.references[0].support == 4);
  CHECK(a.references[1].stats.mild_high == doctest::Approx(5 + 1.5 * 5));
  CHECK(q.slots.at({6, 20}).references.empty());
}

TEST_CASE("pattern serialization is byte stable across a round trip") {
  const auto first = dump(sample_pattern());
  std::istringstream in(first);
  const auto second = dump(load_pattern(in));
  CHECK(first == second);
}

TEST_CASE("pattern files work through the filesystem API") {
  const std::string path = "/tmp/geopulse_test_pattern.json";
  const auto p = sample_pattern();
  save_pattern_file(p, path);
  const auto q = load_pattern_file(path);
  CHECK(dump(p) == dump(q));
  CHECK_THROWS_AS(load_pattern_file("/tmp/no_such_pattern_here.json"), IoError);
}

namespace {

nlohmann::ordered_json valid_doc() {
  std::istringstream unused;
  std::ostringstream out;
  save_pattern(sample_pattern(), out);
  return nlohmann::ordered_json::parse(out.str());
}

std::string load_error_path(const nlohmann::ordered_json& doc) {
  std::istringstream in(doc.dump());
  try {
    load_pattern(in);
  } catch (const PatternFormatError& e) {
    return e.path();
  }
  return "<no error>";
}

}  // namespace

TEST_CASE("pattern load rejects schema violations and names the field") {
  CHECK(load_error_path(valid_doc()) == "<no error>");

  {
    std::istringstream in("{ not json");
    CHECK_THROWS_AS(load_pattern(in), PatternFormatError);
  }
  {
    auto d = valid_doc();
    d["format_version"] = 2;
    CHECK(load_error_path(d) == "/format_version");
  }
  {
    auto d = valid_doc();
    d.erase("timezone");
    CHECK(load_error_path(d) == "/timezone");
  }
  {
    auto d = valid_doc();
    d["geofence"]["radius_m"] = -1.0;
    CHECK(load_error_path(d) == "/geofence/radius_m");
  }
  {
    auto d = valid_doc();
    d["slots"][0]["weekday"] = 7;
    CHECK(load_error_path(d) == "/slots/0/weekday");
  }
  {
    auto d = valid_doc();
    d["slots"][0]["slot"] = 48;
    CHECK(load_error_path(d) == "/slots/0/slot");
  }
  {
    auto d = valid_doc();
    d["slots"][0]["params"]["min_points"] = 1;
    CHECK(load_error_path(d) == "/slots/0/params/min_points");
  }
  {
    auto d = valid_doc();
    d["slots"][0]["references"][0]["stats"].erase("q2");
    CHECK(load_error_path(d) == "/slots/0/references/0/stats/q2");
  }
  {
    auto d = valid_doc();
    d["slots"][0]["references"][0]["stats"]["q1"] = 99.0;  // q1 > q2
    CHECK(load_error_path(d) == "/slots/0/references/0/stats");
  }
  {
    auto d = valid_doc();
    d["slots"][0]["references"][0]["points"] = nlohmann::ordered_json::array();
    CHECK(load_error_path(d) == "/slots/0/references/0/points");
  }
  {
    auto d = valid_doc();
    d["slots"][0]["references"][0]["points"][0] = {200.0, 0.0};
    CHECK(load_error_path(d) == "/slots/0/references/0/points/0");
  }
  {
    auto d = valid_doc();
    d["slots"][1] = d["slots"][0];  // duplicate key
    CHECK(load_error_path(d) == "/slots/1");
  }
  {
    auto d = valid_doc();
    d["slots"][0]["references"][1]["id"] = 0;  // collides with references[0]
    CHECK(load_error_path(d) == "/slots/0/references");
  }
}
