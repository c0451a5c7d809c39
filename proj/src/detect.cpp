#include "geopulse/detect.hpp"

#include <algorithm>
#include <limits>
#include <map>

#include <nlohmann/json.hpp>

#include "geopulse/tz.hpp"

namespace geopulse {

const char* to_string(OutlierClass c) {
  switch (c) {
    case OutlierClass::Normal: return "normal";
    case OutlierClass::MildHigh: return "mild_high";
    case OutlierClass::MildLow: return "mild_low";
    case OutlierClass::ExtremeHigh: return "extreme_high";
    case OutlierClass::ExtremeLow: return "extreme_low";
  }
  return "?";
}

OutlierClass classify(double count, const CountStats& stats) {
  if (count > stats.extreme_high) return OutlierClass::ExtremeHigh;
  if (count > stats.mild_high) return OutlierClass::MildHigh;
  if (count < stats.extreme_low) return OutlierClass::ExtremeLow;
  if (count < stats.mild_low) return OutlierClass::MildLow;
  return OutlierClass::Normal;
}

double mean_min_distance(std::span<const GeoPoint> c, std::span<const GeoPoint> ref) {
  if (c.empty() || ref.empty())
    throw Error("mean_min_distance: empty cluster or reference");
  double sum = 0.0;
  for (const auto& cp : c) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& rp : ref) best = std::min(best, haversine(cp, rp));
    sum += best;
  }
  return sum / static_cast<double>(c.size());
}

std::optional<ClusterMatch> match_cluster(std::span<const GeoPoint> c,
                                          const std::vector<ReferenceCluster>& refs,
                                          double match_eps_m) {
  std::optional<ClusterMatch> best;
  for (const auto& ref : refs) {
    const double d = mean_min_distance(c, ref.points);
    // strict < plus ascending-id visit order keeps the lowest id on ties
    if (!best || d < best->dist_m ||
        (d == best->dist_m && ref.id < best->ref_id))
      best = ClusterMatch{ref.id, d};
  }
  if (best && best->dist_m <= match_eps_m) return best;
  return std::nullopt;
}

namespace {

const ReferenceCluster& ref_by_id(const std::vector<ReferenceCluster>& refs, int id) {
  for (const auto& r : refs)
    if (r.id == id) return r;
  throw Error("unknown reference id " + std::to_string(id));
}

}  // namespace

OutlierReport detect_slot(std::span<const Post> posts, const SlotPattern& pattern,
                          const CivilDate& date) {
  OutlierReport report;
  report.key = pattern.key;
  report.date = date;

  std::vector<GeoPoint> pts;
  pts.reserve(posts.size());
  for (const auto& p : posts) pts.push_back(p.loc);

  Clustering clustering = dbscan(pts, pattern.params);
  report.noise = clustering.noise;

  // First pass: match each live cluster; sum live counts per reference.
  struct Pending {
    Cluster cluster;
    std::optional<ClusterMatch> match;
  };
  std::vector<Pending> pending;
  std::map<int, int> ref_totals;
  for (auto& c : clustering.clusters) {
    std::vector<GeoPoint> cpts;
    cpts.reserve(c.members.size());
    for (int i : c.members) cpts.push_back(pts[i]);
    auto m = match_cluster(cpts, pattern.references, pattern.match_eps_m);
    if (m) ref_totals[m->ref_id] += static_cast<int>(c.members.size());
    pending.push_back({std::move(c), m});
  }

  // Second pass: classify. DBSCAN may fragment one physical crowd, so all
  // clusters sharing a reference are judged by their summed count.
  for (auto& p : pending) {
    ClusterVerdict v;
    v.center = centroid(p.cluster.members, pts);
    if (p.match) {
      const auto& ref = ref_by_id(pattern.references, p.match->ref_id);
      v.kind = VerdictKind::Matched;
      v.matched_ref = p.match->ref_id;
      v.dist_m = p.match->dist_m;
      v.ref_total = ref_totals[p.match->ref_id];
      v.cls = classify(v.ref_total, ref.stats);
    } else {
      // A crowd where none is expected; no reference stats exist to grade
      // it, so any full-size cluster counts as an extreme anomaly.
      v.kind = VerdictKind::UnexpectedLocation;
      v.ref_total = static_cast<int>(p.cluster.members.size());
      v.cls = static_cast<int>(p.cluster.members.size()) >= pattern.params.min_points
                  ? OutlierClass::ExtremeHigh
                  : OutlierClass::Normal;
    }
    v.cluster = std::move(p.cluster);
    report.verdicts.push_back(std::move(v));
  }

  for (const auto& ref : pattern.references) {
    if (!ref_totals.contains(ref.id))
      report.absent_refs.push_back({ref.id, classify(0.0, ref.stats)});
  }
  return report;
}

// ---- Serialization ---------------------------------------------------------

namespace {

nlohmann::json verdict_json(const ClusterVerdict& v, std::span<const Post> posts) {
  nlohmann::json j;
  j["cluster_id"] = v.cluster.id;
  j["size"] = v.cluster.members.size();
  j["center"] = {{"lat", v.center.lat}, {"lon", v.center.lon}};
  j["kind"] = v.kind == VerdictKind::Matched ? "matched" : "unexpected_location";
  j["class"] = to_string(v.cls);
  if (v.matched_ref) {
    j["matched_ref"] = *v.matched_ref;
    j["dist_m"] = v.dist_m;
    j["ref_total"] = v.ref_total;
  }
  auto& ids = j["post_ids"] = nlohmann::json::array();
  for (int i : v.cluster.members) ids.push_back(posts[i].id);
  return j;
}

}  // namespace

nlohmann::json report_to_json(const OutlierReport& report,
                              std::span<const Post> posts) {
  nlohmann::json j;
  char date[16];
  std::snprintf(date, sizeof date, "%04d-%02d-%02d", report.date.year,
                report.date.month, report.date.day);
  j["date"] = date;
  j["weekday"] = report.key.weekday;
  j["slot"] = report.key.slot;
  j["posts"] = posts.size();
  j["noise"] = report.noise.size();
  auto& verdicts = j["verdicts"] = nlohmann::json::array();
  for (const auto& v : report.verdicts) verdicts.push_back(verdict_json(v, posts));
  auto& absent = j["absent_refs"] = nlohmann::json::array();
  for (const auto& a : report.absent_refs)
    absent.push_back({{"ref_id", a.ref_id}, {"class", to_string(a.cls)}});
  return j;
}

nlohmann::json report_to_geojson(const OutlierReport& report,
                                 std::span<const Post> posts,
                                 const SlotPattern& pattern) {
  auto geometry = [](std::vector<GeoPoint> pts) {
    nlohmann::json g;
    auto hull = convex_hull(std::move(pts));
    if (hull.size() >= 3) {
      g["type"] = "Polygon";
      nlohmann::json ring = nlohmann::json::array();
      for (const auto& p : hull) ring.push_back({p.lon, p.lat});
      ring.push_back({hull.front().lon, hull.front().lat});
      g["coordinates"] = nlohmann::json::array({ring});
    } else if (hull.size() == 2) {
      g["type"] = "LineString";
      g["coordinates"] = {{hull[0].lon, hull[0].lat}, {hull[1].lon, hull[1].lat}};
    } else {
      g["type"] = "Point";
      g["coordinates"] = {hull[0].lon, hull[0].lat};
    }
    return g;
  };

  nlohmann::json features = nlohmann::json::array();
  for (const auto& v : report.verdicts) {
    std::vector<GeoPoint> pts;
    pts.reserve(v.cluster.members.size());
    for (int i : v.cluster.members) pts.push_back(posts[i].loc);
    nlohmann::json f;
    f["type"] = "Feature";
    f["geometry"] = geometry(std::move(pts));
    f["properties"] = {
        {"feature", "live_cluster"},
        {"cluster_id", v.cluster.id},
        {"size", v.cluster.members.size()},
        {"kind", v.kind == VerdictKind::Matched ? "matched" : "unexpected_location"},
        {"class", to_string(v.cls)},
    };
    if (v.matched_ref) f["properties"]["matched_ref"] = *v.matched_ref;
    features.push_back(std::move(f));
  }
  for (const auto& a : report.absent_refs) {
    const auto& ref = ref_by_id(pattern.references, a.ref_id);
    nlohmann::json f;
    f["type"] = "Feature";
    f["geometry"] = geometry(ref.points);
    f["properties"] = {{"feature", "absent_reference"},
                       {"ref_id", a.ref_id},
                       {"class", to_string(a.cls)}};
    features.push_back(std::move(f));
  }

  nlohmann::json fc;
  fc["type"] = "FeatureCollection";
  fc["features"] = std::move(features);
  return fc;
}

}  // namespace geopulse
