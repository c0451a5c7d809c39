#include "geopulse/pattern.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "geopulse/detect.hpp"

namespace geopulse {

using ordered_json = nlohmann::ordered_json;

CountStats stats_from_quartiles(double q1, double q2, double q3) {
  CountStats s;
  s.q1 = q1;
  s.q2 = q2;
  s.q3 = q3;
  s.iqr = q3 - q1;
  s.mild_low = q1 - 1.5 * s.iqr;
  s.mild_high = q3 + 1.5 * s.iqr;
  s.extreme_low = q1 - 3.0 * s.iqr;
  s.extreme_high = q3 + 3.0 * s.iqr;
  return s;
}

CountStats quartiles(std::span<const double> counts) {
  if (counts.empty()) throw InsufficientDataError("quartiles: empty sample");
  std::vector<double> v(counts.begin(), counts.end());
  std::sort(v.begin(), v.end());

  auto at = [&](double p) {
    const double h = p * (v.size() - 1);
    const auto lo = static_cast<std::size_t>(h);
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - lo) * (v[hi] - v[lo]);
  };
  return stats_from_quartiles(at(0.25), at(0.5), at(0.75));
}

SlotPattern train_slot(const std::map<CivilDate, std::vector<GeoPoint>>& daily,
                       const TimeSlotKey& key, const DbscanParams& params,
                       double match_eps_m) {
  if (daily.size() < 2)
    throw InsufficientDataError("train_slot: need >= 2 distinct dates, got " +
                                std::to_string(daily.size()));

  SlotPattern pattern;
  pattern.key = key;
  pattern.params = params;
  pattern.match_eps_m = match_eps_m;

  // (ii) reference clusters from the union of all days (date order).
  std::vector<GeoPoint> all;
  for (const auto& [date, pts] : daily) all.insert(all.end(), pts.begin(), pts.end());
  const Clustering union_clusters = dbscan(all, params);

  pattern.references.reserve(union_clusters.clusters.size());
  for (const auto& c : union_clusters.clusters) {
    ReferenceCluster ref;
    ref.id = c.id;
    ref.points.reserve(c.members.size());
    for (int i : c.members) ref.points.push_back(all[i]);
    pattern.references.push_back(std::move(ref));
  }

  // (i) per-day clusters, matched to references; (iii) count stats.
  const std::size_t n_days = daily.size();
  std::vector<std::vector<double>> samples(pattern.references.size(),
                                           std::vector<double>(n_days, 0.0));
  std::size_t day_idx = 0;
  for (const auto& [date, pts] : daily) {
    const Clustering day_clusters = dbscan(pts, params);
    for (const auto& c : day_clusters.clusters) {
      std::vector<GeoPoint> cpts;
      cpts.reserve(c.members.size());
      for (int i : c.members) cpts.push_back(pts[i]);
      if (auto m = match_cluster(cpts, pattern.references, match_eps_m))
        samples[m->ref_id][day_idx] += static_cast<double>(cpts.size());
    }
    ++day_idx;
  }

  for (std::size_t r = 0; r < pattern.references.size(); ++r) {
    auto& ref = pattern.references[r];
    ref.stats = quartiles(samples[r]);
    ref.support = static_cast<int>(
        std::count_if(samples[r].begin(), samples[r].end(),
                      [](double c) { return c > 0.0; }));
  }
  return pattern;
}

// ---- Persistence -----------------------------------------------------------

namespace {

constexpr int kFormatVersion = 1;

ordered_json to_json(const CityPattern& p) {
  ordered_json root;
  root["format_version"] = p.format_version;
  root["timezone"] = p.timezone;
  root["geofence"] = {{"center", {{"lat", p.geofence.center.lat},
                                  {"lon", p.geofence.center.lon}}},
                      {"radius_m", p.geofence.radius_m}};
  auto& slots = root["slots"] = ordered_json::array();
  for (const auto& [key, sp] : p.slots) {
    ordered_json js;
    js["weekday"] = key.weekday;
    js["slot"] = key.slot;
    js["params"] = {{"eps_m", sp.params.eps_m},
                    {"min_points", sp.params.min_points}};
    js["match_eps_m"] = sp.match_eps_m;
    auto& refs = js["references"] = ordered_json::array();
    for (const auto& r : sp.references) {
      ordered_json jr;
      jr["id"] = r.id;
      jr["support"] = r.support;
      jr["stats"] = {{"q1", r.stats.q1}, {"q2", r.stats.q2}, {"q3", r.stats.q3}};
      auto& pts = jr["points"] = ordered_json::array();
      for (const auto& gp : r.points) pts.push_back({gp.lat, gp.lon});
      refs.push_back(std::move(jr));
    }
    slots.push_back(std::move(js));
  }
  return root;
}

[[noreturn]] void fail(const std::string& msg, const std::string& path) {
  throw PatternFormatError(msg, path);
}

const ordered_json& field(const ordered_json& j, const char* name,
                          const std::string& path) {
  if (!j.is_object() || !j.contains(name)) fail("missing field", path + "/" + name);
  return j[name];
}

double number_at(const ordered_json& j, const char* name, const std::string& path) {
  const auto& v = field(j, name, path);
  if (!v.is_number()) fail("expected number", path + "/" + name);
  return v.get<double>();
}

int int_at(const ordered_json& j, const char* name, const std::string& path) {
  const auto& v = field(j, name, path);
  if (!v.is_number_integer()) fail("expected integer", path + "/" + name);
  return v.get<int>();
}

CityPattern from_json(const ordered_json& root) {
  if (!root.is_object()) fail("expected object", "");
  CityPattern p;
  p.format_version = int_at(root, "format_version", "");
  if (p.format_version != kFormatVersion)
    fail("unsupported format_version " + std::to_string(p.format_version),
         "/format_version");

  const auto& tz = field(root, "timezone", "");
  if (!tz.is_string()) fail("expected string", "/timezone");
  p.timezone = tz.get<std::string>();

  const auto& gf = field(root, "geofence", "");
  const auto& center = field(gf, "center", "/geofence");
  p.geofence.center.lat = number_at(center, "lat", "/geofence/center");
  p.geofence.center.lon = number_at(center, "lon", "/geofence/center");
  p.geofence.radius_m = number_at(gf, "radius_m", "/geofence");
  if (!valid_lat(p.geofence.center.lat))
    fail("lat out of range", "/geofence/center/lat");
  if (!valid_lon(p.geofence.center.lon))
    fail("lon out of range", "/geofence/center/lon");
  if (!(p.geofence.radius_m > 0) || !std::isfinite(p.geofence.radius_m))
    fail("radius must be positive", "/geofence/radius_m");

  const auto& slots = field(root, "slots", "");
  if (!slots.is_array()) fail("expected array", "/slots");
  for (std::size_t si = 0; si < slots.size(); ++si) {
    const std::string sp = "/slots/" + std::to_string(si);
    const auto& js = slots[si];
    SlotPattern slot;
    slot.key.weekday = int_at(js, "weekday", sp);
    slot.key.slot = int_at(js, "slot", sp);
    if (slot.key.weekday < 0 || slot.key.weekday > 6)
      fail("weekday out of range", sp + "/weekday");
    if (slot.key.slot < 0 || slot.key.slot > 47)
      fail("slot out of range", sp + "/slot");

    const auto& params = field(js, "params", sp);
    slot.params.eps_m = number_at(params, "eps_m", sp + "/params");
    slot.params.min_points = int_at(params, "min_points", sp + "/params");
    if (!(slot.params.eps_m > 0) || !std::isfinite(slot.params.eps_m))
      fail("eps_m must be positive", sp + "/params/eps_m");
    if (slot.params.min_points < 2)
      fail("min_points must be >= 2", sp + "/params/min_points");
    slot.match_eps_m = number_at(js, "match_eps_m", sp);
    if (!(slot.match_eps_m > 0)) fail("match_eps_m must be positive", sp + "/match_eps_m");

    const auto& refs = field(js, "references", sp);
    if (!refs.is_array()) fail("expected array", sp + "/references");
    for (std::size_t ri = 0; ri < refs.size(); ++ri) {
      const std::string rp = sp + "/references/" + std::to_string(ri);
      const auto& jr = refs[ri];
      ReferenceCluster ref;
      ref.id = int_at(jr, "id", rp);
      ref.support = int_at(jr, "support", rp);
      const auto& stats = field(jr, "stats", rp);
      const double q1 = number_at(stats, "q1", rp + "/stats");
      const double q2 = number_at(stats, "q2", rp + "/stats");
      const double q3 = number_at(stats, "q3", rp + "/stats");
      if (!(q1 <= q2 && q2 <= q3)) fail("quartiles out of order", rp + "/stats");
      ref.stats = stats_from_quartiles(q1, q2, q3);
      const auto& pts = field(jr, "points", rp);
      if (!pts.is_array() || pts.empty()) fail("expected non-empty array", rp + "/points");
      for (std::size_t pi = 0; pi < pts.size(); ++pi) {
        const auto& jp = pts[pi];
        const std::string pp = rp + "/points/" + std::to_string(pi);
        if (!jp.is_array() || jp.size() != 2 || !jp[0].is_number() ||
            !jp[1].is_number())
          fail("expected [lat, lon]", pp);
        GeoPoint gp{jp[0].get<double>(), jp[1].get<double>()};
        if (!valid_lat(gp.lat)) fail("lat out of range", pp);
        if (!valid_lon(gp.lon)) fail("lon out of range", pp);
        ref.points.push_back(gp);
      }
      slot.references.push_back(std::move(ref));
    }
    std::sort(slot.references.begin(), slot.references.end(),
              [](const ReferenceCluster& a, const ReferenceCluster& b) {
                return a.id < b.id;
              });
    for (std::size_t ri = 1; ri < slot.references.size(); ++ri)
      if (slot.references[ri].id == slot.references[ri - 1].id)
        fail("duplicate reference id", sp + "/references");
    if (p.slots.contains(slot.key)) fail("duplicate slot key", sp);
    p.slots.emplace(slot.key, std::move(slot));
  }
  return p;
}

}  // namespace

void save_pattern(const CityPattern& pattern, std::ostream& out) {
  out << to_json(pattern).dump(2) << '\n';
}

void save_pattern_file(const CityPattern& pattern, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open for write: " + path);
  save_pattern(pattern, f);
  if (!f.good()) throw IoError("write failed: " + path);
}

CityPattern load_pattern(std::istream& in) {
  ordered_json root = ordered_json::parse(in, nullptr, false);
  if (root.is_discarded())
    throw PatternFormatError("pattern file is not valid JSON", "");
  return from_json(root);
}

CityPattern load_pattern_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open pattern file: " + path);
  return load_pattern(f);
}

}  // namespace geopulse
