#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "geopulse/pattern.hpp"
#include "geopulse/types.hpp"

namespace geopulse {

enum class OutlierClass { Normal, MildHigh, MildLow, ExtremeHigh, ExtremeLow };

const char* to_string(OutlierClass c);

/// Boxplot interval rule: a count strictly outside (mild_low, mild_high) is
/// a mild outlier, strictly outside (extreme_low, extreme_high) an extreme
/// one. Boundary values are inside their interval.
OutlierClass classify(double count, const CountStats& stats);

/// Mean over c's points of each point's minimum Haversine distance to ref.
/// Asymmetric. Both sets must be non-empty.
double mean_min_distance(std::span<const GeoPoint> c, std::span<const GeoPoint> ref);

struct ClusterMatch {
  int ref_id = 0;
  double dist_m = 0.0;
};

/// The reference minimizing mean_min_distance, provided that minimum is
/// <= match_eps; distance ties resolve to the lowest reference id.
std::optional<ClusterMatch> match_cluster(std::span<const GeoPoint> c,
                                          const std::vector<ReferenceCluster>& refs,
                                          double match_eps_m);

enum class VerdictKind { Matched, UnexpectedLocation };

struct ClusterVerdict {
  Cluster cluster;        // members index into the slot's post sequence
  GeoPoint center;
  std::optional<int> matched_ref;
  double dist_m = 0.0;    // mean-min distance to the matched reference
  OutlierClass cls = OutlierClass::Normal;
  VerdictKind kind = VerdictKind::Matched;
  int ref_total = 0;      // summed live count classified for the matched ref
};

struct AbsentReference {
  int ref_id = 0;
  OutlierClass cls = OutlierClass::Normal;  // classify(0, stats)
};

struct OutlierReport {
  TimeSlotKey key;
  CivilDate date;
  std::vector<ClusterVerdict> verdicts;   // one per live cluster
  std::vector<AbsentReference> absent_refs;
  std::vector<int> noise;                 // unclustered post indices
};

/// Detection for one slot: cluster the live posts with the trained
/// parameters, match each cluster to a reference and classify the summed
/// live count per reference against its bounds. Clusters matching no
/// reference are anomalies at an unexpected location; references claimed
/// by no cluster are classified against a count of 0.
OutlierReport detect_slot(std::span<const Post> posts, const SlotPattern& pattern,
                          const CivilDate& date);

nlohmann::json report_to_json(const OutlierReport& report,
                              std::span<const Post> posts);
/// GeoJSON FeatureCollection: verdict clusters as convex-hull polygons
/// (degenerate hulls as LineString/Point), class and kind as properties.
nlohmann::json report_to_geojson(const OutlierReport& report,
                                 std::span<const Post> posts,
                                 const SlotPattern& pattern);

}  // namespace geopulse
