#pragma once

#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "geopulse/geo.hpp"
#include "geopulse/types.hpp"

namespace geopulse {

/// Quartiles of a count sample plus the boxplot outlier bounds:
/// mild = Q1/Q3 -/+ 1.5*IQR, extreme = Q1/Q3 -/+ 3*IQR.
struct CountStats {
  double q1 = 0, q2 = 0, q3 = 0;
  double iqr = 0;
  double mild_low = 0, mild_high = 0;
  double extreme_low = 0, extreme_high = 0;

  bool operator==(const CountStats&) const = default;
};

/// Quartiles by linear interpolation on the sorted sample at positions
/// (n-1) * {0.25, 0.5, 0.75}. Throws InsufficientDataError on empty input.
CountStats quartiles(std::span<const double> counts);

/// Bounds derived from fixed quartiles (used on load and by quartiles()).
CountStats stats_from_quartiles(double q1, double q2, double q3);

/// A trained crowd location for one weekday/slot.
struct ReferenceCluster {
  int id = 0;
  std::vector<GeoPoint> points;
  CountStats stats;
  int support = 0;  // training days contributing a matched cluster

  bool low_confidence() const { return support < 2; }
};

struct SlotPattern {
  TimeSlotKey key;
  DbscanParams params;
  std::vector<ReferenceCluster> references;
  double match_eps_m = 0.0;  // cutoff of the cluster-to-reference match rule
};

struct CityPattern {
  int format_version = 1;
  std::string timezone;
  Geofence geofence;
  std::map<TimeSlotKey, SlotPattern> slots;  // at most 7*48 entries
};

/// Training for one slot. Clusters each day separately, clusters the union
/// of all days into reference clusters, then matches every per-day cluster
/// to its nearest reference (mean-of-min Haversine, cutoff match_eps). Each
/// reference's count sample holds one value per training day: the total
/// size of that day's clusters matched to it, 0 when none matched.
/// Throws InsufficientDataError with fewer than 2 distinct dates.
SlotPattern train_slot(const std::map<CivilDate, std::vector<GeoPoint>>& daily,
                       const TimeSlotKey& key, const DbscanParams& params,
                       double match_eps_m);

void save_pattern(const CityPattern& pattern, std::ostream& out);
void save_pattern_file(const CityPattern& pattern, const std::string& path);

/// Throws PatternFormatError (with the path of the offending field) on any
/// schema or version violation; never returns a partial pattern.
CityPattern load_pattern(std::istream& in);
CityPattern load_pattern_file(const std::string& path);

}  // namespace geopulse
