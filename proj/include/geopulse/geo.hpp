#pragma once

#include <span>
#include <unordered_map>
#include <vector>

#include "geopulse/types.hpp"

namespace geopulse {

inline constexpr double kEarthRadiusM = 6'371'000.0;
inline constexpr double kPi = 3.141592653589793238462643383279502884;
inline constexpr double kMetersPerDegLat = kPi * kEarthRadiusM / 180.0;

inline double deg2rad(double deg) { return deg * kPi / 180.0; }

/// Great-circle distance in meters on the spherical Earth model.
double haversine(const GeoPoint& a, const GeoPoint& b);

struct DbscanParams {
  double eps_m = 0.0;
  int min_points = 2;
};

struct Cluster {
  int id = 0;
  std::vector<int> members;  // point indices, ascending
};

struct Clustering {
  std::vector<Cluster> clusters;  // ordered by id = discovery order
  std::vector<int> noise;         // ascending
  std::vector<int> labels;        // per point: cluster id or kNoiseLabel
  std::vector<bool> core;         // per point

  static constexpr int kNoiseLabel = -1;
};

/// Fixed-cell spatial index over a point set. Cell edges are sized from the
/// eps radius (longitude width at the data's max |lat|) so that the 3x3 cell
/// block around a member point is a superset of its true eps-neighborhood.
/// Immutable after construction.
class GeoGrid {
 public:
  GeoGrid(std::span<const GeoPoint> points, double eps_m);

  /// Candidate indices for an eps-neighborhood query, sorted ascending.
  /// Superset of the truth for query points within the indexed latitude
  /// band; callers re-check with haversine.
  std::vector<int> candidates(const GeoPoint& p) const;

 private:
  std::int64_t cell_key(double lat_rad, double lon_rad) const;

  std::span<const GeoPoint> points_;
  std::unordered_map<std::int64_t, std::vector<int>> cells_;
  double dphi_ = 0.0;   // lat cell height, radians
  double dlam_ = 0.0;   // lon cell width, radians
  int n_cols_ = 1;
  bool single_col_ = false;
};

/// DBSCAN under the Haversine metric. A point's eps-neighborhood includes
/// the point itself. Points are processed in ascending index order, which
/// fixes border-point assignment: the first cluster to reach a border point
/// keeps it.
Clustering dbscan(std::span<const GeoPoint> points, const DbscanParams& params);

/// Adaptive parameter choice: min_points = k, eps = the k-nearest-neighbor
/// distance at the knee of the ascending k-distance curve. The knee is the
/// point of maximum distance to the chord of the axis-normalized curve;
/// ties resolve to the smallest eps. Throws InsufficientDataError when
/// |points| <= k.
DbscanParams estimate_params(std::span<const GeoPoint> points, int k);

/// Arithmetic mean of lat and lon. City-scale only (no antimeridian care).
GeoPoint centroid(std::span<const int> members, std::span<const GeoPoint> points);
GeoPoint centroid(std::span<const GeoPoint> points);

/// Convex hull (monotone chain) in the lon/lat plane, counter-clockwise,
/// no repeated closing point. Collinear input degenerates to 2 points.
std::vector<GeoPoint> convex_hull(std::vector<GeoPoint> pts);

}  // namespace geopulse
