#include "geopulse/geo.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

namespace geopulse {

double haversine(const GeoPoint& a, const GeoPoint& b) {
  const double phi1 = deg2rad(a.lat);
  const double phi2 = deg2rad(b.lat);
  const double dphi = deg2rad(b.lat - a.lat);
  const double dlam = deg2rad(b.lon - a.lon);
  const double sp = std::sin(dphi / 2.0);
  const double sl = std::sin(dlam / 2.0);
  double h = sp * sp + std::cos(phi1) * std::cos(phi2) * sl * sl;
  h = std::clamp(h, 0.0, 1.0);
  return 2.0 * kEarthRadiusM * std::asin(std::sqrt(h));
}

// ---- GeoGrid ---------------------------------------------------------------

GeoGrid::GeoGrid(std::span<const GeoPoint> points, double eps_m) : points_(points) {
  // Exact angular bounds for a chord of eps meters: any pair within eps
  // differs by at most dphi in latitude and, at |lat| <= phi_max, by at
  // most dlam in longitude. asin keeps the bound valid at all latitudes.
  const double half = std::min(1.0, eps_m / (2.0 * kEarthRadiusM));
  dphi_ = 2.0 * std::asin(half);

  double max_abs_lat = 0.0;
  for (const auto& p : points) max_abs_lat = std::max(max_abs_lat, std::abs(p.lat));
  const double cos_max = std::cos(deg2rad(std::min(max_abs_lat, 89.999999)));
  const double q = eps_m / (2.0 * kEarthRadiusM * cos_max);
  if (q >= 1.0) {
    single_col_ = true;
    dlam_ = 2.0 * kPi;
    n_cols_ = 1;
  } else {
    dlam_ = 2.0 * std::asin(q);
    n_cols_ = std::max(1, static_cast<int>(2.0 * kPi / dlam_));
    dlam_ = 2.0 * kPi / n_cols_;  // even division so wrap-around stays exact
  }

  for (int i = 0; i < static_cast<int>(points.size()); ++i) {
    const auto& p = points[i];
    cells_[cell_key(deg2rad(p.lat), deg2rad(p.lon))].push_back(i);
  }
}

std::int64_t GeoGrid::cell_key(double lat_rad, double lon_rad) const {
  const auto row = static_cast<std::int64_t>(std::floor((lat_rad + kPi) / dphi_));
  std::int64_t col = 0;
  if (!single_col_) {
    col = static_cast<std::int64_t>(std::floor((lon_rad + kPi) / dlam_));
    col = ((col % n_cols_) + n_cols_) % n_cols_;
  }
  // 32-bit truncation may merge far-apart cells for absurdly small eps;
  // merged cells only widen the candidate set, never shrink it.
  return static_cast<std::int64_t>(
      (static_cast<std::uint64_t>(static_cast<std::uint32_t>(row)) << 32) |
      static_cast<std::uint32_t>(col));
}

std::vector<int> GeoGrid::candidates(const GeoPoint& p) const {
  const double lat = deg2rad(p.lat);
  const double lon = deg2rad(p.lon);
  const auto row = static_cast<std::int64_t>(std::floor((lat + kPi) / dphi_));
  std::int64_t col = 0;
  if (!single_col_) {
    col = static_cast<std::int64_t>(std::floor((lon + kPi) / dlam_));
    col = ((col % n_cols_) + n_cols_) % n_cols_;
  }

  std::vector<int> out;
  for (std::int64_t dr = -1; dr <= 1; ++dr) {
    for (std::int64_t dc = -1; dc <= 1; ++dc) {
      const std::int64_t cc =
          single_col_ ? 0 : (((col + dc) % n_cols_) + n_cols_) % n_cols_;
      const auto key = static_cast<std::int64_t>(
          (static_cast<std::uint64_t>(static_cast<std::uint32_t>(row + dr))
           << 32) |
          static_cast<std::uint32_t>(cc));
      auto it = cells_.find(key);
      if (it == cells_.end()) continue;
      out.insert(out.end(), it->second.begin(), it->second.end());
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

// ---- DBSCAN ----------------------------------------------------------------

namespace {

std::vector<int> eps_neighbors(const GeoGrid& grid,
                               std::span<const GeoPoint> pts, int i,
                               double eps_m) {
  std::vector<int> out;
  for (int j : grid.candidates(pts[i])) {
    if (haversine(pts[i], pts[j]) <= eps_m) out.push_back(j);
  }
  return out;  // grid candidates are sorted, so this is too
}

}  // namespace

Clustering dbscan(std::span<const GeoPoint> points, const DbscanParams& params) {
  const int n = static_cast<int>(points.size());
  constexpr int kUndef = -2;
  Clustering result;
  result.labels.assign(n, kUndef);
  result.core.assign(n, false);

  const GeoGrid grid(points, params.eps_m);
  int next_id = 0;

  for (int i = 0; i < n; ++i) {
    if (result.labels[i] != kUndef) continue;
    auto neighbors = eps_neighbors(grid, points, i, params.eps_m);
    if (static_cast<int>(neighbors.size()) < params.min_points) {
      result.labels[i] = Clustering::kNoiseLabel;
      continue;
    }
    const int cid = next_id++;
    result.labels[i] = cid;
    result.core[i] = true;

    std::deque<int> seeds(neighbors.begin(), neighbors.end());
    while (!seeds.empty()) {
      const int q = seeds.front();
      seeds.pop_front();
      if (result.labels[q] == Clustering::kNoiseLabel)
        result.labels[q] = cid;  // border point, claimed by this cluster
      if (result.labels[q] != kUndef) continue;
      result.labels[q] = cid;
      auto nq = eps_neighbors(grid, points, q, params.eps_m);
      if (static_cast<int>(nq.size()) >= params.min_points) {
        result.core[q] = true;
        seeds.insert(seeds.end(), nq.begin(), nq.end());
      }
    }
  }

  result.clusters.resize(next_id);
  for (int c = 0; c < next_id; ++c) result.clusters[c].id = c;
  for (int i = 0; i < n; ++i) {
    if (result.labels[i] == Clustering::kNoiseLabel)
      result.noise.push_back(i);
    else
      result.clusters[result.labels[i]].members.push_back(i);
  }
  return result;
}

// ---- Parameter estimation --------------------------------------------------

DbscanParams estimate_params(std::span<const GeoPoint> points, int k) {
  const int n = static_cast<int>(points.size());
  if (k < 1) throw ConfigError("estimate_params: k must be >= 1");
  if (n <= k)
    throw InsufficientDataError("estimate_params: need more than k=" +
                                std::to_string(k) + " points, got " +
                                std::to_string(n));

  // k-distance of each point: distance to its k-th nearest other point.
  std::vector<double> kdist(n);
  std::vector<double> row(n - 1);
  for (int i = 0; i < n; ++i) {
    int m = 0;
    for (int j = 0; j < n; ++j)
      if (j != i) row[m++] = haversine(points[i], points[j]);
    std::nth_element(row.begin(), row.begin() + (k - 1), row.end());
    kdist[i] = row[k - 1];
  }
  std::sort(kdist.begin(), kdist.end());

  const double lo = kdist.front(), hi = kdist.back();
  if (hi <= lo) return {std::max(lo, 1e-9), k};  // flat curve

  // Knee: max distance to the chord of the normalized curve. The chord of
  // the [0,1]x[0,1] curve runs (0,0)->(1,1); distance is |y - x| / sqrt 2,
  // so maximize |y - x|. First maximum wins = smallest eps.
  int best = 0;
  double best_dev = -1.0;
  for (int i = 0; i < n; ++i) {
    const double x = n == 1 ? 0.0 : double(i) / (n - 1);
    const double y = (kdist[i] - lo) / (hi - lo);
    const double dev = std::abs(y - x);
    if (dev > best_dev) {
      best_dev = dev;
      best = i;
    }
  }
  return {kdist[best], k};
}

GeoPoint centroid(std::span<const int> members, std::span<const GeoPoint> points) {
  if (members.empty()) throw Error("centroid of empty cluster");
  double lat = 0.0, lon = 0.0;
  for (int i : members) {
    lat += points[i].lat;
    lon += points[i].lon;
  }
  const double n = static_cast<double>(members.size());
  return {lat / n, lon / n};
}

GeoPoint centroid(std::span<const GeoPoint> points) {
  if (points.empty()) throw Error("centroid of empty cluster");
  double lat = 0.0, lon = 0.0;
  for (const auto& p : points) {
    lat += p.lat;
    lon += p.lon;
  }
  const double n = static_cast<double>(points.size());
  return {lat / n, lon / n};
}

std::vector<GeoPoint> convex_hull(std::vector<GeoPoint> pts) {
  auto cmp = [](const GeoPoint& a, const GeoPoint& b) {
    return a.lon < b.lon || (a.lon == b.lon && a.lat < b.lat);
  };
  std::sort(pts.begin(), pts.end(), cmp);
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  const int n = static_cast<int>(pts.size());
  if (n <= 2) return pts;

  auto cross = [](const GeoPoint& o, const GeoPoint& a, const GeoPoint& b) {
    return (a.lon - o.lon) * (b.lat - o.lat) - (a.lat - o.lat) * (b.lon - o.lon);
  };
  std::vector<GeoPoint> hull(2 * n);
  int h = 0;
  for (int i = 0; i < n; ++i) {  // lower
    while (h >= 2 && cross(hull[h - 2], hull[h - 1], pts[i]) <= 0) --h;
    hull[h++] = pts[i];
  }
  for (int i = n - 2, base = h + 1; i >= 0; --i) {  // upper
    while (h >= base && cross(hull[h - 2], hull[h - 1], pts[i]) <= 0) --h;
    hull[h++] = pts[i];
  }
  hull.resize(h - 1);
  return hull;
}

}  // namespace geopulse
