#pragma once

// Shared builders for the test corpora.

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "geopulse/geo.hpp"
#include "geopulse/types.hpp"

namespace helpers {

inline geopulse::GeoPoint offset_m(const geopulse::GeoPoint& center, double north_m,
                                   double east_m) {
  geopulse::GeoPoint p;
  p.lat = center.lat + north_m / geopulse::kMetersPerDegLat;
  p.lon = center.lon +
          east_m / (geopulse::kMetersPerDegLat * std::cos(geopulse::deg2rad(center.lat)));
  return p;
}

/// Gaussian blob of n points around the center, axis sigma in meters.
inline std::vector<geopulse::GeoPoint> blob(std::mt19937_64& rng,
                                            const geopulse::GeoPoint& center,
                                            double sigma_m, int n) {
  std::normal_distribution<double> d(0.0, sigma_m);
  std::vector<geopulse::GeoPoint> pts;
  pts.reserve(n);
  for (int i = 0; i < n; ++i) pts.push_back(offset_m(center, d(rng), d(rng)));
  return pts;
}

/// n points uniform over a radius_m disc around the center.
inline std::vector<geopulse::GeoPoint> disc(std::mt19937_64& rng,
                                            const geopulse::GeoPoint& center,
                                            double radius_m, int n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<geopulse::GeoPoint> pts;
  pts.reserve(n);
  for (int i = 0; i < n; ++i) {
    const double r = radius_m * std::sqrt(u(rng));
    const double theta = 2.0 * geopulse::kPi * u(rng);
    pts.push_back(offset_m(center, r * std::cos(theta), r * std::sin(theta)));
  }
  return pts;
}

/// Caption of `take` distinct tokens sampled from a themed pool.
inline std::string caption(std::mt19937_64& rng, const std::vector<std::string>& pool,
                           int take) {
  std::vector<int> idx(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) idx[i] = static_cast<int>(i);
  std::string out;
  const int n = std::min<int>(take, static_cast<int>(pool.size()));
  for (int i = 0; i < n; ++i) {
    std::uniform_int_distribution<int> pick(i, static_cast<int>(pool.size()) - 1);
    std::swap(idx[i], idx[pick(rng)]);
    if (i) out += ' ';
    out += pool[idx[i]];
  }
  return out;
}

/// Numbered token pool ("w0" .. "w<n-1>") with a distinguishing prefix.
inline std::vector<std::string> pool(const std::string& prefix, int n) {
  std::vector<std::string> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

inline geopulse::Post make_post(std::string id, std::int64_t epoch_s,
                                const geopulse::GeoPoint& loc, std::string text) {
  geopulse::Post p;
  p.id = std::move(id);
  p.t = geopulse::Instant{epoch_s, 0};
  p.loc = loc;
  p.text = std::move(text);
  return p;
}

}  // namespace helpers
