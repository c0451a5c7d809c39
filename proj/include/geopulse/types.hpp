#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace geopulse {

struct GeoPoint {
  double lat = 0.0;  // degrees, [-90, 90]
  double lon = 0.0;  // degrees, [-180, 180]

  bool operator==(const GeoPoint&) const = default;
};

inline bool valid_lat(double lat) { return lat >= -90.0 && lat <= 90.0; }
inline bool valid_lon(double lon) { return lon >= -180.0 && lon <= 180.0; }

/// Circular analysis area.
struct Geofence {
  GeoPoint center;
  double radius_m = 0.0;

  bool operator==(const Geofence&) const = default;
};

/// A point in time: UTC epoch seconds plus the UTC offset the source
/// record carried. The offset does not affect ordering or arithmetic.
struct Instant {
  std::int64_t epoch_s = 0;
  std::int32_t offset_min = 0;

  bool operator==(const Instant&) const = default;
  auto operator<=>(const Instant& o) const { return epoch_s <=> o.epoch_s; }
};

struct Post {
  std::string id;
  Instant t;
  GeoPoint loc;
  std::string text;
  std::string author;
};

/// One of the 7x48 half-hour bins of a reference week.
/// weekday: 0 = Monday .. 6 = Sunday. slot k covers [k*30min, (k+1)*30min)
/// of local civil time.
struct TimeSlotKey {
  int weekday = 0;
  int slot = 0;

  bool operator==(const TimeSlotKey&) const = default;
  auto operator<=>(const TimeSlotKey&) const = default;
};

struct CivilDate {
  int year = 1970;
  int month = 1;  // 1..12
  int day = 1;    // 1..31

  bool operator==(const CivilDate&) const = default;
  auto operator<=>(const CivilDate&) const = default;
};

// ---- Errors ----------------------------------------------------------------
// Error carries the process exit code the CLI maps it to: 1 runtime, 2
// invalid input/config.

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
  virtual int exit_code() const { return 1; }
};

class ConfigError : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 2; }
};

class InsufficientDataError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Pattern file failed validation; `path` points at the offending field.
class PatternFormatError : public ConfigError {
 public:
  PatternFormatError(const std::string& msg, std::string path)
      : ConfigError(msg + " (at " + path + ")"), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

class PatternMissingError : public Error {
 public:
  using Error::Error;
};

}  // namespace geopulse
