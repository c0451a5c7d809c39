#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "geopulse/types.hpp"

namespace geopulse {

// ---- Civil calendar helpers (proleptic Gregorian) --------------------------

/// Days since 1970-01-01 for a civil date.
std::int64_t days_from_civil(int y, int m, int d);

/// Inverse of days_from_civil.
CivilDate civil_from_days(std::int64_t z);

bool is_leap_year(int y);
int days_in_month(int y, int m);

/// 0 = Monday .. 6 = Sunday for a day count since 1970-01-01 (a Thursday).
int weekday_from_days(std::int64_t z);

struct LocalTime {
  CivilDate date;
  int hour = 0;
  int minute = 0;
  int second = 0;
  int weekday = 0;            // 0 = Monday
  std::int32_t offset_s = 0;  // UTC offset in effect
};

// ---- POSIX TZ rule (the TZif footer), e.g. "EST5EDT,M3.2.0,M11.1.0" --------

struct PosixTransitionRule {
  enum class Kind { MonthWeekDay, JulianNoLeap, JulianWithLeap } kind =
      Kind::MonthWeekDay;
  int month = 0, week = 0, day = 0;  // M form
  int julian_day = 0;                // J / plain form
  int time_s = 2 * 3600;             // local wall clock seconds
};

struct PosixTz {
  std::int32_t std_offset_s = 0;  // seconds east of UTC
  std::int32_t dst_offset_s = 0;
  bool has_dst = false;
  PosixTransitionRule dst_start;  // valid when has_dst
  PosixTransitionRule dst_end;

  static std::optional<PosixTz> parse(const std::string& s);
  /// UTC offset in effect at a UTC instant.
  std::int32_t offset_at(std::int64_t epoch_s) const;
};

/// IANA time zone loaded from the system TZif database. Immutable after
/// load; offset lookups past the compiled transitions fall through to the
/// POSIX rule in the file footer (slim tzdata ships most modern years that
/// way).
class TimeZone {
 public:
  /// Throws ConfigError for an unknown or unparseable zone id.
  static TimeZone load(const std::string& iana_id);

  const std::string& id() const { return id_; }

  std::int32_t offset_at(std::int64_t epoch_s) const;
  LocalTime to_local(std::int64_t epoch_s) const;

  /// Civil local time -> UTC epoch. For local times that are skipped or
  /// repeated at a DST transition, resolves with the offset in effect just
  /// before the transition.
  std::int64_t from_local(const CivilDate& date, int hour, int minute,
                          int second) const;

 private:
  std::string id_;
  std::vector<std::int64_t> transitions_;  // UTC epochs, ascending
  std::vector<std::int32_t> offsets_;      // offset from transitions_[i] on
  std::int32_t first_offset_ = 0;          // before the first transition
  std::optional<PosixTz> footer_;
};

/// Half-hour slot of a local civil time: 2*hour + (minute >= 30).
TimeSlotKey slot_key(const Instant& t, const TimeZone& tz);

/// Local calendar date of an instant.
CivilDate local_date(const Instant& t, const TimeZone& tz);

/// "2015-10-10T17:45:00-04:00" style formatting at a given offset.
std::string format_rfc3339(std::int64_t epoch_s, std::int32_t offset_min);

}  // namespace geopulse
