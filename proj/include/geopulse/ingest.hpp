#pragma once

#include <istream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "geopulse/types.hpp"
#include "geopulse/tz.hpp"

namespace geopulse {

struct RejectRecord {
  std::size_t line_no = 0;  // 1-based
  std::string reason;
};

struct ParseResult {
  std::vector<Post> posts;
  std::vector<RejectRecord> rejects;
  std::size_t lines = 0;  // non-empty input lines seen
};

/// Strict RFC 3339 timestamp ("2015-10-10T17:45:00-04:00"); fractional
/// seconds accepted and truncated, the original UTC offset is retained.
std::optional<Instant> parse_rfc3339(const std::string& s);

/// Parse newline-delimited JSON records into Posts. Malformed lines become
/// RejectRecords and never abort the run; re-delivered ids are rejected as
/// duplicates. The zone id is validated up front (ConfigError if unknown).
ParseResult parse_posts(std::istream& in, const std::string& timezone);
ParseResult parse_posts_file(const std::string& path, const std::string& timezone);

/// Posts within fence.radius_m of fence.center (boundary inclusive),
/// input order preserved.
std::vector<Post> geofence_filter(std::vector<Post> posts, const Geofence& fence);

/// (local calendar date, weekday/slot) -> posts, civil time per `tz`.
using SlotBuckets = std::map<std::pair<CivilDate, TimeSlotKey>, std::vector<Post>>;
SlotBuckets bucket_by_slot(std::span<const Post> posts, const TimeZone& tz);

}  // namespace geopulse
