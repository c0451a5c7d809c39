#include "geopulse/ingest.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "geopulse/geo.hpp"

namespace geopulse {

namespace {

bool digits(const std::string& s, std::size_t pos, int n) {
  if (pos + n > s.size()) return false;
  for (int i = 0; i < n; ++i)
    if (!std::isdigit(static_cast<unsigned char>(s[pos + i]))) return false;
  return true;
}

int num(const std::string& s, std::size_t pos, int n) {
  int v = 0;
  for (int i = 0; i < n; ++i) v = v * 10 + (s[pos + i] - '0');
  return v;
}

}  // namespace

std::optional<Instant> parse_rfc3339(const std::string& s) {
  // YYYY-MM-DD 'T' hh:mm:ss[.frac] (Z | +hh:mm | -hh:mm)
  if (s.size() < 20) return std::nullopt;
  if (!digits(s, 0, 4) || s[4] != '-' || !digits(s, 5, 2) || s[7] != '-' ||
      !digits(s, 8, 2))
    return std::nullopt;
  if (s[10] != 'T' && s[10] != 't' && s[10] != ' ') return std::nullopt;
  if (!digits(s, 11, 2) || s[13] != ':' || !digits(s, 14, 2) || s[16] != ':' ||
      !digits(s, 17, 2))
    return std::nullopt;

  const int year = num(s, 0, 4), month = num(s, 5, 2), day = num(s, 8, 2);
  const int hour = num(s, 11, 2), minute = num(s, 14, 2), second = num(s, 17, 2);
  if (month < 1 || month > 12 || day < 1 || day > days_in_month(year, month))
    return std::nullopt;
  if (hour > 23 || minute > 59 || second > 60) return std::nullopt;

  std::size_t pos = 19;
  if (pos < s.size() && s[pos] == '.') {
    ++pos;
    if (pos >= s.size() || !std::isdigit(static_cast<unsigned char>(s[pos])))
      return std::nullopt;
    while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos])))
      ++pos;  // fractional seconds truncated
  }
  if (pos >= s.size()) return std::nullopt;

  std::int32_t offset_min = 0;
  const char c = s[pos];
  if (c == 'Z' || c == 'z') {
    if (pos + 1 != s.size()) return std::nullopt;
  } else if (c == '+' || c == '-') {
    if (pos + 6 != s.size() || !digits(s, pos + 1, 2) || s[pos + 3] != ':' ||
        !digits(s, pos + 4, 2))
      return std::nullopt;
    const int oh = num(s, pos + 1, 2), om = num(s, pos + 4, 2);
    if (oh > 23 || om > 59) return std::nullopt;
    offset_min = (oh * 60 + om) * (c == '-' ? -1 : 1);
  } else {
    return std::nullopt;
  }

  // second == 60 (leap second) folds into the next minute.
  const std::int64_t epoch = days_from_civil(year, month, day) * 86400 +
                             hour * 3600 + minute * 60 + second -
                             std::int64_t(offset_min) * 60;
  return Instant{epoch, offset_min};
}

ParseResult parse_posts(std::istream& in, const std::string& timezone) {
  TimeZone::load(timezone);  // fail fast on a bad zone id

  ParseResult result;
  std::unordered_set<std::string> seen_ids;
  std::string line;
  std::size_t line_no = 0;

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++result.lines;

    auto reject = [&](const std::string& reason) {
      result.rejects.push_back({line_no, reason});
    };

    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      reject("invalid json");
      continue;
    }

    if (!j.contains("id") || !j["id"].is_string()) {
      reject("missing id");
      continue;
    }
    Post p;
    p.id = j["id"].get<std::string>();
    if (p.id.empty()) {
      reject("empty id");
      continue;
    }
    if (seen_ids.contains(p.id)) {
      reject("duplicate");
      continue;
    }
    if (!j.contains("t") || !j["t"].is_string()) {
      reject("missing t");
      continue;
    }
    auto t = parse_rfc3339(j["t"].get<std::string>());
    if (!t) {
      reject("bad t: not RFC 3339");
      continue;
    }
    p.t = *t;
    if (!j.contains("lat") || !j["lat"].is_number()) {
      reject("missing lat");
      continue;
    }
    if (!j.contains("lon") || !j["lon"].is_number()) {
      reject("missing lon");
      continue;
    }
    p.loc.lat = j["lat"].get<double>();
    p.loc.lon = j["lon"].get<double>();
    if (!valid_lat(p.loc.lat)) {
      reject("lat out of range");
      continue;
    }
    if (!valid_lon(p.loc.lon)) {
      reject("lon out of range");
      continue;
    }
    if (j.contains("text")) {
      if (!j["text"].is_string()) {
        reject("text not a string");
        continue;
      }
      p.text = j["text"].get<std::string>();
    }
    if (j.contains("user")) {
      if (!j["user"].is_string()) {
        reject("user not a string");
        continue;
      }
      p.author = j["user"].get<std::string>();
    }

    seen_ids.insert(p.id);
    result.posts.push_back(std::move(p));
  }
  return result;
}

ParseResult parse_posts_file(const std::string& path, const std::string& timezone) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open input file: " + path);
  return parse_posts(f, timezone);
}

std::vector<Post> geofence_filter(std::vector<Post> posts, const Geofence& fence) {
  if (!(fence.radius_m > 0.0) || !std::isfinite(fence.radius_m))
    throw ConfigError("geofence radius must be finite and positive");
  std::erase_if(posts, [&](const Post& p) {
    return haversine(p.loc, fence.center) > fence.radius_m;
  });
  return posts;
}

SlotBuckets bucket_by_slot(std::span<const Post> posts, const TimeZone& tz) {
  SlotBuckets buckets;
  for (const Post& p : posts) {
    const LocalTime lt = tz.to_local(p.t.epoch_s);
    const TimeSlotKey key{lt.weekday, lt.hour * 2 + (lt.minute >= 30 ? 1 : 0)};
    buckets[{lt.date, key}].push_back(p);
  }
  return buckets;
}

}  // namespace geopulse
