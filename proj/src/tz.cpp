#include "geopulse/tz.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace geopulse {

// Howard Hinnant's chrono-compatible civil arithmetic.
std::int64_t days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

CivilDate civil_from_days(std::int64_t z) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp + (mp < 10 ? 3 : -9);
  return CivilDate{static_cast<int>(y + (m <= 2)), static_cast<int>(m),
                   static_cast<int>(d)};
}

bool is_leap_year(int y) {
  return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
}

int days_in_month(int y, int m) {
  static const int days[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  if (m == 2 && is_leap_year(y)) return 29;
  return days[m - 1];
}

int weekday_from_days(std::int64_t z) {
  // 1970-01-01 was a Thursday (index 3 with Monday = 0).
  return static_cast<int>(((z % 7) + 7 + 3) % 7);
}

// ---- POSIX TZ string -------------------------------------------------------

namespace {

// Parses [+-]hh[:mm[:ss]]; returns seconds, or nullopt on malformed input.
std::optional<int> parse_hms(const char*& p, bool allow_large_hours) {
  int sign = 1;
  if (*p == '+') {
    ++p;
  } else if (*p == '-') {
    sign = -1;
    ++p;
  }
  if (!std::isdigit(static_cast<unsigned char>(*p))) return std::nullopt;
  int h = 0;
  while (std::isdigit(static_cast<unsigned char>(*p))) h = h * 10 + (*p++ - '0');
  if (h > (allow_large_hours ? 167 : 24)) return std::nullopt;
  int m = 0, s = 0;
  if (*p == ':') {
    ++p;
    if (!std::isdigit(static_cast<unsigned char>(*p))) return std::nullopt;
    while (std::isdigit(static_cast<unsigned char>(*p)))
      m = m * 10 + (*p++ - '0');
    if (m > 59) return std::nullopt;
    if (*p == ':') {
      ++p;
      if (!std::isdigit(static_cast<unsigned char>(*p))) return std::nullopt;
      while (std::isdigit(static_cast<unsigned char>(*p)))
        s = s * 10 + (*p++ - '0');
      if (s > 59) return std::nullopt;
    }
  }
  return sign * (h * 3600 + m * 60 + s);
}

bool skip_name(const char*& p) {
  if (*p == '<') {
    const char* e = std::strchr(p + 1, '>');
    if (!e) return false;
    p = e + 1;
    return true;
  }
  int n = 0;
  while (std::isalpha(static_cast<unsigned char>(*p))) {
    ++p;
    ++n;
  }
  return n >= 3;
}

std::optional<PosixTransitionRule> parse_rule(const char*& p) {
  PosixTransitionRule r;
  if (*p == 'M') {
    ++p;
    r.kind = PosixTransitionRule::Kind::MonthWeekDay;
    int vals[3];
    for (int i = 0; i < 3; ++i) {
      if (!std::isdigit(static_cast<unsigned char>(*p))) return std::nullopt;
      int v = 0;
      while (std::isdigit(static_cast<unsigned char>(*p)))
        v = v * 10 + (*p++ - '0');
      vals[i] = v;
      if (i < 2 && *p++ != '.') return std::nullopt;
    }
    r.month = vals[0];
    r.week = vals[1];
    r.day = vals[2];
    if (r.month < 1 || r.month > 12 || r.week < 1 || r.week > 5 || r.day > 6)
      return std::nullopt;
  } else if (*p == 'J') {
    ++p;
    r.kind = PosixTransitionRule::Kind::JulianNoLeap;
    int v = 0;
    if (!std::isdigit(static_cast<unsigned char>(*p))) return std::nullopt;
    while (std::isdigit(static_cast<unsigned char>(*p)))
      v = v * 10 + (*p++ - '0');
    if (v < 1 || v > 365) return std::nullopt;
    r.julian_day = v;
  } else if (std::isdigit(static_cast<unsigned char>(*p))) {
    r.kind = PosixTransitionRule::Kind::JulianWithLeap;
    int v = 0;
    while (std::isdigit(static_cast<unsigned char>(*p)))
      v = v * 10 + (*p++ - '0');
    if (v > 365) return std::nullopt;
    r.julian_day = v;
  } else {
    return std::nullopt;
  }
  if (*p == '/') {
    ++p;
    auto t = parse_hms(p, true);
    if (!t) return std::nullopt;
    r.time_s = *t;
  }
  return r;
}

// Day count (since epoch) on which a rule fires in a given year.
std::int64_t rule_day(const PosixTransitionRule& r, int year) {
  switch (r.kind) {
    case PosixTransitionRule::Kind::JulianNoLeap: {
      int day = r.julian_day;  // 1..365, Feb 29 never counted
      if (is_leap_year(year) && day >= 60) ++day;
      return days_from_civil(year, 1, 1) + day - 1;
    }
    case PosixTransitionRule::Kind::JulianWithLeap:
      return days_from_civil(year, 1, 1) + r.julian_day;
    case PosixTransitionRule::Kind::MonthWeekDay: {
      // day-of-week r.day (0 = Sunday) of week r.week (5 = last) in r.month.
      const std::int64_t first = days_from_civil(year, r.month, 1);
      const int first_wd_sun0 = (weekday_from_days(first) + 1) % 7;
      int day = 1 + ((r.day - first_wd_sun0) % 7 + 7) % 7 + (r.week - 1) * 7;
      const int dim = days_in_month(year, r.month);
      while (day > dim) day -= 7;
      return days_from_civil(year, r.month, day);
    }
  }
  return 0;
}

}  // namespace

std::optional<PosixTz> PosixTz::parse(const std::string& s) {
  if (s.empty()) return std::nullopt;
  const char* p = s.c_str();
  PosixTz tz;
  if (!skip_name(p)) return std::nullopt;
  auto std_off = parse_hms(p, true);
  if (!std_off) return std::nullopt;
  tz.std_offset_s = -*std_off;  // POSIX counts west as positive
  if (*p == '\0') return tz;
  if (!skip_name(p)) return std::nullopt;
  tz.has_dst = true;
  if (*p != ',' && *p != '\0') {
    auto dst_off = parse_hms(p, true);
    if (!dst_off) return std::nullopt;
    tz.dst_offset_s = -*dst_off;
  } else {
    tz.dst_offset_s = tz.std_offset_s + 3600;
  }
  if (*p == '\0') {
    // DST named but no rule; treat as permanent standard time.
    tz.has_dst = false;
    return tz;
  }
  if (*p++ != ',') return std::nullopt;
  auto start = parse_rule(p);
  if (!start || *p++ != ',') return std::nullopt;
  auto end = parse_rule(p);
  if (!end || *p != '\0') return std::nullopt;
  tz.dst_start = *start;
  tz.dst_end = *end;
  return tz;
}

std::int32_t PosixTz::offset_at(std::int64_t epoch_s) const {
  if (!has_dst) return std_offset_s;
  // Year taken from standard-time local clock; rules near New Year are
  // handled by the wrap-around (southern hemisphere) branch.
  const int year =
      civil_from_days((epoch_s + std_offset_s) / 86400 -
                      ((epoch_s + std_offset_s) % 86400 < 0 ? 1 : 0))
          .year;
  const std::int64_t start_utc =
      rule_day(dst_start, year) * 86400 + dst_start.time_s - std_offset_s;
  const std::int64_t end_utc =
      rule_day(dst_end, year) * 86400 + dst_end.time_s - dst_offset_s;
  bool dst;
  if (start_utc <= end_utc)
    dst = epoch_s >= start_utc && epoch_s < end_utc;
  else
    dst = epoch_s >= start_utc || epoch_s < end_utc;
  return dst ? dst_offset_s : std_offset_s;
}

// ---- TZif ------------------------------------------------------------------

namespace {

struct Cursor {
  const unsigned char* p;
  const unsigned char* end;

  bool need(std::size_t n) const { return static_cast<std::size_t>(end - p) >= n; }
  std::uint32_t u32() {
    std::uint32_t v = (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
                      (std::uint32_t(p[2]) << 8) | p[3];
    p += 4;
    return v;
  }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  std::int64_t i64() {
    std::uint64_t hi = u32();
    std::uint64_t lo = u32();
    return static_cast<std::int64_t>((hi << 32) | lo);
  }
  std::uint8_t u8() { return *p++; }
};

bool valid_zone_id(const std::string& id) {
  // Reject path escapes before touching the filesystem.
  if (id.empty() || id[0] == '/' || id.find("..") != std::string::npos)
    return false;
  return std::all_of(id.begin(), id.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '/' ||
           c == '_' || c == '-' || c == '+';
  });
}

}  // namespace

TimeZone TimeZone::load(const std::string& iana_id) {
  if (!valid_zone_id(iana_id))
    throw ConfigError("invalid time zone id: '" + iana_id + "'");

  TimeZone tz;
  tz.id_ = iana_id;

  std::ifstream f("/usr/share/zoneinfo/" + iana_id, std::ios::binary);
  if (!f) {
    if (iana_id == "UTC" || iana_id == "Etc/UTC") return tz;  // zero offset
    throw ConfigError("unknown time zone id: '" + iana_id + "'");
  }
  std::string data((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());

  Cursor c{reinterpret_cast<const unsigned char*>(data.data()),
           reinterpret_cast<const unsigned char*>(data.data()) + data.size()};

  auto parse_block = [&](int time_size, bool keep) -> bool {
    if (!c.need(44) || std::memcmp(c.p, "TZif", 4) != 0) return false;
    c.p += 20;  // magic, version, reserved
    const std::uint32_t isutcnt = c.u32(), isstdcnt = c.u32(),
                        leapcnt = c.u32(), timecnt = c.u32(),
                        typecnt = c.u32(), charcnt = c.u32();
    const std::size_t body = std::size_t(timecnt) * (time_size + 1) +
                             std::size_t(typecnt) * 6 + charcnt +
                             std::size_t(leapcnt) * (time_size + 4) + isstdcnt +
                             isutcnt;
    if (!c.need(body) || typecnt == 0) return false;

    std::vector<std::int64_t> times(timecnt);
    for (auto& t : times) t = (time_size == 8) ? c.i64() : c.i32();
    std::vector<std::uint8_t> type_idx(timecnt);
    for (auto& i : type_idx) {
      i = c.u8();
      if (i >= typecnt) return false;
    }
    std::vector<std::int32_t> utoff(typecnt);
    std::vector<std::uint8_t> isdst(typecnt);
    for (std::uint32_t i = 0; i < typecnt; ++i) {
      utoff[i] = c.i32();
      isdst[i] = c.u8();
      c.u8();  // abbreviation index, unused
    }
    c.p += charcnt + std::size_t(leapcnt) * (time_size + 4) + isstdcnt + isutcnt;

    if (keep) {
      tz.transitions_ = std::move(times);
      tz.offsets_.resize(timecnt);
      for (std::uint32_t i = 0; i < timecnt; ++i)
        tz.offsets_[i] = utoff[type_idx[i]];
      // Offset before the first transition: first standard-time type.
      tz.first_offset_ = utoff[0];
      for (std::uint32_t i = 0; i < typecnt; ++i)
        if (!isdst[i]) {
          tz.first_offset_ = utoff[i];
          break;
        }
    }
    return true;
  };

  // v1 header/block first; v2+ repeats with 64-bit times plus a footer.
  if (!c.need(5) || std::memcmp(c.p, "TZif", 4) != 0)
    throw ConfigError("not a TZif file: '" + iana_id + "'");
  const char version = static_cast<char>(c.p[4]);

  if (version == '\0') {
    if (!parse_block(4, true))
      throw ConfigError("malformed TZif file: '" + iana_id + "'");
  } else {
    if (!parse_block(4, false) || !parse_block(8, true))
      throw ConfigError("malformed TZif file: '" + iana_id + "'");
    // Footer: '\n' TZ-string '\n'
    if (c.need(2) && *c.p == '\n') {
      const char* s = reinterpret_cast<const char*>(c.p) + 1;
      const char* e = static_cast<const char*>(memchr(s, '\n', c.end - c.p - 1));
      if (e && e > s) tz.footer_ = PosixTz::parse(std::string(s, e));
    }
  }
  return tz;
}

std::int32_t TimeZone::offset_at(std::int64_t epoch_s) const {
  if (transitions_.empty() || epoch_s < transitions_.front()) {
    if (transitions_.empty() && footer_) return footer_->offset_at(epoch_s);
    return first_offset_;
  }
  if (epoch_s >= transitions_.back() && footer_)
    return footer_->offset_at(epoch_s);
  auto it = std::upper_bound(transitions_.begin(), transitions_.end(), epoch_s);
  return offsets_[(it - transitions_.begin()) - 1];
}

LocalTime TimeZone::to_local(std::int64_t epoch_s) const {
  LocalTime lt;
  lt.offset_s = offset_at(epoch_s);
  const std::int64_t local = epoch_s + lt.offset_s;
  std::int64_t days = local / 86400;
  std::int64_t sod = local % 86400;
  if (sod < 0) {
    sod += 86400;
    --days;
  }
  lt.date = civil_from_days(days);
  lt.weekday = weekday_from_days(days);
  lt.hour = static_cast<int>(sod / 3600);
  lt.minute = static_cast<int>((sod % 3600) / 60);
  lt.second = static_cast<int>(sod % 60);
  return lt;
}

std::int64_t TimeZone::from_local(const CivilDate& date, int hour, int minute,
                                  int second) const {
  const std::int64_t civil =
      days_from_civil(date.year, date.month, date.day) * 86400 + hour * 3600 +
      minute * 60 + second;
  std::int64_t t = civil - offset_at(civil);
  t = civil - offset_at(t);
  return civil - offset_at(t);
}

TimeSlotKey slot_key(const Instant& t, const TimeZone& tz) {
  const LocalTime lt = tz.to_local(t.epoch_s);
  return TimeSlotKey{lt.weekday, lt.hour * 2 + (lt.minute >= 30 ? 1 : 0)};
}

CivilDate local_date(const Instant& t, const TimeZone& tz) {
  return tz.to_local(t.epoch_s).date;
}

std::string format_rfc3339(std::int64_t epoch_s, std::int32_t offset_min) {
  const std::int64_t local = epoch_s + std::int64_t(offset_min) * 60;
  std::int64_t days = local / 86400;
  std::int64_t sod = local % 86400;
  if (sod < 0) {
    sod += 86400;
    --days;
  }
  const CivilDate d = civil_from_days(days);
  char buf[40];
  if (offset_min == 0) {
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02dZ", d.year,
                  d.month, d.day, int(sod / 3600), int((sod % 3600) / 60),
                  int(sod % 60));
  } else {
    const int am = offset_min < 0 ? -offset_min : offset_min;
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d%c%02d:%02d",
                  d.year, d.month, d.day, int(sod / 3600),
                  int((sod % 3600) / 60), int(sod % 60),
                  offset_min < 0 ? '-' : '+', am / 60, am % 60);
  }
  return buf;
}

}  // namespace geopulse
