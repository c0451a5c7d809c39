#include "geopulse/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "geopulse/geo.hpp"
#include "geopulse/threads.hpp"
#include "geopulse/tz.hpp"

namespace geopulse {

namespace {

constexpr int kSlots = 48;

std::vector<double> parse_rates(const nlohmann::json& j, const std::string& what) {
  std::vector<double> rates;
  if (j.is_number()) {
    rates.assign(kSlots, j.get<double>());
  } else if (j.is_array()) {
    if (j.size() != kSlots)
      throw ConfigError(what + ": rate array must have 48 entries");
    for (const auto& v : j) {
      if (!v.is_number()) throw ConfigError(what + ": rate entries must be numbers");
      rates.push_back(v.get<double>());
    }
  } else {
    throw ConfigError(what + ": rate must be a number or an array of 48");
  }
  for (double r : rates)
    if (!(r >= 0.0) || !std::isfinite(r))
      throw ConfigError(what + ": rates must be finite and >= 0");
  return rates;
}

GeoPoint parse_point(const nlohmann::json& j, const std::string& what) {
  if (!j.is_object() || !j.contains("lat") || !j.contains("lon") ||
      !j["lat"].is_number() || !j["lon"].is_number())
    throw ConfigError(what + ": expected {\"lat\": ..., \"lon\": ...}");
  GeoPoint p{j["lat"].get<double>(), j["lon"].get<double>()};
  if (!valid_lat(p.lat) || !valid_lon(p.lon))
    throw ConfigError(what + ": coordinates out of range");
  return p;
}

}  // namespace

CityConfig city_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("city config: expected a JSON object");
  CityConfig c;

  if (j.contains("timezone")) c.timezone = j["timezone"].get<std::string>();
  if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("tokens_per_post")) c.tokens_per_post = j["tokens_per_post"].get<int>();
  if (c.tokens_per_post < 1) throw ConfigError("city config: tokens_per_post must be >= 1");

  if (!j.contains("fence")) throw ConfigError("city config: missing fence");
  c.fence.center = parse_point(j["fence"]["center"], "fence center");
  if (!j["fence"].contains("radius_m") || !j["fence"]["radius_m"].is_number())
    throw ConfigError("city config: fence needs a numeric radius_m");
  c.fence.radius_m = j["fence"]["radius_m"].get<double>();
  if (!(c.fence.radius_m > 0.0)) throw ConfigError("city config: fence radius must be > 0");

  if (j.contains("vocabularies")) {
    if (!j["vocabularies"].is_object())
      throw ConfigError("city config: vocabularies must be an object");
    for (const auto& [name, pool] : j["vocabularies"].items()) {
      if (!pool.is_array() || pool.empty())
        throw ConfigError("vocabulary '" + name + "' must be a non-empty array");
      auto& tokens = c.vocabularies[name];
      for (const auto& t : pool) tokens.push_back(t.get<std::string>());
    }
  }

  auto check_vocab = [&](const std::string& name, const std::string& what) {
    if (!c.vocabularies.count(name))
      throw ConfigError(what + ": unknown vocabulary '" + name + "'");
  };

  c.background_rate = j.contains("background_rate")
                          ? parse_rates(j["background_rate"], "background")
                          : std::vector<double>(kSlots, 0.0);
  if (j.contains("background_vocabulary"))
    c.background_vocabulary = j["background_vocabulary"].get<std::string>();
  bool background_active =
      std::any_of(c.background_rate.begin(), c.background_rate.end(),
                  [](double r) { return r > 0.0; });
  if (background_active) check_vocab(c.background_vocabulary, "background");

  if (j.contains("hotspots")) {
    if (!j["hotspots"].is_array()) throw ConfigError("city config: hotspots must be an array");
    for (const auto& h : j["hotspots"]) {
      Hotspot hot;
      if (!h.contains("id") || !h["id"].is_string() || h["id"].get<std::string>().empty())
        throw ConfigError("hotspot: missing id");
      hot.id = h["id"].get<std::string>();
      hot.center = parse_point(h["center"], "hotspot " + hot.id);
      if (h.contains("sigma_m")) hot.sigma_m = h["sigma_m"].get<double>();
      if (!(hot.sigma_m > 0.0))
        throw ConfigError("hotspot " + hot.id + ": sigma_m must be > 0");
      hot.rate = h.contains("rate") ? parse_rates(h["rate"], "hotspot " + hot.id)
                                    : std::vector<double>(kSlots, 0.0);
      if (!h.contains("vocabulary"))
        throw ConfigError("hotspot " + hot.id + ": missing vocabulary");
      hot.vocabulary = h["vocabulary"].get<std::string>();
      check_vocab(hot.vocabulary, "hotspot " + hot.id);
      for (const auto& other : c.hotspots)
        if (other.id == hot.id)
          throw ConfigError("duplicate hotspot id '" + hot.id + "'");
      c.hotspots.push_back(std::move(hot));
    }
  }
  return c;
}

CityConfig load_city_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open city config: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("city config " + path + ": " + e.what());
  }
  return city_config_from_json(j);
}

EventSpec event_spec_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("event spec: expected a JSON object");
  EventSpec e;
  if (!j.contains("id") || !j["id"].is_string() || j["id"].get<std::string>().empty())
    throw ConfigError("event spec: missing id");
  e.id = j["id"].get<std::string>();
  if (j.contains("target")) e.target = j["target"].get<std::string>();
  if (j.contains("location")) e.location = parse_point(j["location"], "event " + e.id);
  if (j.contains("sigma_m")) e.sigma_m = j["sigma_m"].get<double>();
  if (j.contains("slot_begin")) e.slot_begin = j["slot_begin"].get<int>();
  if (j.contains("slot_end")) e.slot_end = j["slot_end"].get<int>();
  if (j.contains("multiplier")) e.multiplier = j["multiplier"].get<double>();
  if (j.contains("rate")) e.rate = j["rate"].get<double>();
  if (j.contains("vocabulary")) e.vocabulary = j["vocabulary"].get<std::string>();
  return e;
}

// ---- Generation ------------------------------------------------------------

namespace {

struct DayRng {
  std::mt19937_64 rng;

  DayRng(std::uint64_t seed, const CivilDate& date, std::uint64_t salt) {
    const auto day = static_cast<std::uint64_t>(
        days_from_civil(date.year, date.month, date.day));
    std::seed_seq seq{seed, day, salt};
    rng.seed(seq);
  }

  int poisson(double lambda) {
    if (lambda <= 0.0) return 0;
    return std::poisson_distribution<int>(lambda)(rng);
  }
  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }
  double normal(double sigma) {
    return std::normal_distribution<double>(0.0, sigma)(rng);
  }
  int uniform_int(int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
  }
};

GeoPoint offset_point(const GeoPoint& center, double north_m, double east_m) {
  GeoPoint p;
  p.lat = center.lat + north_m / kMetersPerDegLat;
  const double scale = kMetersPerDegLat * std::cos(deg2rad(center.lat));
  p.lon = center.lon + (scale > 1.0 ? east_m / scale : 0.0);
  if (p.lon > 180.0) p.lon -= 360.0;
  if (p.lon < -180.0) p.lon += 360.0;
  p.lat = std::clamp(p.lat, -90.0, 90.0);
  return p;
}

/// Radial Gaussian scatter: distance |N(0, sigma)|, direction uniform. Keeps
/// the whole 3-sigma mass within 3-sigma great-circle distance of the center.
GeoPoint scatter(DayRng& rng, const GeoPoint& center, double sigma_m) {
  const double r = std::abs(rng.normal(sigma_m));
  const double theta = rng.uniform() * 2.0 * kPi;
  return offset_point(center, r * std::cos(theta), r * std::sin(theta));
}

GeoPoint uniform_in_disc(DayRng& rng, const Geofence& fence) {
  const double r = fence.radius_m * std::sqrt(rng.uniform());
  const double theta = rng.uniform() * 2.0 * kPi;
  return offset_point(fence.center, r * std::cos(theta), r * std::sin(theta));
}

std::string caption(DayRng& rng, const std::vector<std::string>& pool, int k) {
  const int n = static_cast<int>(pool.size());
  const int take = std::min(k, n);
  // partial Fisher-Yates over the pool indices
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  std::string out;
  for (int i = 0; i < take; ++i) {
    const int j = rng.uniform_int(i, n - 1);
    std::swap(idx[i], idx[j]);
    if (i) out += ' ';
    out += pool[idx[i]];
  }
  return out;
}

LabeledPost make_post(DayRng& rng, const TimeZone& tz, const CivilDate& date,
                      int slot, const GeoPoint& loc,
                      const std::vector<std::string>& pool, int tokens_per_post,
                      std::string id, std::string source, std::string label) {
  const int sec_in_slot = rng.uniform_int(0, 29 * 60 + 59);
  const int hour = slot / 2;
  const int minute = (slot % 2) * 30 + sec_in_slot / 60;
  const std::int64_t epoch = tz.from_local(date, hour, minute, sec_in_slot % 60);

  LabeledPost lp;
  lp.post.id = std::move(id);
  lp.post.t = Instant{epoch, tz.offset_at(epoch) / 60};
  lp.post.loc = loc;
  lp.post.text = caption(rng, pool, tokens_per_post);
  lp.post.author = "u" + std::to_string(rng.uniform_int(0, 996));
  lp.source = std::move(source);
  lp.label = std::move(label);
  return lp;
}

std::string date_tag(const CivilDate& d) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d%02d%02d", d.year, d.month, d.day);
  return buf;
}

void sort_by_time(std::vector<LabeledPost>& posts) {
  std::sort(posts.begin(), posts.end(), [](const LabeledPost& a, const LabeledPost& b) {
    if (a.post.t.epoch_s != b.post.t.epoch_s) return a.post.t.epoch_s < b.post.t.epoch_s;
    return a.post.id < b.post.id;
  });
}

}  // namespace

SynthDay generate_day(const CityConfig& config, const CivilDate& date) {
  const TimeZone tz = TimeZone::load(config.timezone);
  SynthDay day;
  day.date = date;
  const std::string tag = date_tag(date);

  DayRng rng(config.seed, date, 0);
  for (int slot = 0; slot < kSlots; ++slot) {
    for (std::size_t h = 0; h < config.hotspots.size(); ++h) {
      const Hotspot& hot = config.hotspots[h];
      const auto& pool = config.vocabularies.at(hot.vocabulary);
      const int n = rng.poisson(hot.rate[slot]);
      for (int k = 0; k < n; ++k) {
        const GeoPoint loc = scatter(rng, hot.center, hot.sigma_m);
        day.posts.push_back(make_post(
            rng, tz, date, slot, loc, pool, config.tokens_per_post,
            tag + "-s" + std::to_string(slot) + "-" + hot.id + "-" + std::to_string(k),
            hot.id, ""));
      }
    }
    const int nb = rng.poisson(config.background_rate[slot]);
    if (nb > 0) {
      const auto& pool = config.vocabularies.at(config.background_vocabulary);
      for (int k = 0; k < nb; ++k) {
        const GeoPoint loc = uniform_in_disc(rng, config.fence);
        day.posts.push_back(make_post(
            rng, tz, date, slot, loc, pool, config.tokens_per_post,
            tag + "-s" + std::to_string(slot) + "-bg-" + std::to_string(k), "bg", ""));
      }
    }
  }
  sort_by_time(day.posts);
  return day;
}

void plant_event(SynthDay& day, const CityConfig& config, const EventSpec& spec) {
  if (spec.slot_begin < 0 || spec.slot_end >= kSlots || spec.slot_begin > spec.slot_end)
    throw ConfigError("event " + spec.id + ": slot range out of bounds");
  if (spec.multiplier && spec.rate)
    throw ConfigError("event " + spec.id + ": give either multiplier or rate, not both");
  if (!spec.multiplier && !spec.rate)
    throw ConfigError("event " + spec.id + ": needs a multiplier or a rate");
  if (spec.multiplier && !(*spec.multiplier > 0.0))
    throw ConfigError("event " + spec.id + ": multiplier must be > 0");

  const TimeZone tz = TimeZone::load(config.timezone);
  DayRng rng(config.seed, day.date, stable_hash64(spec.id));
  const std::string tag = date_tag(day.date);

  const Hotspot* target_hotspot = nullptr;
  if (!spec.target.empty() && spec.target != "*") {
    for (const auto& h : config.hotspots)
      if (h.id == spec.target) target_hotspot = &h;
    if (!target_hotspot)
      throw ConfigError("event " + spec.id + ": unknown target '" + spec.target + "'");
  }

  const bool global = spec.target == "*";
  if (spec.target.empty() && !spec.location)
    throw ConfigError("event " + spec.id + ": needs a target or a location");

  auto slot_of = [&](const Post& p) { return slot_key(p.t, tz).slot; };
  auto in_scope = [&](const LabeledPost& lp) {
    const int s = slot_of(lp.post);
    if (s < spec.slot_begin || s > spec.slot_end) return false;
    if (global) return true;
    return target_hotspot && lp.source == target_hotspot->id;
  };

  auto claim = [&](const std::string& post_id) {
    if (std::find(day.claimed.begin(), day.claimed.end(), post_id) != day.claimed.end())
      throw ConfigError("event " + spec.id + ": post " + post_id +
                        " already claimed by another event");
    day.claimed.push_back(post_id);
  };

  std::vector<LabeledPost> added;
  if (spec.multiplier && *spec.multiplier < 1.0) {
    // thinning: keep each in-scope post with probability = multiplier
    const double keep = *spec.multiplier;
    std::vector<LabeledPost> survivors;
    survivors.reserve(day.posts.size());
    for (auto& lp : day.posts) {
      if (!in_scope(lp)) {
        survivors.push_back(std::move(lp));
        continue;
      }
      claim(lp.post.id);
      if (rng.uniform() < keep) survivors.push_back(std::move(lp));
    }
    day.posts = std::move(survivors);
  } else {
    // surge: extra Poisson posts on top of the baseline
    const std::string& vocab_name =
        !spec.vocabulary.empty() ? spec.vocabulary
        : target_hotspot         ? target_hotspot->vocabulary
                                 : config.background_vocabulary;
    if (!config.vocabularies.count(vocab_name))
      throw ConfigError("event " + spec.id + ": unknown vocabulary '" + vocab_name + "'");
    const auto& pool = config.vocabularies.at(vocab_name);

    for (int slot = spec.slot_begin; slot <= spec.slot_end; ++slot) {
      double lambda = 0.0;
      if (spec.rate) {
        lambda = *spec.rate;
      } else {
        double base = 0.0;
        if (global) {
          base = config.background_rate[slot];
          for (const auto& h : config.hotspots) base += h.rate[slot];
        } else {
          base = target_hotspot->rate[slot];
        }
        lambda = (*spec.multiplier - 1.0) * base;
      }
      const int n = rng.poisson(lambda);
      for (int k = 0; k < n; ++k) {
        GeoPoint loc;
        if (spec.location) {
          loc = scatter(rng, *spec.location, spec.sigma_m);
        } else if (target_hotspot) {
          loc = scatter(rng, target_hotspot->center, target_hotspot->sigma_m);
        } else {
          loc = uniform_in_disc(rng, config.fence);
        }
        auto lp = make_post(rng, tz, day.date, slot, loc, pool, config.tokens_per_post,
                            tag + "-s" + std::to_string(slot) + "-ev-" + spec.id +
                                "-" + std::to_string(k),
                            spec.id, spec.id);
        claim(lp.post.id);
        added.push_back(std::move(lp));
      }
    }
  }

  for (auto& lp : added) day.posts.push_back(std::move(lp));
  sort_by_time(day.posts);
}

std::string to_ndjson(const SynthDay& day, bool with_labels) {
  std::string out;
  for (const auto& lp : day.posts) {
    nlohmann::ordered_json j;
    j["id"] = lp.post.id;
    j["t"] = format_rfc3339(lp.post.t.epoch_s, lp.post.t.offset_min);
    j["lat"] = lp.post.loc.lat;
    j["lon"] = lp.post.loc.lon;
    j["text"] = lp.post.text;
    j["user"] = lp.post.author;
    if (with_labels && !lp.label.empty()) j["label"] = lp.label;
    out += j.dump();
    out += '\n';
  }
  return out;
}

}  // namespace geopulse
