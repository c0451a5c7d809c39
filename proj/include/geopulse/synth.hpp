#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "geopulse/types.hpp"

namespace geopulse {

/// One crowd magnet: a fixed spot that emits posts at a per-slot mean rate,
/// scattered around its center and captioned from one vocabulary.
struct Hotspot {
  std::string id;
  GeoPoint center;
  double sigma_m = 50.0;
  std::vector<double> rate;  // exactly 48 entries, one per half-hour slot
  std::string vocabulary;
};

struct CityConfig {
  Geofence fence;
  std::vector<Hotspot> hotspots;
  std::vector<double> background_rate;  // 48 entries
  std::string background_vocabulary;
  std::map<std::string, std::vector<std::string>> vocabularies;
  int tokens_per_post = 4;
  std::string timezone = "UTC";
  std::uint64_t seed = 0;
};

CityConfig city_config_from_json(const nlohmann::json& j);
CityConfig load_city_config(const std::string& path);

/// A scripted anomaly layered onto a generated day.
///
/// target selects the scope: a hotspot id, "*" for the whole city, or empty
/// with `location` set for an event at a fresh spot. Give either `multiplier`
/// (scales the baseline; > 1 adds labeled posts, < 1 thins existing ones) or
/// `rate` (absolute extra posts per slot).
struct EventSpec {
  std::string id;
  std::string target;
  std::optional<GeoPoint> location;
  double sigma_m = 50.0;
  int slot_begin = 0;
  int slot_end = 47;  // inclusive
  std::optional<double> multiplier;
  std::optional<double> rate;
  std::string vocabulary;
};

EventSpec event_spec_from_json(const nlohmann::json& j);

struct LabeledPost {
  Post post;
  std::string source;  // hotspot id, "bg", or the planting event id
  std::string label;   // empty for baseline posts
};

struct SynthDay {
  CivilDate date;
  std::vector<LabeledPost> posts;  // time-ordered
  // post ids already claimed by an event spec; a second spec touching any of
  // them is a scripting error
  std::vector<std::string> claimed;
};

/// Baseline day: per slot and per hotspot, Poisson-many posts with radial
/// Gaussian scatter; background posts uniform over the fence disc.
/// Deterministic for a given (config, date).
SynthDay generate_day(const CityConfig& config, const CivilDate& date);

void plant_event(SynthDay& day, const CityConfig& config, const EventSpec& spec);

/// NDJSON in the ingest input shape; `with_labels` adds a "label" field to
/// event posts (ingest ignores it, oracles read it).
std::string to_ndjson(const SynthDay& day, bool with_labels = false);

}  // namespace geopulse
