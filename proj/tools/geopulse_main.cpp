// geopulse: train a city's crowd pattern from geo-tagged posts, flag
// anomalous crowds on live days, aggregate post text into threads, and rank
// the threads by geographic concentration.
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include <nlohmann/json.hpp>

#include "geopulse/detect.hpp"
#include "geopulse/geo.hpp"
#include "geopulse/ingest.hpp"
#include "geopulse/pattern.hpp"
#include "geopulse/rank.hpp"
#include "geopulse/synth.hpp"
#include "geopulse/threads.hpp"
#include "geopulse/tz.hpp"
#include "geopulse/types.hpp"

namespace fs = std::filesystem;
using namespace geopulse;

namespace {

struct RunOptions {
  std::string timezone = "UTC";
  std::optional<Geofence> fence;
  std::optional<double> eps_m;
  std::optional<int> min_points;
  std::optional<double> match_eps_m;
  int knn_k = 4;  // k for adaptive eps estimation when no override is given
  double threshold = 0.65;
  LshParams lsh;
  std::optional<std::uint64_t> seed;
  int top_k = 10;
  int jobs = 1;
};

std::uint64_t resolved_seed(const RunOptions& opt) {
  if (opt.seed) return *opt.seed;
  if (const char* env = std::getenv("GEOPULSE_SEED")) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw ConfigError("GEOPULSE_SEED is not a number");
    }
  }
  return 0;
}

void apply_config_file(RunOptions& opt, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config " + path + ": expected an object");
  if (j.contains("timezone")) opt.timezone = j["timezone"].get<std::string>();
  if (j.contains("fence")) {
    Geofence f;
    f.center.lat = j["fence"]["center"]["lat"].get<double>();
    f.center.lon = j["fence"]["center"]["lon"].get<double>();
    f.radius_m = j["fence"]["radius_m"].get<double>();
    opt.fence = f;
  }
  if (j.contains("eps_m")) opt.eps_m = j["eps_m"].get<double>();
  if (j.contains("min_points")) opt.min_points = j["min_points"].get<int>();
  if (j.contains("match_eps_m")) opt.match_eps_m = j["match_eps_m"].get<double>();
  if (j.contains("knn_k")) opt.knn_k = j["knn_k"].get<int>();
  if (j.contains("threshold")) opt.threshold = j["threshold"].get<double>();
  if (j.contains("bands")) opt.lsh.bands = j["bands"].get<int>();
  if (j.contains("rows")) opt.lsh.rows = j["rows"].get<int>();
  if (j.contains("bucket_cap")) opt.lsh.bucket_cap = j["bucket_cap"].get<int>();
  if (j.contains("window_s")) opt.lsh.window_s = j["window_s"].get<std::int64_t>();
  if (j.contains("seed")) opt.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("top_k")) opt.top_k = j["top_k"].get<int>();
}

nlohmann::ordered_json options_to_json(const RunOptions& opt) {
  nlohmann::ordered_json j;
  j["timezone"] = opt.timezone;
  if (opt.fence) {
    j["fence"]["center"]["lat"] = opt.fence->center.lat;
    j["fence"]["center"]["lon"] = opt.fence->center.lon;
    j["fence"]["radius_m"] = opt.fence->radius_m;
  }
  if (opt.eps_m) j["eps_m"] = *opt.eps_m;
  if (opt.min_points) j["min_points"] = *opt.min_points;
  if (opt.match_eps_m) j["match_eps_m"] = *opt.match_eps_m;
  j["knn_k"] = opt.knn_k;
  j["threshold"] = opt.threshold;
  j["bands"] = opt.lsh.bands;
  j["rows"] = opt.lsh.rows;
  j["bucket_cap"] = opt.lsh.bucket_cap;
  j["window_s"] = opt.lsh.window_s;
  j["seed"] = resolved_seed(opt);
  j["top_k"] = opt.top_k;
  return j;
}

void echo_config(const RunOptions& opt, const fs::path& dir) {
  std::ofstream out(dir / "run-config.json");
  out << options_to_json(opt).dump(2) << "\n";
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << content;
}

CivilDate parse_date(const std::string& s) {
  int y, m, d;
  char dash1, dash2;
  std::istringstream in(s);
  if (!(in >> y >> dash1 >> m >> dash2 >> d) || dash1 != '-' || dash2 != '-' ||
      m < 1 || m > 12 || d < 1 || d > days_in_month(y, m) || !in.eof())
    throw ConfigError("bad date '" + s + "', expected YYYY-MM-DD");
  return CivilDate{y, m, d};
}

std::string fence_str(const Geofence& f) {
  std::ostringstream out;
  out << f.center.lat << ',' << f.center.lon << " r=" << f.radius_m << "m";
  return out.str();
}

std::vector<Post> load_inputs(const std::vector<std::string>& paths,
                              const std::string& timezone) {
  std::vector<Post> all;
  std::size_t dropped = 0;
  std::vector<std::string> seen_sorted;  // cross-file duplicate guard
  for (const auto& path : paths) {
    ParseResult r = parse_posts_file(path, timezone);
    if (!r.rejects.empty()) {
      const auto& first = r.rejects.front();
      std::cerr << path << ": " << r.rejects.size() << " line(s) rejected (first: line "
                << first.line_no << ": " << first.reason << ")\n";
    }
    for (auto& p : r.posts) {
      if (std::binary_search(seen_sorted.begin(), seen_sorted.end(), p.id)) {
        ++dropped;
        continue;
      }
      all.push_back(std::move(p));
    }
    seen_sorted.clear();
    seen_sorted.reserve(all.size());
    for (const auto& p : all) seen_sorted.push_back(p.id);
    std::sort(seen_sorted.begin(), seen_sorted.end());
  }
  if (dropped > 0)
    std::cerr << "dropped " << dropped << " duplicate id(s) across inputs\n";
  return all;
}

std::string slot_name(const TimeSlotKey& key) {
  static const char* days[] = {"Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s %02d:%02d", days[key.weekday], key.slot / 2,
                (key.slot % 2) * 30);
  return buf;
}

std::string date_str(const CivilDate& d) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", d.year, d.month, d.day);
  return buf;
}

// ---- synth -----------------------------------------------------------------

int cmd_synth(const std::string& config_path, const std::string& date_s,
              std::optional<std::uint64_t> seed, const std::string& events_path,
              const std::string& out_path, bool labels) {
  CityConfig city = load_city_config(config_path);
  if (seed) city.seed = *seed;
  else if (const char* env = std::getenv("GEOPULSE_SEED"))
    city.seed = std::stoull(env);

  SynthDay day = generate_day(city, parse_date(date_s));

  if (!events_path.empty()) {
    std::ifstream in(events_path);
    if (!in) throw IoError("cannot open events file: " + events_path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("events " + events_path + ": " + e.what());
    }
    const nlohmann::json& list = j.is_array() ? j : j.at("events");
    for (const auto& spec : list) plant_event(day, city, event_spec_from_json(spec));
  }

  const std::string ndjson = to_ndjson(day, labels);
  if (out_path.empty() || out_path == "-") {
    std::cout << ndjson;
  } else {
    write_file(out_path, ndjson);
    std::cerr << "wrote " << day.posts.size() << " posts to " << out_path << "\n";
  }
  return 0;
}

// ---- train -----------------------------------------------------------------

int cmd_train(const RunOptions& opt, const std::vector<std::string>& inputs,
              const std::string& out_path) {
  if (!opt.fence) throw ConfigError("train needs a geofence (config or --fence)");
  std::vector<Post> posts = load_inputs(inputs, opt.timezone);
  posts = geofence_filter(std::move(posts), *opt.fence);
  if (posts.empty()) throw ConfigError("no posts inside the fence; nothing to train on");

  const TimeZone tz = TimeZone::load(opt.timezone);
  SlotBuckets buckets = bucket_by_slot(posts, tz);

  std::map<TimeSlotKey, std::map<CivilDate, std::vector<GeoPoint>>> by_key;
  for (const auto& [date_key, slot_posts] : buckets) {
    auto& daily = by_key[date_key.second][date_key.first];
    for (const auto& p : slot_posts) daily.push_back(p.loc);
  }

  std::vector<TimeSlotKey> keys;
  for (const auto& [key, daily] : by_key) keys.push_back(key);

  struct SlotResult {
    std::optional<SlotPattern> pattern;
    std::string diagnostic;
  };
  std::vector<SlotResult> results(keys.size());

  auto train_one = [&](std::size_t i) {
    const TimeSlotKey& key = keys[i];
    const auto& daily = by_key.at(key);
    SlotResult& res = results[i];
    if (daily.size() < 2) {
      res.diagnostic = "only " + std::to_string(daily.size()) + " day(s) of data";
      return;
    }
    std::vector<GeoPoint> all;
    for (const auto& [date, pts] : daily) all.insert(all.end(), pts.begin(), pts.end());
    try {
      DbscanParams params;
      if (opt.eps_m && opt.min_points) {
        params = {*opt.eps_m, *opt.min_points};
      } else {
        params = estimate_params(all, opt.min_points.value_or(opt.knn_k));
        if (opt.eps_m) params.eps_m = *opt.eps_m;
        if (opt.min_points) params.min_points = *opt.min_points;
      }
      const double match_eps = opt.match_eps_m.value_or(params.eps_m);
      res.pattern = train_slot(daily, key, params, match_eps);
    } catch (const InsufficientDataError& e) {
      res.diagnostic = e.what();
    }
  };

  if (opt.jobs > 1) {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    const int n_workers = std::min<int>(opt.jobs, static_cast<int>(keys.size()));
    for (int w = 0; w < n_workers; ++w)
      workers.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < keys.size(); i = next.fetch_add(1))
          train_one(i);
      });
    for (auto& t : workers) t.join();
  } else {
    for (std::size_t i = 0; i < keys.size(); ++i) train_one(i);
  }

  for (std::size_t i = 0; i < keys.size(); ++i) {
    const auto& res = results[i];
    if (res.pattern) {
      int low = 0;
      for (const auto& ref : res.pattern->references)
        if (ref.low_confidence()) ++low;
      std::cout << slot_name(keys[i]) << ": " << res.pattern->references.size()
                << " reference(s)";
      if (low) std::cout << ", " << low << " low-confidence";
      std::cout << " (eps " << res.pattern->params.eps_m << " m, minPts "
                << res.pattern->params.min_points << ")\n";
    } else {
      std::cout << slot_name(keys[i]) << ": skipped, " << res.diagnostic << "\n";
    }
  }

  CityPattern pattern;
  pattern.timezone = opt.timezone;
  pattern.geofence = *opt.fence;
  std::size_t trained = 0;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    if (results[i].pattern) {
      pattern.slots[keys[i]] = std::move(*results[i].pattern);
      ++trained;
    }
  }

  if (trained == 0)
    throw ConfigError("no slot had enough data to train (need 2+ days per slot)");

  save_pattern_file(pattern, out_path);
  std::cout << "trained " << trained << "/" << keys.size() << " slot(s), fence "
            << fence_str(*opt.fence) << ", pattern -> " << out_path << "\n";
  const fs::path dir = fs::path(out_path).parent_path();
  if (!dir.empty()) echo_config(opt, dir);
  return 0;
}

// ---- detect ----------------------------------------------------------------

struct DayRun {
  // everything computed for one (date, slot) bucket, in bucket order
  std::vector<std::pair<CivilDate, TimeSlotKey>> bucket_keys;
  std::vector<const std::vector<Post>*> bucket_posts;
  std::vector<std::optional<OutlierReport>> reports;  // nullopt = uncovered
  std::vector<Post> posts;
  SlotBuckets buckets;
};

/// Parse, fence and bucket the live posts, then run detection for every
/// bucket the pattern covers.
DayRun run_detection(const CityPattern& pattern, const std::vector<std::string>& inputs,
                     int jobs) {
  DayRun run;
  run.posts = geofence_filter(load_inputs(inputs, pattern.timezone), pattern.geofence);
  const TimeZone tz = TimeZone::load(pattern.timezone);
  run.buckets = bucket_by_slot(run.posts, tz);

  for (const auto& [key, slot_posts] : run.buckets) {
    run.bucket_keys.push_back(key);
    run.bucket_posts.push_back(&slot_posts);
  }
  run.reports.resize(run.bucket_keys.size());

  auto detect_one = [&](std::size_t i) {
    const auto& [date, key] = run.bucket_keys[i];
    const auto it = pattern.slots.find(key);
    if (it == pattern.slots.end()) return;
    run.reports[i] = detect_slot(*run.bucket_posts[i], it->second, date);
  };

  if (jobs > 1) {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    const int n = std::min<int>(jobs, static_cast<int>(run.bucket_keys.size()));
    for (int w = 0; w < n; ++w)
      workers.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < run.bucket_keys.size();
             i = next.fetch_add(1))
          detect_one(i);
      });
    for (auto& t : workers) t.join();
  } else {
    for (std::size_t i = 0; i < run.bucket_keys.size(); ++i) detect_one(i);
  }
  return run;
}

int cmd_detect(const RunOptions& opt, const std::string& pattern_path,
               const std::vector<std::string>& inputs, const std::string& out_dir) {
  const CityPattern pattern = load_pattern_file(pattern_path);
  DayRun run = run_detection(pattern, inputs, opt.jobs);

  fs::create_directories(out_dir);
  std::size_t covered = 0;
  std::map<std::string, int> class_counts;
  std::vector<std::string> uncovered;

  for (std::size_t i = 0; i < run.bucket_keys.size(); ++i) {
    const auto& [date, key] = run.bucket_keys[i];
    const std::string stem =
        "report-" + date_str(date) + "-s" + std::to_string(key.slot);
    if (!run.reports[i]) {
      uncovered.push_back(date_str(date) + " " + slot_name(key));
      continue;
    }
    ++covered;
    const OutlierReport& report = *run.reports[i];
    const auto& slot_posts = *run.bucket_posts[i];
    write_file(fs::path(out_dir) / (stem + ".json"),
               report_to_json(report, slot_posts).dump(2) + "\n");
    write_file(fs::path(out_dir) / (stem + ".geojson"),
               report_to_geojson(report, slot_posts, pattern.slots.at(key)).dump(2) + "\n");
    for (const auto& v : report.verdicts) {
      if (v.kind == VerdictKind::UnexpectedLocation)
        ++class_counts["unexpected_location"];
      else
        ++class_counts[to_string(v.cls)];
    }
    for (const auto& a : report.absent_refs) ++class_counts[to_string(a.cls)];
  }

  std::cout << run.posts.size() << " post(s) in fence, " << covered << "/"
            << run.bucket_keys.size() << " slot(s) covered by the pattern\n";
  for (const auto& [cls, n] : class_counts) std::cout << "  " << cls << ": " << n << "\n";
  if (!uncovered.empty()) {
    std::cout << "uncovered slots:\n";
    for (const auto& u : uncovered) std::cout << "  " << u << "\n";
  }
  echo_config(opt, out_dir);
  return 0;
}

// ---- threads ---------------------------------------------------------------

ThreadsPipeline run_threads(const RunOptions& opt, const std::vector<Post>& posts) {
  ThreadsConfig config;
  config.threshold = opt.threshold;
  config.lsh = opt.lsh;
  config.lsh.seed = resolved_seed(opt);
  ThreadsPipeline pipeline(config);
  for (const auto& p : posts) pipeline.process(p);
  return pipeline;
}

int cmd_threads(const RunOptions& opt, const std::vector<std::string>& inputs,
                const std::string& out_csv, const std::string& out_json) {
  const std::vector<Post> posts = load_inputs(inputs, opt.timezone);
  ThreadsPipeline pipeline = run_threads(opt, posts);

  std::size_t largest = 0;
  for (const auto& th : pipeline.threads()) largest = std::max(largest, th.size());
  std::cout << posts.size() << " post(s) -> " << pipeline.threads().size()
            << " thread(s), largest " << largest << "\n";

  if (!out_csv.empty())
    write_file(out_csv, threads_to_csv(pipeline.threads(), pipeline.post_ids()));
  if (!out_json.empty())
    write_file(out_json, threads_to_json(pipeline.threads(), pipeline.post_ids()));
  return 0;
}

// ---- rank ------------------------------------------------------------------

int cmd_rank(const RunOptions& opt, const std::string& pattern_path,
             const std::vector<std::string>& inputs, const std::string& out_dir) {
  const CityPattern pattern = load_pattern_file(pattern_path);
  DayRun run = run_detection(pattern, inputs, opt.jobs);
  ThreadsPipeline pipeline = run_threads(opt, run.posts);

  std::vector<ThreadSlotScore> scores;
  std::size_t uncovered = 0;
  for (std::size_t i = 0; i < run.bucket_keys.size(); ++i) {
    if (!run.reports[i]) {
      ++uncovered;
      continue;
    }
    auto slot_scores = score_slot(pipeline.threads(), pipeline.post_ids(),
                                  *run.reports[i], *run.bucket_posts[i]);
    scores.insert(scores.end(), slot_scores.begin(), slot_scores.end());
  }

  const auto k = static_cast<std::size_t>(std::max(opt.top_k, 0));
  const auto ranked = rank_threads(scores, pipeline.threads(), k);

  fs::create_directories(out_dir);
  write_file(fs::path(out_dir) / "relevance.csv", relevance_csv(scores));
  write_file(fs::path(out_dir) / "topk.json", topk_json(ranked));
  write_file(fs::path(out_dir) / "topk.md", topk_markdown(ranked));
  echo_config(opt, out_dir);

  std::cout << run.posts.size() << " post(s), " << pipeline.threads().size()
            << " thread(s), " << scores.size() << " slot score(s)";
  if (uncovered) std::cout << ", " << uncovered << " uncovered slot(s) skipped";
  std::cout << "\n";
  if (!ranked.empty()) {
    const auto& top = ranked.front();
    std::cout << "top thread " << top.thread << " relevance " << top.relevance
              << " size " << top.size << ": " << top.representative_text << "\n";
  }
  return 0;
}

// ---- bench -----------------------------------------------------------------

int cmd_bench(const RunOptions& opt, const std::vector<std::string>& inputs,
              int repeat) {
  const std::vector<Post> posts = load_inputs(inputs, opt.timezone);
  if (posts.empty()) throw ConfigError("bench needs a non-empty corpus");

  double best = 0.0, worst = 0.0;
  for (int r = 0; r < repeat; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    ThreadsPipeline pipeline = run_threads(opt, posts);
    const auto t1 = std::chrono::steady_clock::now();
    const double secs = std::chrono::duration<double>(t1 - t0).count();
    const double rate = static_cast<double>(posts.size()) / secs;
    std::cout << "run " << (r + 1) << ": " << posts.size() << " posts in " << secs
              << " s -> " << static_cast<std::int64_t>(rate) << " posts/s ("
              << pipeline.threads().size() << " threads)\n";
    best = r == 0 ? rate : std::max(best, rate);
    worst = r == 0 ? rate : std::min(worst, rate);
  }
  if (repeat > 1)
    std::cout << "spread: " << static_cast<std::int64_t>(100.0 * (best - worst) / best)
              << "% of peak\n";
  return 0;
}

// ---- report ----------------------------------------------------------------

int cmd_report(const std::string& dir) {
  if (!fs::is_directory(dir)) throw ConfigError("not a directory: " + dir);

  std::ostringstream md;
  md << "# Day report\n\n";

  std::vector<fs::path> report_files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (name.rfind("report-", 0) == 0 && entry.path().extension() == ".json")
      report_files.push_back(entry.path());
  }
  std::sort(report_files.begin(), report_files.end());

  if (!report_files.empty()) {
    std::map<std::string, int> class_counts;
    std::vector<std::string> anomalies;
    for (const auto& path : report_files) {
      std::ifstream in(path);
      nlohmann::json j;
      try {
        in >> j;
      } catch (const nlohmann::json::exception&) {
        continue;
      }
      for (const auto& v : j.value("verdicts", nlohmann::json::array())) {
        const std::string cls = v.value("class", "normal");
        const std::string kind = v.value("kind", "matched");
        const std::string label = kind == "unexpected_location" ? kind : cls;
        ++class_counts[label];
        if (label != "normal")
          anomalies.push_back(j.value("date", "?") + " slot " +
                              std::to_string(j.value("slot", -1)) + ": " + label +
                              " (" + std::to_string(v.value("size", 0)) + " posts)");
      }
      for (const auto& a : j.value("absent_refs", nlohmann::json::array())) {
        const std::string cls = a.value("class", "normal");
        ++class_counts[cls];
        if (cls != "normal")
          anomalies.push_back(j.value("date", "?") + " slot " +
                              std::to_string(j.value("slot", -1)) +
                              ": reference absent, " + cls);
      }
    }
    md << "## Crowd verdicts (" << report_files.size() << " slot reports)\n\n";
    for (const auto& [cls, n] : class_counts)
      md << "- " << cls << ": " << n << "\n";
    if (!anomalies.empty()) {
      md << "\n### Flagged\n\n";
      for (const auto& a : anomalies) md << "- " << a << "\n";
    }
    md << "\n";
  }

  const fs::path topk = fs::path(dir) / "topk.json";
  if (fs::exists(topk)) {
    std::ifstream in(topk);
    nlohmann::json j;
    try {
      in >> j;
      md << "## Top threads\n\n";
      md << "| rank | thread | relevance | size | text |\n";
      md << "|-----:|-------:|----------:|-----:|------|\n";
      for (const auto& row : j) {
        std::string text = row.value("representative_text", "");
        for (auto& c : text)
          if (c == '|' || c == '\n') c = ' ';
        md << "| " << row.value("rank", 0) << " | " << row.value("thread_id", -1)
           << " | " << row.value("relevance", 0.0) << " | " << row.value("size", 0)
           << " | " << text << " |\n";
      }
      md << "\n";
    } catch (const nlohmann::json::exception&) {
      // leave the section out
    }
  }

  if (report_files.empty() && !fs::exists(topk))
    throw ConfigError("nothing to report on in " + dir +
                      " (no report-*.json, no topk.json)");

  write_file(fs::path(dir) / "report.md", md.str());
  std::cout << "wrote " << (fs::path(dir) / "report.md").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"crowd-anomaly and thread analysis for geo-tagged posts"};
  app.require_subcommand(1);

  RunOptions opt;
  std::string config_path;
  std::string fence_flag;
  std::optional<double> eps_flag, match_eps_flag, threshold_flag;
  std::optional<int> min_points_flag, top_k_flag, bands_flag, rows_flag, cap_flag;
  std::optional<std::int64_t> window_flag;
  std::optional<std::uint64_t> seed_flag;
  std::optional<std::string> tz_flag;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON config with the shared knobs");
    cmd->add_option("--timezone", tz_flag, "IANA zone id of the city");
    cmd->add_option("--seed", seed_flag, "seed for every random choice");
    cmd->add_option("--jobs", opt.jobs, "parallel slot workers")->check(CLI::PositiveNumber);
  };
  auto add_geo = [&](CLI::App* cmd) {
    cmd->add_option("--fence", fence_flag, "lat,lon,radius_m analysis circle");
    cmd->add_option("--eps", eps_flag, "DBSCAN radius in meters (skip the estimate)");
    cmd->add_option("--min-points", min_points_flag, "DBSCAN density threshold");
    cmd->add_option("--match-eps", match_eps_flag,
                    "cluster-to-reference match cutoff in meters");
  };
  auto add_threads = [&](CLI::App* cmd) {
    cmd->add_option("--threshold", threshold_flag, "thread join cosine threshold");
    cmd->add_option("--bands", bands_flag, "LSH bands");
    cmd->add_option("--rows", rows_flag, "LSH rows per band");
    cmd->add_option("--bucket-cap", cap_flag, "LSH bucket size limit, <=0 unbounded");
    cmd->add_option("--window", window_flag, "LSH recency window seconds, <=0 unbounded");
  };

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic day of posts");
  std::string city_config, synth_date, synth_events, synth_out;
  bool synth_labels = false;
  synth->add_option("--config", city_config, "city config JSON")->required();
  synth->add_option("--date", synth_date, "day to generate, YYYY-MM-DD")->required();
  synth->add_option("--seed", seed_flag, "override the config seed");
  synth->add_option("--events", synth_events, "event specs JSON to layer on");
  synth->add_option("--out", synth_out, "output NDJSON path, - for stdout");
  synth->add_flag("--labels", synth_labels, "emit ground-truth labels on event posts");

  // train
  auto* train = app.add_subcommand("train", "build a crowd pattern from history");
  std::vector<std::string> train_inputs;
  std::string train_out = "pattern.json";
  train->add_option("inputs", train_inputs, "NDJSON post files")->required();
  train->add_option("--out", train_out, "pattern output path");
  add_common(train);
  add_geo(train);

  // detect
  auto* detect = app.add_subcommand("detect", "flag anomalous crowds on a live day");
  std::vector<std::string> detect_inputs;
  std::string detect_pattern, detect_out = "out";
  detect->add_option("inputs", detect_inputs, "NDJSON post files")->required();
  detect->add_option("--pattern", detect_pattern, "trained pattern JSON")->required();
  detect->add_option("--out", detect_out, "report output directory");
  add_common(detect);

  // threads
  auto* threads = app.add_subcommand("threads", "aggregate posts into story threads");
  std::vector<std::string> threads_inputs;
  std::string threads_csv, threads_json;
  threads->add_option("inputs", threads_inputs, "NDJSON post files")->required();
  threads->add_option("--out-csv", threads_csv, "thread summary CSV path");
  threads->add_option("--out-json", threads_json, "thread detail JSON path");
  add_common(threads);
  add_threads(threads);

  // rank
  auto* rank = app.add_subcommand("rank", "run the full pipeline and rank threads");
  std::vector<std::string> rank_inputs;
  std::string rank_pattern, rank_out = "out";
  rank->add_option("inputs", rank_inputs, "NDJSON post files")->required();
  rank->add_option("--pattern", rank_pattern, "trained pattern JSON")->required();
  rank->add_option("--out", rank_out, "output directory");
  rank->add_option("--top-k", top_k_flag, "threads to keep in the report");
  add_common(rank);
  add_threads(rank);

  // bench
  auto* bench = app.add_subcommand("bench", "measure threads pipeline throughput");
  std::vector<std::string> bench_inputs;
  int bench_repeat = 1;
  bench->add_option("inputs", bench_inputs, "NDJSON post files")->required();
  bench->add_option("--repeat", bench_repeat, "timed repetitions")->check(CLI::PositiveNumber);
  add_common(bench);
  add_threads(bench);

  // report
  auto* report = app.add_subcommand("report", "summarize detect/rank outputs as Markdown");
  std::string report_dir;
  report->add_option("--dir", report_dir, "directory with detect/rank outputs")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (!config_path.empty()) apply_config_file(opt, config_path);
    if (tz_flag) opt.timezone = *tz_flag;
    if (seed_flag) opt.seed = *seed_flag;
    if (eps_flag) opt.eps_m = *eps_flag;
    if (min_points_flag) opt.min_points = *min_points_flag;
    if (match_eps_flag) opt.match_eps_m = *match_eps_flag;
    if (threshold_flag) opt.threshold = *threshold_flag;
    if (bands_flag) opt.lsh.bands = *bands_flag;
    if (rows_flag) opt.lsh.rows = *rows_flag;
    if (cap_flag) opt.lsh.bucket_cap = *cap_flag;
    if (window_flag) opt.lsh.window_s = *window_flag;
    if (top_k_flag) opt.top_k = *top_k_flag;
    if (!fence_flag.empty()) {
      Geofence f;
      char c1, c2;
      std::istringstream in(fence_flag);
      if (!(in >> f.center.lat >> c1 >> f.center.lon >> c2 >> f.radius_m) ||
          c1 != ',' || c2 != ',' || !in.eof())
        throw ConfigError("bad --fence, expected lat,lon,radius_m");
      opt.fence = f;
    }
    if (!(opt.threshold > 0.0) || opt.threshold > 1.0)
      throw ConfigError("threshold must be in (0, 1]");

    if (synth->parsed())
      return cmd_synth(city_config, synth_date, seed_flag, synth_events, synth_out,
                       synth_labels);
    if (train->parsed()) return cmd_train(opt, train_inputs, train_out);
    if (detect->parsed()) return cmd_detect(opt, detect_pattern, detect_inputs, detect_out);
    if (threads->parsed()) return cmd_threads(opt, threads_inputs, threads_csv, threads_json);
    if (rank->parsed()) return cmd_rank(opt, rank_pattern, rank_inputs, rank_out);
    if (bench->parsed()) return cmd_bench(opt, bench_inputs, bench_repeat);
    if (report->parsed()) return cmd_report(report_dir);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
