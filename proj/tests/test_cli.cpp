#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;

namespace {

std::string bin() {
  // environment first so the suite can point at any build
  if (const char* b = std::getenv("GEOPULSE_BIN")) return b;
#ifdef GEOPULSE_BIN
  return GEOPULSE_BIN;
#else
  return "geopulse";
#endif
}

struct RunResult {
  int code = -1;
  std::string out;  // stdout and stderr combined
};

RunResult run(const std::string& args, const std::string& env_prefix = "") {
  const std::string cmd = env_prefix + "\"" + bin() + "\" " + args + " 2>&1";
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  RunResult r;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

std::string token_pool_json(const std::string& prefix, int n) {
  std::string out = "[";
  for (int i = 0; i < n; ++i) {
    if (i) out += ", ";
    out += "\"" + prefix + std::to_string(i) + "\"";
  }
  return out + "]";
}

/// Shared workspace: a small synthetic city, four training Saturdays, a
/// planted test Saturday and an untrained Sunday.
struct Workspace {
  fs::path dir;
  fs::path city, events, pattern;
  std::vector<std::string> saturdays = {"2016-01-02", "2016-01-09", "2016-01-16",
                                        "2016-01-23"};
  std::string test_day = "2016-01-30";
  std::string sunday = "2016-01-31";

  Workspace() {
    dir = fs::temp_directory_path() /
          ("geopulse_cli_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    city = dir / "city.json";
    events = dir / "events.json";
    pattern = dir / "pattern.json";

    std::string rates = "[";
    for (int s = 0; s < 48; ++s) {
      if (s) rates += ", ";
      rates += (s >= 30 && s <= 39) ? "8" : "0";
    }
    rates += "]";

    spit(city, std::string("{\n") +
        "  \"timezone\": \"America/New_York\",\n" +
        "  \"fence\": {\"center\": {\"lat\": 40.7580, \"lon\": -73.9855}, \"radius_m\": 4000},\n" +
        "  \"tokens_per_post\": 4,\n" +
        "  \"vocabularies\": {\n" +
        "    \"plaza_talk\": " + token_pool_json("plaza", 18) + ",\n" +
        "    \"chatter\": " + token_pool_json("chat", 30) + ",\n" +
        "    \"fair_talk\": " + token_pool_json("fair", 5) + "\n" +
        "  },\n" +
        "  \"background_rate\": 1.5,\n" +
        "  \"background_vocabulary\": \"chatter\",\n" +
        "  \"hotspots\": [\n" +
        "    {\"id\": \"plaza\", \"center\": {\"lat\": 40.7580, \"lon\": -73.9855},\n" +
        "     \"sigma_m\": 60, \"rate\": " + rates + ", \"vocabulary\": \"plaza_talk\"}\n" +
        "  ]\n}\n");

    spit(events, std::string("{\"events\": [\n") +
        "  {\"id\": \"fair\", \"location\": {\"lat\": 40.7688, \"lon\": -73.9796},\n" +
        "   \"sigma_m\": 60, \"slot_begin\": 34, \"slot_end\": 35, \"rate\": 40,\n" +
        "   \"vocabulary\": \"fair_talk\"}\n]}\n");
  }

  ~Workspace() {
    std::error_code ec;
    fs::remove_all(dir, ec);  // best effort
  }

  fs::path day_file(const std::string& date) const { return dir / (date + ".ndjson"); }
};

Workspace& ws() {
  static Workspace w;
  return w;
}

int count_lines(const std::string& s) {
  int n = 0;
  for (char c : s)
    if (c == '\n') ++n;
  return n;
}

}  // namespace

TEST_CASE("help exits clean, bad invocations exit 2") {
  CHECK(run("--help").code == 0);
  CHECK(run("").code == 2);               // a subcommand is required
  CHECK(run("frobnicate").code == 2);     // unknown subcommand
  CHECK(run("synth --date 2016-01-23").code == 2);  // missing required --config
  const auto bad_date = run("synth --config " + ws().city.string() + " --date nope");
  CHECK(bad_date.code == 2);
  CHECK(bad_date.out.find("YYYY-MM-DD") != std::string::npos);
}

TEST_CASE("synth writes deterministic ndjson days") {
  const auto& w = ws();
  for (const auto& d : w.saturdays) {
    const auto r = run("synth --config " + w.city.string() + " --date " + d +
                       " --out " + w.day_file(d).string());
    CHECK(r.code == 0);
    REQUIRE(fs::exists(w.day_file(d)));
  }
  const auto a = slurp(w.day_file(w.saturdays[0]));
  CHECK(count_lines(a) > 80);  // ~150 posts on an active Saturday

  // same date, same config: identical bytes
  const auto again = w.dir / "again.ndjson";
  CHECK(run("synth --config " + w.city.string() + " --date " + w.saturdays[0] +
            " --out " + again.string()).code == 0);
  CHECK(slurp(again) == a);
  fs::remove(again);
}

TEST_CASE("seed precedence: flag beats environment, both beat the default") {
  const auto& w = ws();
  const auto out1 = (w.dir / "seed1.ndjson").string();
  const auto out2 = (w.dir / "seed2.ndjson").string();
  const auto base = "synth --config " + w.city.string() + " --date 2016-02-06 --out ";

  CHECK(run(base + out1 + " --seed 7").code == 0);
  CHECK(run(base + out2, "GEOPULSE_SEED=7 ").code == 0);
  CHECK(slurp(out1) == slurp(out2));  // env fallback matches the explicit flag

  CHECK(run(base + out2 + " --seed 8", "GEOPULSE_SEED=7 ").code == 0);
  CHECK(slurp(out1) != slurp(out2));  // the flag wins over the environment
  fs::remove(out1);
  fs::remove(out2);
}

TEST_CASE("synth layers events and emits labels on request") {
  const auto& w = ws();
  const auto out = w.day_file(w.test_day);
  const auto r = run("synth --config " + w.city.string() + " --date " + w.test_day +
                     " --events " + w.events.string() + " --out " + out.string());
  CHECK(r.code == 0);
  const auto text = slurp(out);
  CHECK(text.find("fair0") != std::string::npos);  // event vocabulary present
  CHECK(text.find("\"label\"") == std::string::npos);

  const auto labeled = w.dir / "labeled.ndjson";
  CHECK(run("synth --config " + w.city.string() + " --date " + w.test_day +
            " --events " + w.events.string() + " --labels --out " +
            labeled.string()).code == 0);
  CHECK(slurp(labeled).find("\"label\":\"fair\"") != std::string::npos);
  fs::remove(labeled);

  // the sunday has no events and a quiet hotspot either way
  CHECK(run("synth --config " + w.city.string() + " --date " + w.sunday +
            " --out " + w.day_file(w.sunday).string()).code == 0);
}

TEST_CASE("train builds a reproducible pattern from history") {
  const auto& w = ws();
  std::string inputs;
  for (const auto& d : w.saturdays) inputs += " " + w.day_file(d).string();
  const std::string cmd = "train" + inputs +
                          " --fence 40.7580,-73.9855,4000"
                          " --timezone America/New_York --min-points 4 --out " +
                          w.pattern.string();
  const auto r = run(cmd);
  CHECK(r.code == 0);
  CHECK(r.out.find("trained") != std::string::npos);
  CHECK(r.out.find("reference(s)") != std::string::npos);
  CHECK(r.out.find("skipped") != std::string::npos);  // sparse background slots
  REQUIRE(fs::exists(w.pattern));
  CHECK(fs::exists(w.dir / "run-config.json"));

  const auto first = slurp(w.pattern);
  CHECK(first.find("\"weekday\": 5") != std::string::npos);
  CHECK(run(cmd).code == 0);
  CHECK(slurp(w.pattern) == first);  // retraining is byte-stable
}

TEST_CASE("train refuses unusable setups with exit code 2") {
  const auto& w = ws();
  // a single day cannot establish a weekly routine
  const auto one = run("train " + w.day_file(w.saturdays[0]).string() +
                       " --fence 40.7580,-73.9855,4000 --timezone America/New_York"
                       " --out " + (w.dir / "nope.json").string());
  CHECK(one.code == 2);
  CHECK(one.out.find("day(s) of data") != std::string::npos);
  CHECK_FALSE(fs::exists(w.dir / "nope.json"));

  // no fence at all
  CHECK(run("train " + w.day_file(w.saturdays[0]).string() + " --timezone UTC --out " +
            (w.dir / "nope.json").string()).code == 2);
  // malformed fence
  CHECK(run("train " + w.day_file(w.saturdays[0]).string() +
            " --fence not-a-fence --out " + (w.dir / "nope.json").string()).code == 2);
  // unknown timezone
  CHECK(run("train " + w.day_file(w.saturdays[0]).string() +
            " --fence 40.7580,-73.9855,4000 --timezone Mars/Base --out " +
            (w.dir / "nope.json").string()).code == 2);
  // input file that does not exist
  CHECK(run("train " + (w.dir / "ghost.ndjson").string() +
            " --fence 40.7580,-73.9855,4000 --out " +
            (w.dir / "nope.json").string()).code == 1);
}

TEST_CASE("detect flags the planted surge at its unexpected spot") {
  const auto& w = ws();
  REQUIRE(fs::exists(w.pattern));
  const auto out_dir = w.dir / "det";
  const auto r = run("detect " + w.day_file(w.test_day).string() + " --pattern " +
                     w.pattern.string() + " --out " + out_dir.string());
  CHECK(r.code == 0);
  REQUIRE(fs::is_directory(out_dir));

  const auto s34 = out_dir / ("report-" + w.test_day + "-s34.json");
  REQUIRE(fs::exists(s34));
  CHECK(fs::exists(out_dir / ("report-" + w.test_day + "-s34.geojson")));
  CHECK(fs::exists(out_dir / "run-config.json"));

  const auto j = nlohmann::json::parse(slurp(s34));
  CHECK(j["date"] == w.test_day);
  CHECK(j["slot"] == 34);
  bool planted_seen = false;
  for (const auto& v : j["verdicts"])
    if (v["kind"] == "unexpected_location" && v["size"].get<int>() >= 20)
      planted_seen = true;
  CHECK(planted_seen);
}

TEST_CASE("detect on a day with no trained slots still exits 0") {
  const auto& w = ws();
  const auto out_dir = w.dir / "det-sun";
  const auto r = run("detect " + w.day_file(w.sunday).string() + " --pattern " +
                     w.pattern.string() + " --out " + out_dir.string());
  CHECK(r.code == 0);
  CHECK(r.out.find("uncovered") != std::string::npos);
  // nothing was covered, so no slot reports
  bool any_report = false;
  for (const auto& e : fs::directory_iterator(out_dir))
    if (e.path().filename().string().rfind("report-", 0) == 0) any_report = true;
  CHECK_FALSE(any_report);
}

TEST_CASE("threads groups the day into stories") {
  const auto& w = ws();
  const auto csv_path = w.dir / "threads.csv";
  const auto json_path = w.dir / "threads.json";
  const auto r = run("threads " + w.day_file(w.test_day).string() + " --out-csv " +
                     csv_path.string() + " --out-json " + json_path.string());
  CHECK(r.code == 0);
  const auto csv = slurp(csv_path);
  CHECK(csv.rfind("thread_id,size,first_t,last_t,representative_text", 0) == 0);
  CHECK(count_lines(csv) > 10);
  const auto j = nlohmann::json::parse(slurp(json_path));
  REQUIRE(j.is_array());
  CHECK_FALSE(j.empty());
  CHECK(j[0].contains("member_ids"));

  std::size_t members = 0;
  for (const auto& t : j) members += t["member_ids"].size();
  const auto all = slurp(w.day_file(w.test_day));
  CHECK(members == static_cast<std::size_t>(count_lines(all)));
}

TEST_CASE("rank puts the planted story first") {
  const auto& w = ws();
  const auto out_dir = w.dir / "rank";
  const auto r = run("rank " + w.day_file(w.test_day).string() + " --pattern " +
                     w.pattern.string() + " --top-k 5 --out " + out_dir.string());
  CHECK(r.code == 0);
  REQUIRE(fs::exists(out_dir / "topk.json"));
  REQUIRE(fs::exists(out_dir / "relevance.csv"));
  REQUIRE(fs::exists(out_dir / "topk.md"));

  const auto topk = nlohmann::json::parse(slurp(out_dir / "topk.json"));
  REQUIRE_FALSE(topk.empty());
  CHECK(topk.size() <= 5);
  CHECK(topk[0]["rank"] == 1);
  CHECK(topk[0]["relevance"].get<double>() > 0.0);
  CHECK(topk[0]["representative_text"].get<std::string>().find("fair") !=
        std::string::npos);

  const auto csv = slurp(out_dir / "relevance.csv");
  CHECK(csv.rfind("thread_id,date,slot,relevance,concentration,class", 0) == 0);
  CHECK(csv.find("unexpected_location") != std::string::npos);
}

TEST_CASE("report renders whatever outputs are present") {
  const auto& w = ws();
  const auto det = run("report --dir " + (w.dir / "det").string());
  CHECK(det.code == 0);
  const auto det_md = slurp(w.dir / "det" / "report.md");
  CHECK(det_md.find("Crowd verdicts") != std::string::npos);
  CHECK(det_md.find("unexpected_location") != std::string::npos);

  const auto rank = run("report --dir " + (w.dir / "rank").string());
  CHECK(rank.code == 0);
  const auto rank_md = slurp(w.dir / "rank" / "report.md");
  CHECK(rank_md.find("Top threads") != std::string::npos);
  CHECK(rank_md.find("fair") != std::string::npos);

  const auto empty = w.dir / "empty";
  fs::create_directories(empty);
  CHECK(run("report --dir " + empty.string()).code == 2);
  CHECK(run("report --dir " + (w.dir / "missing").string()).code == 2);
}

TEST_CASE("bench measures throughput and needs input") {
  const auto& w = ws();
  const auto r = run("bench " + w.day_file(w.test_day).string() + " --repeat 1");
  CHECK(r.code == 0);
  CHECK(r.out.find("posts/s") != std::string::npos);

  const auto empty = w.dir / "empty.ndjson";
  spit(empty, "");
  CHECK(run("bench " + empty.string()).code == 2);
}

TEST_CASE("shared option validation applies across subcommands") {
  const auto& w = ws();
  CHECK(run("threads " + w.day_file(w.test_day).string() +
            " --threshold 0").code == 2);
  CHECK(run("threads " + w.day_file(w.test_day).string() +
            " --threshold 1.5").code == 2);
  CHECK(run("rank " + w.day_file(w.test_day).string() + " --pattern " +
            (w.dir / "missing.json").string() + " --out " +
            (w.dir / "r2").string()).code == 1);

  // shared knobs can come from a config file instead of flags
  const auto cfgfile = w.dir / "run.json";
  spit(cfgfile, "{\"fence\": {\"center\": {\"lat\": 40.7580, \"lon\": -73.9855},"
                " \"radius_m\": 4000}, \"timezone\": \"America/New_York\","
                " \"min_points\": 4}\n");
  std::string inputs;
  for (const auto& d : w.saturdays) inputs += " " + w.day_file(d).string();
  const auto pat2 = w.dir / "pattern2.json";
  CHECK(run("train" + inputs + " --config " + cfgfile.string() + " --out " +
            pat2.string()).code == 0);
  CHECK(slurp(pat2) == slurp(w.pattern));  // flags and config agree exactly
}
