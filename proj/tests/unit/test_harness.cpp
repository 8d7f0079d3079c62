#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "olv/error.hpp"
#include "olv/harness.hpp"
#include "olv/io.hpp"

using namespace olv;
namespace fs = std::filesystem;

namespace {

const fs::path kRoot = "harness_scratch";

std::string write_config(const std::string& name, const std::string& text) {
  fs::create_directories(kRoot);
  const auto path = kRoot / (name + ".ini");
  std::ofstream(path) << text;
  return path.string();
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

int run(const std::string& sub, const std::string& config, std::string* log_text = nullptr,
        std::optional<std::uint64_t> seed = {}) {
  std::ostringstream log;
  RunArgs args;
  args.config = config;
  args.seed = seed;
  const int code = run_scenario(sub, args, log);
  if (log_text) *log_text = log.str();
  return code;
}

std::string out_dir(const std::string& name) { return (kRoot / "out" / name).string(); }

const std::string kIdealMd = R"(
[run]
seed = 4
out = OUT

[universe]
box = 8 8 8
n_total = 200
temperature = 1

[region]
omega_lo = 2 2 2
omega_hi = 6 6 6
delta = 1

[potential]
kind = ideal

[engine]
dt = 0.05
steps = 2000
frame_stride = 500
trajectory = both
)";

std::string with_out(std::string text, const std::string& out) {
  text.replace(text.find("OUT"), 3, out);
  return text;
}

}  // namespace

TEST_CASE("config parsing: defaults, overrides and rejects") {
  const auto c = parse_config_text("[universe]\nbox = 9 9 9\nn_total = 10\n[potential]\nkind = lj\n");
  CHECK(c.universe.box_lengths.x == 9.0);
  CHECK(c.region.delta_thickness == 2.5);
  CHECK(c.region.volume() == doctest::Approx(0.1 * 729.0).epsilon(1e-12));
  CHECK(c.seed == 1);
  auto code = [](const std::string& text) {
    try {
      parse_config_text(text);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::IoError;
  };
  CHECK(code("[nope]\nx = 1\n") == ErrorCode::ConfigInvalid);
  CHECK(code("[universe]\nbogus = 1\n") == ErrorCode::ConfigInvalid);
  CHECK(code("[universe]\nbox = 1 2\n") == ErrorCode::ConfigInvalid);
  CHECK(code("[engine]\ndt = fast\n") == ErrorCode::ConfigInvalid);
  CHECK(code("[engine]\nthermostat = nose\n") == ErrorCode::ConfigInvalid);
}

TEST_CASE("thin Delta layers produce a warning") {
  auto c = parse_config_text(
      "[universe]\nbox = 10 10 10\nn_total = 50\n[region]\ndelta = 1\n[potential]\nkind = lj\n[engine]\nsteps = 10\n");
  validate_for(c, "universe-md");
  REQUIRE(c.warnings.size() == 1);
  CHECK(c.warnings[0].find("delta") != std::string::npos);
}

TEST_CASE("config hash is FNV-1a 64") {
  CHECK(config_hash("") == "cbf29ce484222325");
  CHECK(config_hash("a") == "af63dc4c8601ec8c");
}

TEST_CASE("exit codes") {
  CHECK(run("no-such-command", "x.ini") == kExitConfig);
  CHECK(run("grid", (kRoot / "missing.ini").string()) == kExitConfig);
  const auto bad = write_config("bad", "[grid]\nnx = 40\nL = 10\na = 3\nb = 7\ndt = 5\n");
  std::string log;
  CHECK(run("grid", bad, &log) == kExitConfig);
  CHECK(log.find("CFL") != std::string::npos);
}

TEST_CASE("grid with zero steps writes initial fields and a zero error") {
  const auto out = out_dir("grid0");
  const auto cfg = write_config("grid0", "[run]\nout = " + out +
                                             "\n[grid]\nL = 10\na = 2\nb = 8\nnx = 40\nnp = 16\np_max = 8\ndt = 0.02\n"
                                             "steps = 0\noracle = full\n");
  REQUIRE(run("grid", cfg) == kExitOk);
  CHECK(fs::exists(fs::path(out) / "field_0.bin"));
  CHECK(fs::exists(fs::path(out) / "field_0.json"));
  const auto err = read_csv((fs::path(out) / "error.csv").string());
  for (const auto& row : err.rows) CHECK(row[column_index(err, "l1")] == 0.0);
  const auto manifest = nlohmann::json::parse(slurp(fs::path(out) / "manifest.json"));
  CHECK(manifest["results"]["l1_total"] == 0.0);
  CHECK(manifest["config_hash_fnv1a64"] == config_hash(slurp(cfg)));
}

TEST_CASE("universe-md runs are byte-identical for the same seed") {
  const auto a = out_dir("md_a"), b = out_dir("md_b");
  REQUIRE(run("universe-md", write_config("md_a", with_out(kIdealMd, a))) == kExitOk);
  REQUIRE(run("universe-md", write_config("md_b", with_out(kIdealMd, b))) == kExitOk);
  for (const char* f : {"pn.csv", "events.csv", "flux.csv", "trajectory.jsonl", "trajectory.olv"}) {
    INFO(f);
    REQUIRE(fs::exists(fs::path(a) / f));
    CHECK(slurp(fs::path(a) / f) == slurp(fs::path(b) / f));
  }
  const auto c = out_dir("md_c");
  REQUIRE(run("universe-md", write_config("md_c", with_out(kIdealMd, c)), nullptr, 99) == kExitOk);
  CHECK(slurp(fs::path(a) / "pn.csv") != slurp(fs::path(c) / "pn.csv"));
  const auto manifest = nlohmann::json::parse(slurp(fs::path(c) / "manifest.json"));
  CHECK(manifest["seed"] == 99);

  // Binary trajectory frames decode back to the recorded states.
  std::ifstream bin(fs::path(a) / "trajectory.olv", std::ios::binary);
  SimState s;
  std::vector<Region> labels;
  std::size_t frames = 0;
  while (read_binary_frame(bin, s, labels)) {
    CHECK(s.particles.size() == 200);
    CHECK(labels.size() == 200);
    ++frames;
  }
  CHECK(frames == 5);
}

TEST_CASE("gcmc against itself agrees and report reproduces normalization") {
  const std::string base = "[oracle]\nmu = -2\n[gcmc]\nbox = 3 3 3\nsweeps = 4000\n";
  const auto a = out_dir("gcmc_a"), b = out_dir("gcmc_b");
  REQUIRE(run("gcmc", write_config("gcmc_a", "[run]\nseed = 1\nout = " + a + "\n" + base)) == kExitOk);
  REQUIRE(run("gcmc", write_config("gcmc_b", "[run]\nseed = 2\nout = " + b + "\n" + base)) == kExitOk);
  const auto cmp = out_dir("cmp");
  const auto cfg = write_config("cmp", "[run]\nout = " + cmp + "\n[compare]\na = " + a + "/pn.csv\nb = " + b + "/pn.csv\n");
  std::string log;
  CHECK(run("compare", cfg, &log) == kExitOk);
  const auto t = read_csv((fs::path(cmp) / "compare.csv").string());
  CHECK(column_index(t, "z") < t.columns.size());

  const auto rep = out_dir("rep");
  REQUIRE(run("report", write_config("rep", "[run]\nout = " + rep + "\n[report]\ninputs = " + a + "/pn.csv, " + b +
                                                 "/pn.csv\n")) == kExitOk);
  const auto r = read_csv((fs::path(rep) / "report.csv").string());
  REQUIRE(r.rows.size() == 2);
  for (const auto& row : r.rows) CHECK(std::abs(row[column_index(r, "normalization_residual")]) < 1e-12);
}

TEST_CASE("compare flags a shifted law") {
  CsvTable t{"occupancy probability", "dimensionless", {"n", "p", "p_err"}, {}, {}};
  CsvTable u = t;
  for (int n = 0; n < 10; ++n) {
    t.rows.push_back({double(n), n < 5 ? 0.2 : 0.0, 0.01});
    u.rows.push_back({double(n), n >= 5 ? 0.2 : 0.0, 0.01});
  }
  fs::create_directories(kRoot);
  write_csv(t, (kRoot / "law_a.csv").string());
  write_csv(u, (kRoot / "law_b.csv").string());
  const auto cfg = write_config("shift", "[run]\nout = " + out_dir("shift") + "\n[compare]\na = " +
                                             (kRoot / "law_a.csv").string() + "\nb = " + (kRoot / "law_b.csv").string() + "\n");
  CHECK(run("compare", cfg) == kExitAcceptance);
}

TEST_CASE("csv round trip keeps full precision") {
  CsvTable t{"thing", "units", {"x", "y"}, {{0.1, 1.0 / 3.0}, {1e-300, -2.5}}, {"note: yes"}};
  fs::create_directories(kRoot);
  const auto p = (kRoot / "rt.csv").string();
  write_csv(t, p);
  const auto r = read_csv(p);
  CHECK(r.quantity == "thing");
  CHECK(r.units == "units");
  CHECK(r.rows == t.rows);
  CHECK_THROWS_AS(column_index(r, "z"), Error);
}

TEST_CASE("bl and widom subcommands produce their tables") {
  const auto out = out_dir("bl");
  const auto cfg = write_config("bl", "[run]\nout = " + out +
                                          "\n[region]\nomega_lo = 1 1 1\nomega_hi = 2 2 2\n[oracle]\nmu = -1\n"
                                          "[bl]\nsteps = 20000\ndt_max = 0.5\nsample_dt = 0.5\nreplicas = 2\n");
  REQUIRE(run("bl", cfg) == kExitOk);
  for (const char* f : {"jumps.csv", "pn.csv", "flux_balance.csv", "manifest.json"}) CHECK(fs::exists(fs::path(out) / f));

  const auto wout = out_dir("widom");
  const auto wcfg = write_config("widom", "[run]\nout = " + wout +
                                              "\n[universe]\nbox = 7 7 7\nn_total = 100\n[region]\ndelta = 1.2\n"
                                              "[potential]\nkind = wca\n[engine]\nsteps = 1000\nthermostat = langevin\n"
                                              "mask = everywhere\nmin_separation = 0.9\n[oracle]\nwidom_frame_stride = 100\n"
                                              "widom_insertions = 50\n");
  REQUIRE(run("widom", wcfg) == kExitOk);
  const auto t = read_csv((fs::path(wout) / "widom.csv").string());
  CHECK(t.rows.size() == 1);
}
