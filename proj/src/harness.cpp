#include "olv/harness.hpp"

#include <boost/math/special_functions/gamma.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <boost/version.hpp>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "olv/error.hpp"
#include "olv/io.hpp"
#include "olv/stats.hpp"

namespace olv {

namespace fs = std::filesystem;
namespace pt = boost::property_tree;

// ---------------------------------------------------------------- parsing

namespace {

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys = {
      {"run", {"seed", "threads", "out"}},
      {"universe", {"box", "periodic", "n_total", "mass", "temperature"}},
      {"region", {"omega_lo", "omega_hi", "delta"}},
      {"potential", {"kind", "epsilon", "sigma", "cutoff"}},
      {"engine",
       {"dt", "steps", "burn_in", "thermostat", "gamma", "thermostat_temperature", "mask", "cell_size", "tracers",
        "force_cap", "frame_stride", "detect_crossings", "trajectory", "min_separation"}},
      {"estimators", {"stride", "stride_factor", "resamples", "min_samples", "flux_blocks"}},
      {"oracle", {"mu", "P", "h", "widom_insertions", "widom_frame_stride"}},
      {"gcmc",
       {"box", "sweeps", "moves_per_sweep", "p_displace", "p_insert", "p_delete", "max_displacement", "burn_in",
        "sample_every", "n_initial", "n_cap"}},
      {"bl", {"nu", "steps", "dt_max", "flow_dt", "sample_dt", "birth_multiplier", "n_cap", "replicas"}},
      {"grid",
       {"L", "a", "b", "nx", "np", "p_max", "dt", "M", "periodic", "N", "steps", "closure", "convention",
        "reservoir_rho", "reservoir_drift", "init", "oracle", "q0", "sq", "p0", "sp", "q0_b", "sq_b", "p0_b", "sp_b",
        "mean_field_rho", "snapshot_every"}},
      {"compare", {"a", "b", "column", "error_column", "k_sigma", "alpha"}},
      {"report", {"inputs"}},
  };
  return keys;
}

[[noreturn]] void bad(const std::string& origin, const std::string& key, const std::string& why) {
  throw Error(ErrorCode::ConfigInvalid, origin + ": " + key + ": " + why);
}

class Reader {
 public:
  Reader(const pt::ptree& tree, std::string origin) : tree_(tree), origin_(std::move(origin)) {}

  std::optional<std::string> raw(const std::string& path) const {
    if (auto v = tree_.get_optional<std::string>(pt::ptree::path_type(path, '.'))) return *v;
    return std::nullopt;
  }

  double real(const std::string& path, double def) const {
    const auto v = raw(path);
    if (!v) return def;
    try {
      std::size_t used = 0;
      const double x = std::stod(*v, &used);
      if (used != v->size() || !std::isfinite(x)) throw std::invalid_argument(*v);
      return x;
    } catch (const std::exception&) {
      bad(origin_, path, "expected a number, got '" + *v + "'");
    }
  }

  std::uint64_t count(const std::string& path, std::uint64_t def) const {
    const auto v = raw(path);
    if (!v) return def;
    try {
      if (!v->empty() && (*v)[0] == '-') throw std::invalid_argument(*v);
      std::size_t used = 0;
      const auto x = std::stoull(*v, &used);
      if (used != v->size()) throw std::invalid_argument(*v);
      return x;
    } catch (const std::exception&) {
      bad(origin_, path, "expected a non-negative integer, got '" + *v + "'");
    }
  }

  bool flag(const std::string& path, bool def) const {
    const auto v = raw(path);
    if (!v) return def;
    if (*v == "1" || *v == "true" || *v == "yes" || *v == "on") return true;
    if (*v == "0" || *v == "false" || *v == "no" || *v == "off") return false;
    bad(origin_, path, "expected a boolean, got '" + *v + "'");
  }

  std::string word(const std::string& path, const std::string& def, std::initializer_list<const char*> allowed) const {
    const auto v = raw(path);
    if (!v) return def;
    for (const char* a : allowed)
      if (*v == a) return *v;
    std::string list;
    for (const char* a : allowed) list += std::string(list.empty() ? "" : ", ") + a;
    bad(origin_, path, "expected one of {" + list + "}, got '" + *v + "'");
  }

  std::string text(const std::string& path, const std::string& def) const { return raw(path).value_or(def); }

  std::vector<std::string> list(const std::string& path) const {
    std::vector<std::string> out;
    const auto v = raw(path);
    if (!v) return out;
    std::string s = *v;
    for (char& c : s)
      if (c == ',') c = ' ';
    std::istringstream is(s);
    std::string item;
    while (is >> item) out.push_back(item);
    return out;
  }

  Vec3 vec(const std::string& path, Vec3 def) const {
    const auto items = list(path);
    if (items.empty()) return def;
    if (items.size() != 3) bad(origin_, path, "expected three numbers");
    Vec3 v;
    for (int k = 0; k < 3; ++k) {
      try {
        std::size_t used = 0;
        v[k] = std::stod(items[k], &used);
        if (used != items[k].size()) throw std::invalid_argument(items[k]);
      } catch (const std::exception&) {
        bad(origin_, path, "expected a number, got '" + items[k] + "'");
      }
    }
    return v;
  }

  std::array<bool, 3> flags3(const std::string& path, std::array<bool, 3> def) const {
    const auto items = list(path);
    if (items.empty()) return def;
    if (items.size() == 1) {
      const bool b = flag(path, true);
      return {b, b, b};
    }
    if (items.size() != 3) bad(origin_, path, "expected one or three booleans");
    std::array<bool, 3> out{};
    for (int k = 0; k < 3; ++k) {
      const auto& s = items[k];
      if (s == "1" || s == "true" || s == "yes") out[k] = true;
      else if (s == "0" || s == "false" || s == "no") out[k] = false;
      else bad(origin_, path, "expected a boolean, got '" + s + "'");
    }
    return out;
  }

 private:
  const pt::ptree& tree_;
  std::string origin_;
};

}  // namespace

std::string config_hash(const std::string& text) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(text);
  return os.str();
}

GCParams ScenarioConfig::gc_params(double volume) const {
  GCParams p;
  p.beta = 1.0 / universe.temperature;
  p.mu = oracle.mu;
  p.P = oracle.P;
  p.h = oracle.h;
  p.M = universe.mass;
  p.volume_omega = volume;
  return p;
}

ScenarioConfig parse_config_text(const std::string& text, const std::string& origin) {
  pt::ptree tree;
  try {
    std::istringstream is(text);
    pt::ini_parser::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw Error(ErrorCode::ConfigInvalid, origin + ": line " + std::to_string(e.line()) + ": " + e.message());
  }
  for (const auto& [section, body] : tree) {
    const auto it = known_keys().find(section);
    if (it == known_keys().end()) {
      if (body.empty()) bad(origin, section, "keys must appear inside a [section]");
      bad(origin, section, "unknown section");
    }
    for (const auto& [key, value] : body)
      if (!it->second.count(key)) bad(origin, section + "." + key, "unknown key");
  }

  const Reader r(tree, origin);
  ScenarioConfig c;
  c.text = text;
  c.path = origin;

  c.seed = r.count("run.seed", 1);
  c.threads = r.count("run.threads", 1);
  c.out = r.text("run.out", "out");

  auto& u = c.universe;
  u.box_lengths = r.vec("universe.box", {10.0, 10.0, 10.0});
  u.periodic = r.flags3("universe.periodic", {true, true, true});
  u.n_total = r.count("universe.n_total", 1000);
  u.mass = r.real("universe.mass", 1.0);
  u.temperature = r.real("universe.temperature", 1.0);
  u.seed = c.seed;

  auto& g = c.region;
  const Vec3 L = u.box_lengths;
  const double side = std::cbrt(0.1 * u.volume());
  g.omega_lo = r.vec("region.omega_lo", L * 0.5 - Vec3{side, side, side} * 0.5);
  g.omega_hi = r.vec("region.omega_hi", L * 0.5 + Vec3{side, side, side} * 0.5);

  auto& p = c.potential;
  p.kind = potential_kind_from_string(r.text("potential.kind", "ideal"));
  p.epsilon = r.real("potential.epsilon", 1.0);
  p.sigma = r.real("potential.sigma", 1.0);
  p.cutoff = r.real("potential.cutoff", 2.5);
  g.delta_thickness = r.real("region.delta", PairPotential(p).cutoff());

  auto& e = c.engine;
  e.engine.dt = r.real("engine.dt", 0.005);
  e.engine.steps = r.count("engine.steps", 1000);
  e.burn_in = r.count("engine.burn_in", 0);
  e.engine.thermostat =
      r.word("engine.thermostat", "off", {"off", "langevin"}) == "langevin" ? ThermostatKind::Langevin : ThermostatKind::Off;
  e.engine.gamma = r.real("engine.gamma", 1.0);
  e.engine.thermostat_temperature = r.real("engine.thermostat_temperature", u.temperature);
  e.engine.mask = r.word("engine.mask", "outside", {"outside", "everywhere"}) == "everywhere"
                      ? ThermostatMask::Everywhere
                      : ThermostatMask::OutsideOmegaOnly;
  e.engine.cell_size = r.real("engine.cell_size", 0.0);
  e.engine.tracers = r.flag("engine.tracers", false);
  e.engine.force_cap = r.real("engine.force_cap", 0.0);
  e.frame_stride = r.count("engine.frame_stride", 0);
  e.detect_crossings = r.flag("engine.detect_crossings", true);
  e.trajectory = r.word("engine.trajectory", "none", {"none", "jsonl", "binary", "both"});
  e.min_separation = r.real("engine.min_separation", 0.0);

  auto& s = c.estimators;
  s.pn.stride = r.count("estimators.stride", 0);
  s.pn.stride_factor = r.real("estimators.stride_factor", 2.0);
  s.pn.resamples = r.count("estimators.resamples", kBootstrapResamples);
  s.pn.min_samples = r.count("estimators.min_samples", 20);
  s.flux_blocks = r.count("estimators.flux_blocks", 50);

  auto& o = c.oracle;
  o.mu = r.real("oracle.mu", 0.0);
  o.P = r.real("oracle.P", 0.0);
  o.h = r.real("oracle.h", 1.0);
  o.widom_insertions = r.count("oracle.widom_insertions", 200);
  o.widom_frame_stride = r.count("oracle.widom_frame_stride", 100);

  auto& m = c.gcmc;
  m.box = r.vec("gcmc.box", g.extent());
  m.sweeps = r.count("gcmc.sweeps", 1000);
  m.moves_per_sweep = r.count("gcmc.moves_per_sweep", 0);
  m.p_displace = r.real("gcmc.p_displace", 0.4);
  m.p_insert = r.real("gcmc.p_insert", 0.3);
  m.p_delete = r.real("gcmc.p_delete", 0.3);
  m.max_displacement = r.real("gcmc.max_displacement", 0.2);
  m.burn_in = r.count("gcmc.burn_in", 0);
  m.sample_every = r.count("gcmc.sample_every", 1);
  m.n_initial = r.count("gcmc.n_initial", 0);
  m.n_cap = r.count("gcmc.n_cap", 0);

  auto& b = c.bl;
  b.nu = r.real("bl.nu", 1.0);
  b.steps = r.count("bl.steps", 100000);
  b.dt_max = r.real("bl.dt_max", 0.1);
  b.flow_dt = r.real("bl.flow_dt", 0.005);
  b.sample_dt = r.real("bl.sample_dt", 0.1);
  b.birth_multiplier = r.real("bl.birth_multiplier", 1.0);
  b.n_cap = r.count("bl.n_cap", 0);
  b.replicas = r.count("bl.replicas", 1);

  auto& gr = c.grid;
  gr.spec.L = r.real("grid.L", 10.0);
  gr.spec.a = r.real("grid.a", 3.0);
  gr.spec.b = r.real("grid.b", 7.0);
  gr.spec.nx = r.count("grid.nx", 400);
  gr.spec.np = r.count("grid.np", 200);
  gr.spec.p_max = r.real("grid.p_max", 8.0);
  gr.spec.dt = r.real("grid.dt", 0.0025);
  gr.spec.M = r.real("grid.M", u.mass);
  gr.spec.periodic = r.flag("grid.periodic", true);
  gr.N = r.count("grid.N", 1);
  gr.steps = r.count("grid.steps", 0);
  gr.closure.mode =
      r.word("grid.closure", "factorized", {"factorized", "gc"}) == "gc" ? ClosureMode::GrandCanonical : ClosureMode::Factorized;
  gr.closure.convention = r.word("grid.convention", "as_written", {"as_written", "unreflected"}) == "unreflected"
                              ? MomentumConvention::Unreflected
                              : MomentumConvention::AsWritten;
  gr.closure.reservoir = {r.real("grid.reservoir_rho", 0.0), u.temperature, r.real("grid.reservoir_drift", 0.0)};
  gr.init = r.word("grid.init", "gaussian", {"gaussian", "gc", "empty"});
  gr.oracle = r.word("grid.oracle", "full", {"full", "exact", "none"});
  gr.packet_a = {r.real("grid.q0", 5.0), r.real("grid.sq", 0.8), r.real("grid.p0", 0.0), r.real("grid.sp", 1.0)};
  gr.packet_b = {r.real("grid.q0_b", gr.packet_a.q0), r.real("grid.sq_b", gr.packet_a.sq),
                 r.real("grid.p0_b", gr.packet_a.p0), r.real("grid.sp_b", gr.packet_a.sp)};
  gr.mean_field_rho = r.real("grid.mean_field_rho", 0.0);
  gr.snapshot_every = r.count("grid.snapshot_every", 0);

  auto& cmp = c.compare;
  cmp.a = r.text("compare.a", "");
  cmp.b = r.text("compare.b", "");
  cmp.column = r.text("compare.column", "p");
  cmp.error_column = r.text("compare.error_column", "p_err");
  cmp.k_sigma = r.real("compare.k_sigma", 3.0);
  cmp.alpha = r.real("compare.alpha", 0.01);

  c.report.inputs = r.list("report.inputs");
  return c;
}

ScenarioConfig load_config(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::ConfigInvalid, "cannot open config file " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_config_text(ss.str(), path);
}

void validate_for(ScenarioConfig& c, const std::string& sub) {
  auto& warnings = c.warnings;
  if (c.threads == 0) throw Error(ErrorCode::ConfigInvalid, "run.threads must be at least 1");
  const PairPotential pot(c.potential);
  if (sub == "universe-md" || sub == "widom") {
    validate(c.universe, c.region);
    if (c.universe.n_total == 0) throw Error(ErrorCode::ConfigInvalid, "universe.n_total must be positive");
    if (c.engine.engine.steps == 0) throw Error(ErrorCode::ConfigInvalid, "engine.steps must be positive");
    check_dt_guard(c.universe, c.region, pot, c.engine.engine);
    if (!pot.is_ideal() && c.region.delta_thickness < pot.cutoff())
      warnings.push_back("region.delta is thinner than the potential cutoff");
    if (!(c.estimators.pn.stride_factor > 0.0))
      throw Error(ErrorCode::ConfigInvalid, "estimators.stride_factor must be positive");
  }
  if (sub == "widom" && c.oracle.widom_frame_stride == 0)
    throw Error(ErrorCode::ConfigInvalid, "oracle.widom_frame_stride must be positive");
  if (sub == "gcmc") {
    validate(c.universe);
    c.gc_params(c.gcmc.box.x * c.gcmc.box.y * c.gcmc.box.z).validate();
    const double total = c.gcmc.p_displace + c.gcmc.p_insert + c.gcmc.p_delete;
    if (std::abs(total - 1.0) > 1e-12) throw Error(ErrorCode::ConfigInvalid, "gcmc move probabilities must sum to 1");
  }
  if (sub == "bl") {
    validate(c.universe);
    c.gc_params(c.region.volume()).validate();
    if (!(c.bl.nu > 0.0) || !(c.bl.dt_max > 0.0) || !(c.bl.flow_dt > 0.0) || !(c.bl.sample_dt > 0.0))
      throw Error(ErrorCode::ConfigInvalid, "bl rates and time steps must be positive");
    if (c.bl.replicas == 0) throw Error(ErrorCode::ConfigInvalid, "bl.replicas must be at least 1");
  }
  if (sub == "grid") {
    c.grid.spec.validate();
    if (c.grid.N < 1 || c.grid.N > 2) throw Error(ErrorCode::ConfigInvalid, "grid.N must be 1 or 2");
    if (c.grid.oracle == "exact" && (c.grid.N != 1 || !pot.is_ideal() || !c.grid.spec.periodic))
      throw Error(ErrorCode::ConfigInvalid, "the exact free-flight oracle needs N = 1, an ideal gas and a periodic grid");
    if (c.grid.closure.mode == ClosureMode::GrandCanonical) c.gc_params(c.grid.spec.b - c.grid.spec.a).validate();
  }
  if (sub == "compare" && (c.compare.a.empty() || c.compare.b.empty()))
    throw Error(ErrorCode::ConfigInvalid, "compare.a and compare.b are required");
  if (sub == "report" && c.report.inputs.empty())
    throw Error(ErrorCode::ConfigInvalid, "report.inputs lists no files");
}

// ------------------------------------------------------------- running

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

struct Context {
  const ScenarioConfig& config;
  std::string subcommand;
  fs::path out;
  std::ostream& log;
  std::vector<std::string> outputs;
  nlohmann::json results = nlohmann::json::object();

  fs::path file(const std::string& name) {
    outputs.push_back(name);
    return out / name;
  }
  void csv(const CsvTable& t, const std::string& name) { write_csv(t, file(name).string()); }
};

CounterRng root_rng(const ScenarioConfig& c, const std::string& sub) { return CounterRng(c.seed).derive(sub); }

void write_manifest(Context& ctx) {
  nlohmann::json j;
  j["program"] = "olv";
  j["version"] = kVersion;
  j["subcommand"] = ctx.subcommand;
  j["seed"] = ctx.config.seed;
  j["threads"] = ctx.config.threads;
  j["out"] = ctx.config.out;
  j["config_path"] = ctx.config.path;
  j["config_hash_fnv1a64"] = config_hash(ctx.config.text);
  j["config"] = ctx.config.text;
  j["outputs"] = ctx.outputs;
  j["results"] = ctx.results;
  j["warnings"] = ctx.config.warnings;
  j["versions"] = {{"olv", kVersion},
                   {"boost", std::to_string(BOOST_VERSION / 100000) + "." + std::to_string(BOOST_VERSION / 100 % 1000) +
                                 "." + std::to_string(BOOST_VERSION % 100)},
                   {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                         std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                         std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                   {"compiler", __VERSION__}};
  std::ofstream os(ctx.out / "manifest.json");
  if (!os) throw Error(ErrorCode::IoError, "cannot write manifest");
  os << j.dump(2) << "\n";
}

// Collects frames at a fixed stride for Widom insertion.
class FrameCollector : public Observer {
 public:
  explicit FrameCollector(std::size_t stride) : stride_(stride) {}
  void on_frame(std::size_t step, const SimState& state) override {
    if (step > 0 && step % stride_ == 0) frames.push_back(state);
  }
  std::vector<SimState> frames;

 private:
  std::size_t stride_;
};

Engine make_engine(const ScenarioConfig& c, Random& rng) {
  const PairPotential pot(c.potential);
  Engine engine(c.universe, c.region, pot, c.engine.engine);
  engine.set_state(random_initial_state(c.universe, rng, c.engine.min_separation));
  if (c.engine.burn_in > 0) {
    RunOptions burn{c.engine.burn_in, 0, false};
    run(engine, rng, burn, {});
    SimState s = engine.state();
    s.time = 0.0;
    engine.set_state(std::move(s));
  }
  return engine;
}

int run_universe_md(Context& ctx) {
  const auto& c = ctx.config;
  Random rng(root_rng(c, "md"));
  Engine engine = make_engine(c, rng);

  EventLogObserver log_obs;
  std::vector<Observer*> observers{&log_obs};
  std::ofstream jsonl, binary;
  const auto& traj = c.engine.trajectory;
  if (traj == "jsonl" || traj == "both") jsonl.open(ctx.file("trajectory.jsonl"));
  if (traj == "binary" || traj == "both") binary.open(ctx.file("trajectory.olv"), std::ios::binary);
  TrajectoryWriter writer(jsonl.is_open() ? &jsonl : nullptr, binary.is_open() ? &binary : nullptr, c.universe, c.region);
  if (traj != "none") observers.push_back(&writer);

  RunOptions opts{c.engine.engine.steps, traj == "none" ? 0 : std::max<std::size_t>(c.engine.frame_stride, 1),
                  c.engine.detect_crossings};
  const auto summary = run(engine, rng, opts, observers);

  Random est_rng(root_rng(c, "estimators"));
  const auto pn = estimate_pn(log_obs.occupancy, est_rng, c.estimators.pn);
  ctx.csv(pn_table(pn), "pn.csv");
  ctx.results["pn"] = {{"mean", pn.mean},        {"mean_err", pn.mean_err},   {"variance", pn.variance},
                       {"variance_err", pn.variance_err}, {"samples", pn.samples}, {"tau_int", pn.tau_int},
                       {"stride", pn.stride},    {"normalization", normalization_check(pn.histogram)}};
  if (c.potential.kind == PotentialKind::Ideal) {
    const auto law = binomial_law(c.universe.n_total, c.region.volume() / c.universe.volume());
    const auto chi = chi_square_test(pn.histogram.counts, law.p);
    ctx.results["binomial_chi_square"] = {{"statistic", chi.statistic}, {"dof", chi.dof}, {"p_value", chi.p_value}};
    ctx.log << "binomial chi-square p = " << chi.p_value << "\n";
  }
  if (c.engine.detect_crossings) {
    {
      std::ofstream os(ctx.file("events.csv"));
      write_event_csv(os, log_obs.events, c.engine.engine.dt);
    }
    const auto flux = estimate_flux(log_obs.events, log_obs.occupancy, c.engine.engine.dt, est_rng,
                                    c.estimators.flux_blocks, c.estimators.pn.resamples);
    ctx.csv(flux_table(flux), "flux.csv");
    std::size_t unbalanced = 0;
    for (std::size_t k = 0; k < flux.net_rate.size(); ++k)
      if (flux.net_err[k] > 0.0 && std::abs(flux.net_rate[k]) > 3.0 * flux.net_err[k]) ++unbalanced;
    ctx.results["flux"] = {{"edges", flux.net_rate.size()}, {"edges_beyond_3_sigma", unbalanced},
                           {"total_in_rate", flux.total_in_rate}, {"total_out_rate", flux.total_out_rate}};
  }
  ctx.results["steps"] = summary.steps;
  ctx.results["events"] = summary.events;
  ctx.log << "universe-md: <n> = " << pn.mean << " +- " << pn.mean_err << ", Var(n) = " << pn.variance << " +- "
          << pn.variance_err << " from " << pn.samples << " samples\n";
  return kExitOk;
}

int run_widom(Context& ctx) {
  const auto& c = ctx.config;
  Random rng(root_rng(c, "md"));
  Engine engine = make_engine(c, rng);
  FrameCollector frames(c.oracle.widom_frame_stride);
  Observer* obs[] = {&frames};
  RunOptions opts{c.engine.engine.steps, c.oracle.widom_frame_stride, false};
  run(engine, rng, opts, obs);
  Random wrng(root_rng(c, "widom"));
  const auto w = widom_mu(frames.frames, c.universe, PairPotential(c.potential), c.oracle.h, c.oracle.widom_insertions, wrng);
  CsvTable t{"Widom chemical potential", "energy (mu), 1/volume (density)",
             {"mu", "mu_err", "mu_excess", "mu_excess_err", "mu_ideal", "density", "insertions"},
             {{w.mu, w.mu_err, w.mu_excess, w.mu_excess_err, w.mu_ideal, w.density, double(w.insertions)}},
             {"frames: " + std::to_string(frames.frames.size())}};
  ctx.csv(t, "widom.csv");
  ctx.results["widom"] = {{"mu", w.mu}, {"mu_err", w.mu_err}, {"mu_excess", w.mu_excess}, {"density", w.density}};
  ctx.log << "widom: mu = " << w.mu << " +- " << w.mu_err << " (excess " << w.mu_excess << ")\n";
  return kExitOk;
}

int run_gcmc(Context& ctx) {
  const auto& c = ctx.config;
  const PairPotential pot(c.potential);
  const auto& box = c.gcmc.box;
  const GCParams params = c.gc_params(box.x * box.y * box.z);
  Random rng(root_rng(c, "gcmc"));
  std::ofstream jsonl(ctx.file("gcmc.jsonl"));
  const auto res = gcmc_sample(pot, params, c.gcmc, rng,
                               [&](const GCMCSample& s, std::span<const Vec3>) { write_gcmc_sample_jsonl(jsonl, s); });
  write_gcmc_checkpoint_jsonl(jsonl, res, rng.engine().key(), rng.engine().counter());
  std::vector<std::size_t> series;
  series.reserve(res.samples.size());
  for (const auto& s : res.samples) series.push_back(s.n);
  Random est_rng(root_rng(c, "estimators"));
  const auto pn = estimate_pn(series, est_rng, c.estimators.pn);
  ctx.csv(pn_table(pn), "pn.csv");
  ctx.results["pn"] = {{"mean", pn.mean}, {"mean_err", pn.mean_err}, {"variance", pn.variance},
                       {"variance_err", pn.variance_err}, {"samples", pn.samples}};
  ctx.results["acceptance"] = {{"displace", res.displace.rate()}, {"insert", res.insert.rate()},
                               {"delete", res.remove.rate()}};
  if (pot.is_ideal()) {
    const auto law = ideal_gas_pn(params);
    ctx.csv(law_table(law, "ideal-gas Poisson law"), "pn_oracle.csv");
    const auto chi = chi_square_test(pn.histogram.counts, law.p);
    ctx.results["poisson_chi_square"] = {{"statistic", chi.statistic}, {"dof", chi.dof}, {"p_value", chi.p_value}};
  }
  ctx.log << "gcmc: <n> = " << pn.mean << " +- " << pn.mean_err << ", Var(n) = " << pn.variance << "\n";
  return kExitOk;
}

int run_bl(Context& ctx) {
  const auto& c = ctx.config;
  const PairPotential pot(c.potential);
  BLKernelSpec kernel{c.bl.nu, c.gc_params(c.region.volume()), c.bl.n_cap, c.bl.birth_multiplier};
  const std::size_t R = c.bl.replicas;
  struct Shard {
    std::vector<JumpEvent> events;
    std::vector<std::size_t> series;
    double time = 0.0;
    double p2 = 0.0, p4 = 0.0;
    std::size_t components = 0;
    std::string error;
  };
  std::vector<Shard> shards(R);
  const CounterRng base = root_rng(c, "bl");
  auto work = [&](std::size_t r) {
    try {
      BLSimulator sim(kernel, pot, c.region, c.bl.flow_dt);
      Random rng(base.derive(r));
      BLState state;
      Shard& s = shards[r];
      double next_sample = 0.0;
      for (std::size_t k = 0; k < c.bl.steps; ++k) {
        const std::size_t n_before = state.particles.size();
        auto step = sim.step(state, c.bl.dt_max, rng);
        while (next_sample < state.time) {
          s.series.push_back(n_before);
          next_sample += c.bl.sample_dt;
        }
        if (step.jumped) {
          step.event.segment = r;
          s.events.push_back(step.event);
        }
      }
      s.time = state.time;
      s.p2 = sim.inserted_p2;
      s.p4 = sim.inserted_p4;
      s.components = sim.inserted_components;
    } catch (const std::exception& e) {
      shards[r].error = e.what();
    }
  };
  if (c.threads <= 1 || R == 1) {
    for (std::size_t r = 0; r < R; ++r) work(r);
  } else {
    std::vector<std::thread> pool;
    std::size_t next = 0;
    while (next < R) {
      pool.clear();
      for (std::size_t t = 0; t < c.threads && next < R; ++t) pool.emplace_back(work, next++);
      for (auto& th : pool) th.join();
    }
  }
  for (const auto& s : shards)
    if (!s.error.empty()) throw Error(ErrorCode::InconsistentLog, "bl replica failed: " + s.error);

  std::vector<JumpEvent> events;
  std::vector<std::size_t> series;
  double total_time = 0.0, p2 = 0.0, p4 = 0.0;
  std::size_t comps = 0;
  for (std::size_t r = 0; r < R; ++r) {
    events.insert(events.end(), shards[r].events.begin(), shards[r].events.end());
    series.insert(series.end(), shards[r].series.begin(), shards[r].series.end());
    total_time += shards[r].time;
    p2 += shards[r].p2;
    p4 += shards[r].p4;
    comps += shards[r].components;
  }
  {
    std::ofstream os(ctx.file("jumps.csv"));
    write_jump_csv(os, events);
  }
  Random est_rng(root_rng(c, "estimators"));
  const auto pn = estimate_pn(series, est_rng, c.estimators.pn);
  ctx.csv(pn_table(pn), "pn.csv");
  const auto bal = flux_balance_check(events, total_time, est_rng, R > 1 ? R : 0, 20,
                                      c.estimators.pn.resamples);
  CsvTable ft{"per-edge jump counts and net rates", "1/time", {"n", "up", "down", "net_rate", "net_err"}, {}, {}};
  for (std::size_t k = 0; k < bal.net_rate.size(); ++k)
    ft.rows.push_back({double(k), bal.up[k], bal.down[k], bal.net_rate[k], bal.net_err[k]});
  ft.notes = {"time: " + fmt(bal.time), "blocks: " + std::to_string(bal.blocks),
              std::string("balanced_3_sigma: ") + (bal.balanced(3.0) ? "true" : "false")};
  ctx.csv(ft, "flux_balance.csv");
  ctx.results["pn"] = {{"mean", pn.mean}, {"mean_err", pn.mean_err}, {"variance", pn.variance},
                       {"samples", pn.samples}};
  ctx.results["flux_balanced_3_sigma"] = bal.balanced(3.0);
  if (comps > 0) {
    const double MT = c.universe.mass * c.universe.temperature;
    ctx.results["inserted_momenta"] = {{"p2_over_MT", p2 / comps / MT}, {"p4_over_3MT2", p4 / comps / (3.0 * MT * MT)}};
  }
  if (pot.is_ideal()) {
    const auto law = ideal_gas_pn(kernel.params);
    const auto chi = chi_square_test(pn.histogram.counts, law.p);
    ctx.results["poisson_chi_square"] = {{"statistic", chi.statistic}, {"dof", chi.dof}, {"p_value", chi.p_value}};
    ctx.log << "bl: Poisson chi-square p = " << chi.p_value << "\n";
  }
  ctx.log << "bl: " << events.size() << " jumps, <n> = " << pn.mean << ", flux balanced: " << bal.balanced(3.0) << "\n";
  return kExitOk;
}

int run_grid(Context& ctx) {
  const auto& c = ctx.config;
  const auto& gs = c.grid.spec;
  const PairPotential pot(c.potential);
  const std::size_t N = c.grid.N;

  MeanFieldForceTable table;
  if (c.grid.mean_field_rho > 0.0 && !pot.is_ideal()) {
    const double rho = c.grid.mean_field_rho;
    table = MeanFieldForceTable::tabulate([&](double d) { return mean_field_normal_1d(rho, d, pot); }, 0.0,
                                          pot.cutoff(), 257);
  }
  ClosureSpec closure = c.grid.closure;
  if (closure.mode == ClosureMode::GrandCanonical) {
    closure.gc = c.gc_params(gs.b - gs.a);
    closure.gc.M = gs.M;
  }
  HierarchySolver solver(gs, closure, pot, N, table);

  std::optional<FullField> full;
  DensityField f;
  if (c.grid.init == "gaussian") {
    full = N == 1 ? gaussian_full_field(gs, c.grid.packet_a) : gaussian_pair_field(gs, c.grid.packet_a, c.grid.packet_b);
    f = marginalize(*full, gs);
  } else if (c.grid.init == "gc") {
    f = gc_fields(gs, closure.gc, pot, N);
  } else {
    f = empty_density_field(gs, N);
    f.f0 = 1.0;
  }
  std::optional<FullLiouvilleSolver> full_solver;
  if (c.grid.oracle == "full") {
    if (!full) throw Error(ErrorCode::ConfigInvalid, "the full-Liouville oracle needs Gaussian initial data");
    full_solver.emplace(gs, pot, N);
  }

  CsvTable mass{"hierarchy level masses", "probability", {"step", "time", "total"}, {}, {}};
  for (std::size_t n = 0; n <= N; ++n) mass.columns.push_back("m" + std::to_string(n));
  mass.columns.push_back("boundary_momentum_fraction");
  auto record = [&](std::size_t step) {
    std::vector<double> row{double(step), f.time, total_mass(f, gs)};
    for (std::size_t n = 0; n <= N; ++n) row.push_back(level_mass(f, gs, n));
    row.push_back(boundary_momentum_fraction(f, gs));
    mass.rows.push_back(std::move(row));
  };
  auto snapshot = [&](std::size_t step) {
    ctx.outputs.push_back("field_" + std::to_string(step) + ".bin");
    ctx.outputs.push_back("field_" + std::to_string(step) + ".json");
    write_snapshot(f, gs, (ctx.out / ("field_" + std::to_string(step))).string());
  };
  const double m0 = total_mass(f, gs);
  record(0);
  snapshot(0);
  for (std::size_t s = 1; s <= c.grid.steps; ++s) {
    solver.step(f);
    if (full_solver) full_solver->step(*full);
    record(s);
    if (c.grid.snapshot_every > 0 && s % c.grid.snapshot_every == 0 && s != c.grid.steps) snapshot(s);
  }
  if (c.grid.steps > 0) snapshot(c.grid.steps);
  ctx.csv(mass, "mass.csv");

  std::optional<DensityField> oracle;
  if (full) {
    if (c.grid.oracle == "full") oracle = marginalize(*full, gs);
    else if (c.grid.oracle == "exact") oracle = exact_free_flight(gs, c.grid.packet_a, f.time);
  }
  if (oracle) {
    const auto err = compare(f, *oracle, gs);
    CsvTable et{"hierarchy error against " + c.grid.oracle + " oracle", "probability (l1), density (linf)",
                {"n", "l1", "linf"}, {}, {"l1_total: " + fmt(err.l1_total)}};
    for (std::size_t n = 0; n < err.l1.size(); ++n) et.rows.push_back({double(n), err.l1[n], err.linf[n]});
    ctx.csv(et, "error.csv");
    ctx.results["l1_total"] = err.l1_total;
    ctx.log << "grid: l1 error against " << c.grid.oracle << " oracle = " << err.l1_total << "\n";
  }
  if (closure.mode == ClosureMode::GrandCanonical) {
    const auto g0 = gc_fields(gs, closure.gc, pot, N);
    ctx.results["stationary_residual"] = stationary_residual(solver, g0);
    ctx.results["truncation_estimate"] = truncation_estimate(solver, g0);
  }
  ctx.results["mass_drift"] = total_mass(f, gs) - m0;
  ctx.log << "grid: " << c.grid.steps << " steps, mass drift " << total_mass(f, gs) - m0 << "\n";
  return kExitOk;
}

struct Series {
  std::vector<double> n, v, e;
  std::map<std::string, std::pair<double, double>> moments;  // "mean: x +- e"
};

Series load_series(const std::string& path, const CompareSection& s) {
  const auto t = read_csv(path);
  const auto cn = column_index(t, t.columns.front());
  const auto cv = column_index(t, s.column);
  const auto ce = column_index(t, s.error_column);
  Series out;
  for (const auto& row : t.rows) {
    out.n.push_back(row[cn]);
    out.v.push_back(row[cv]);
    out.e.push_back(row[ce]);
  }
  for (const auto& note : t.notes) {
    for (const char* key : {"mean", "variance"}) {
      const std::string k = std::string(key) + ":";
      if (note.rfind(k, 0) != 0) continue;
      std::istringstream is(note.substr(k.size()));
      double x = 0, e = 0;
      std::string pm;
      if (is >> x >> pm >> e && pm == "+-") out.moments[key] = {x, e};
    }
  }
  return out;
}

int run_compare(Context& ctx) {
  const auto& s = ctx.config.compare;
  const auto A = load_series(s.a, s);
  const auto B = load_series(s.b, s);
  CsvTable t{"per-bin comparison " + s.column, "dimensionless",
             {"n", "a", "a_err", "b", "b_err", "z"}, {}, {}};
  double chi2 = 0.0;
  std::size_t dof = 0;
  double max_abs_z = 0.0;
  std::map<long long, std::size_t> ia, ib;
  for (std::size_t k = 0; k < A.n.size(); ++k) ia[std::llround(A.n[k])] = k;
  for (std::size_t k = 0; k < B.n.size(); ++k) ib[std::llround(B.n[k])] = k;
  std::set<long long> keys;
  for (auto& [k, _] : ia) keys.insert(k);
  for (auto& [k, _] : ib) keys.insert(k);
  for (long long k : keys) {
    const double a = ia.count(k) ? A.v[ia[k]] : 0.0, ea = ia.count(k) ? A.e[ia[k]] : 0.0;
    const double b = ib.count(k) ? B.v[ib[k]] : 0.0, eb = ib.count(k) ? B.e[ib[k]] : 0.0;
    double z = 0.0;
    if (ea > 0.0 || eb > 0.0) {
      z = z_score(a, ea, b, eb);
      chi2 += z * z;
      ++dof;
      max_abs_z = std::max(max_abs_z, std::abs(z));
    }
    t.rows.push_back({double(k), a, ea, b, eb, z});
  }
  double p_value = 1.0;
  if (dof > 0) {
    p_value = boost::math::gamma_q(0.5 * double(dof), 0.5 * chi2);
  }
  bool agree = p_value > s.alpha;
  nlohmann::json moments = nlohmann::json::object();
  for (const char* key : {"mean", "variance"}) {
    if (!A.moments.count(key) || !B.moments.count(key)) continue;
    const auto [a, ea] = A.moments.at(key);
    const auto [b, eb] = B.moments.at(key);
    const double z = z_score(a, ea, b, eb);
    moments[key] = {{"a", a}, {"a_err", ea}, {"b", b}, {"b_err", eb}, {"z", z}};
    if (!(std::abs(z) <= s.k_sigma)) agree = false;
    t.notes.push_back(std::string(key) + "_z: " + fmt(z));
  }
  t.notes.push_back("chi_square: " + fmt(chi2) + " dof " + std::to_string(dof) + " p " + fmt(p_value));
  t.notes.push_back(std::string("verdict: ") + (agree ? "agree" : "disagree"));
  ctx.csv(t, "compare.csv");
  ctx.results["chi_square"] = chi2;
  ctx.results["dof"] = dof;
  ctx.results["p_value"] = p_value;
  ctx.results["max_abs_z"] = max_abs_z;
  ctx.results["moments"] = moments;
  ctx.results["verdict"] = agree ? "agree" : "disagree";
  ctx.log << "compare: " << (agree ? "agree" : "disagree") << " (per-bin chi-square p = " << p_value
          << ", max |z| = " << max_abs_z << ")\n";
  return agree ? kExitOk : kExitAcceptance;
}

int run_report(Context& ctx) {
  CsvTable t{"summary of estimate tables", "mixed", {"file", "rows", "sum_p", "normalization_residual"}, {}, {}};
  std::size_t k = 0;
  for (const auto& path : ctx.config.report.inputs) {
    const auto in = read_csv(path);
    double sum = std::nan("");
    for (std::size_t c = 0; c < in.columns.size(); ++c)
      if (in.columns[c] == "p") {
        sum = 0.0;
        for (const auto& row : in.rows) sum += row[c];
      }
    t.rows.push_back({double(k), double(in.rows.size()), sum, std::isnan(sum) ? sum : sum - 1.0});
    t.notes.push_back("file " + std::to_string(k) + ": " + path + " (" + in.quantity + ")");
    ctx.log << path << ": " << in.rows.size() << " rows";
    if (!std::isnan(sum)) ctx.log << ", sum p = " << fmt(sum);
    ctx.log << "\n";
    ++k;
  }
  ctx.csv(t, "report.csv");
  return kExitOk;
}

}  // namespace

int run_scenario(const std::string& subcommand, const RunArgs& args, std::ostream& log) {
  static const std::set<std::string> subs = {"universe-md", "grid", "bl", "gcmc", "widom", "compare", "report"};
  if (!subs.count(subcommand)) {
    log << "error: unknown subcommand '" << subcommand << "'\n";
    return kExitConfig;
  }
  ScenarioConfig config;
  try {
    config = load_config(args.config);
    if (args.seed) {
      config.seed = *args.seed;
      config.universe.seed = *args.seed;
    }
    if (args.threads) config.threads = *args.threads;
    if (args.out) config.out = *args.out;
    validate_for(config, subcommand);
    for (const auto& w : config.warnings) log << "warning: " << w << "\n";
  } catch (const Error& e) {
    log << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    log << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  try {
    Context ctx{config, subcommand, fs::path(config.out), log, {}, {}};
    fs::create_directories(ctx.out);
    int code = kExitOk;
    if (subcommand == "universe-md") code = run_universe_md(ctx);
    else if (subcommand == "widom") code = run_widom(ctx);
    else if (subcommand == "gcmc") code = run_gcmc(ctx);
    else if (subcommand == "bl") code = run_bl(ctx);
    else if (subcommand == "grid") code = run_grid(ctx);
    else if (subcommand == "compare") code = run_compare(ctx);
    else code = run_report(ctx);
    write_manifest(ctx);
    return code;
  } catch (const Error& e) {
    log << subcommand << " error: " << e.what() << "\n";
    const auto c = e.code();
    return (c == ErrorCode::ConfigInvalid || c == ErrorCode::CFLViolation || c == ErrorCode::BoxTooSmall) ? kExitConfig
                                                                                                       : kExitRuntime;
  } catch (const std::exception& e) {
    log << subcommand << " error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace olv
