// Acceptance suite: one PASS/FAIL line per criterion, tolerances fixed below.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "olv/bl.hpp"
#include "olv/error.hpp"
#include "olv/estimators.hpp"
#include "olv/gc_oracle.hpp"
#include "olv/grid.hpp"
#include "olv/md.hpp"
#include "olv/stats.hpp"

using namespace olv;

namespace {

// A1
constexpr std::size_t kA1Particles = 1000;
constexpr double kA1Fraction = 0.1;
constexpr std::size_t kA1MinSamples = 100000;
constexpr double kA1MinP = 0.01;
constexpr double kA1MaxSeconds = 300.0;
// A2
constexpr double kA2NormTol = 1e-12;
constexpr double kA2MassTol = 1e-10;
constexpr std::size_t kA2Steps = 1000;
// A3
constexpr double kA3BaselineL1 = 0.02;
constexpr double kA3MinRatio = 1.8;
constexpr double kA3PairL1 = 0.05;
constexpr double kA3MaxSeconds = 600.0;
// A4
constexpr double kA4Sigmas = 3.0;
// A5
constexpr double kA5Sigmas = 3.0;
constexpr double kA5MaxSeconds = 1800.0;
// A6
constexpr double kA6MinP = 0.01;
constexpr double kA6MomentTol = 0.01;
// A7
constexpr double kA7RelTol = 0.01;
// A8
constexpr double kA8IdealTol = 1e-12;
// A9
constexpr double kA9BoundaryTol = 1e-10;

constexpr std::uint64_t kSeed = 20240601;

struct Outcome {
  std::string id;
  bool pass = false;
  std::string detail;
};

std::vector<Outcome> outcomes;
std::vector<double> normalization_residuals;  // every occupancy histogram built below
double max_boundary_fraction = 0.0;            // over every hierarchy step taken below

void record(std::string id, bool pass, const std::string& detail) {
  std::fprintf(stderr, "  %s %s: %s\n", id.c_str(), pass ? "ok" : "red", detail.c_str());
  outcomes.push_back({std::move(id), pass, detail});
}

template <class... T>
std::string fmt(const T&... xs) {
  std::ostringstream os;
  os.precision(6);
  (os << ... << xs);
  return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void track(const OccupancyHistogram& h) { normalization_residuals.push_back(std::abs(normalization_check(h) - 1.0)); }

void track(const HierarchyStepInfo& info) { max_boundary_fraction = std::max(max_boundary_fraction, info.boundary_fraction); }

UniverseSpec cube_universe(double L, std::size_t n) {
  UniverseSpec u;
  u.box_lengths = {L, L, L};
  u.n_total = n;
  return u;
}

RegionSpec centered_cube(double L, double side, double delta) {
  RegionSpec r;
  const double lo = 0.5 * (L - side);
  r.omega_lo = {lo, lo, lo};
  r.omega_hi = {lo + side, lo + side, lo + side};
  r.delta_thickness = delta;
  return r;
}

class OccupancySeries : public Observer {
 public:
  void on_step(std::size_t, double, std::size_t n) override { series.push_back(n); }
  std::vector<std::size_t> series;
};

// ------------------------------------------------------------------ A1

void a1_ideal_binomial() {
  const auto t0 = std::chrono::steady_clock::now();
  const double L = 10.0;
  const auto u = cube_universe(L, kA1Particles);
  const auto r = centered_cube(L, L * std::cbrt(kA1Fraction), 2.0);
  EngineConfig cfg;
  cfg.dt = 0.25;
  Engine e(u, r, PairPotential{}, cfg);
  Random rng(CounterRng(kSeed).derive("a1"));
  e.set_state(random_initial_state(u, rng));
  OccupancySeries occ;
  Observer* obs[] = {&occ};
  run(e, rng, RunOptions{1500000, 0, false}, obs);
  const auto est = estimate_pn(occ.series, rng);
  track(est.histogram);
  const auto law = binomial_law(kA1Particles, r.volume() / u.volume());
  const auto chi = chi_square_test(est.histogram.counts, law.p);
  const double secs = seconds_since(t0);
  record("A1", est.samples >= kA1MinSamples && chi.p_value > kA1MinP && secs < kA1MaxSeconds,
         fmt("ideal N=", kA1Particles, " |Omega|/|U|=", r.volume() / u.volume(), ": ", est.samples,
             " decorrelated samples (tau ", est.tau_int, " frames, stride ", est.stride, "), chi2 p=", chi.p_value,
             ", ", secs, " s"));
}

// ------------------------------------------------------------ grid setups

GridSpec grid(std::size_t nx, std::size_t np, double dt) {
  GridSpec g;
  g.L = 10.0;
  g.a = 2.0;
  g.b = 8.0;
  g.nx = nx;
  g.np = np;
  g.p_max = 8.0;
  g.dt = dt;
  return g;
}

PairPotential grid_soft() { return PairPotential({PotentialKind::SoftGaussian, 1.0, 0.5, 2.5}); }

ClosureSpec gc_closure() {
  ClosureSpec cl;
  cl.mode = ClosureMode::GrandCanonical;
  cl.gc.mu = -1.0;
  return cl;
}

// ------------------------------------------------------------------ A2

void a2_normalization_and_mass() {
  const auto g = grid(60, 48, 0.01);
  ClosureSpec cl;
  cl.reservoir = {0.3, 1.0, 0.0};
  HierarchySolver s(g, cl, grid_soft(), 2);
  auto f = empty_density_field(g, 2);
  f.f0 = 1.0;
  double drift = 0.0;
  for (std::size_t k = 0; k < kA2Steps; ++k) {
    track(s.step(f));
    drift = std::max(drift, std::abs(total_mass(f, g) - 1.0));
  }
  const double worst = normalization_residuals.empty()
                           ? 0.0
                           : *std::max_element(normalization_residuals.begin(), normalization_residuals.end());
  record("A2", !normalization_residuals.empty() && worst <= kA2NormTol && drift <= kA2MassTol,
         fmt(normalization_residuals.size(), " histograms, worst |sum-1|=", worst, "; N=2 60x48 hierarchy with reservoir, ",
             kA2Steps, " steps, max |mass-1|=", drift));
}

// ------------------------------------------------------------------ A3

double n1_error(std::size_t nx, std::size_t np, double dt, std::size_t steps) {
  const auto g = grid(nx, np, dt);
  const Gaussian1 g0{5.0, 0.8, 0.0, 1.0};
  HierarchySolver s(g, ClosureSpec{}, PairPotential{}, 1);
  auto f = gaussian_density_field(g, g0);
  for (std::size_t k = 0; k < steps; ++k) track(s.step(f));
  return compare(f, exact_free_flight(g, g0, f.time), g).l1_total;
}

void a3_hierarchy_vs_marginalization() {
  const auto t0 = std::chrono::steady_clock::now();
  const double coarse = n1_error(400, 200, 0.0025, 200);
  const double fine = n1_error(800, 400, 0.00125, 400);
  const double ratio = coarse / fine;

  const auto g = grid(60, 48, 0.015);
  const Gaussian1 a{4.3, 0.35, 0.5, 0.8}, b{5.7, 0.35, -0.5, 0.8};
  FullLiouvilleSolver full(g, grid_soft(), 2);
  HierarchySolver h(g, ClosureSpec{}, grid_soft(), 2);
  FullField F = gaussian_pair_field(g, a, b);
  auto f = marginalize(F, g);
  for (std::size_t k = 0; k < 133; ++k) {
    full.step(F);
    track(h.step(f));
  }
  const auto err = compare(f, marginalize(F, g), g);
  const double secs = seconds_since(t0);

  record("A3",
         coarse <= kA3BaselineL1 && ratio >= kA3MinRatio && err.l1_total <= kA3PairL1 && secs < kA3MaxSeconds,
         fmt("N=1 L1 ", coarse, " -> ", fine, " (ratio ", ratio, "); N=2 60x48 at t=", f.time, " L1 ", err.l1_total,
             " (f0 ", err.l1[0], ", f1 ", err.l1[1], ", f2 ", err.l1[2], "); ", secs, " s"));
}

// ------------------------------------------------------------------ A4/A5

struct OpenRun {
  std::vector<std::size_t> occupancy;
  std::vector<LoggedEvent> events;
  double dt = 0.0;
  double density = 0.0;
  RegionSpec omega;
  UniverseSpec universe;
};

const PairPotential& wca() {
  static const PairPotential v({PotentialKind::WCA, 1.0, 1.0, 2.5});
  return v;
}

EngineConfig wca_engine(ThermostatMask mask) {
  EngineConfig cfg;
  cfg.dt = 0.005;
  cfg.thermostat = ThermostatKind::Langevin;
  cfg.gamma = 1.0;
  cfg.mask = mask;
  return cfg;
}

constexpr double kWcaL = 12.0;
constexpr std::size_t kWcaN = 691;  // rho = 0.3999
constexpr double kOmegaSide = 4.0;

WidomResult closed_widom() {
  const auto u = cube_universe(kWcaL, kWcaN);
  const auto r = centered_cube(kWcaL, kOmegaSide, 1.0);
  Engine e(u, r, wca(), wca_engine(ThermostatMask::Everywhere));
  Random rng(CounterRng(kSeed).derive("widom"));
  e.set_state(random_initial_state(u, rng, 0.9));
  for (int i = 0; i < 10000; ++i) e.step(rng);
  std::vector<SimState> frames;
  for (int k = 0; k < 400; ++k) {
    for (int i = 0; i < 100; ++i) e.step(rng);
    frames.push_back(e.state());
  }
  return widom_mu(frames, u, wca(), 1.0, 1000, rng);
}

OpenRun open_md(std::size_t steps) {
  OpenRun out;
  out.universe = cube_universe(kWcaL, kWcaN);
  out.omega = centered_cube(kWcaL, kOmegaSide, 1.0);
  out.density = static_cast<double>(kWcaN) / out.universe.volume();
  const auto cfg = wca_engine(ThermostatMask::OutsideOmegaOnly);
  out.dt = cfg.dt;
  Engine e(out.universe, out.omega, wca(), cfg);
  Random rng(CounterRng(kSeed).derive("open-md"));
  e.set_state(random_initial_state(out.universe, rng, 0.9));
  for (int i = 0; i < 20000; ++i) e.step(rng);
  EventLogObserver log;
  Observer* obs[] = {&log};
  run(e, rng, RunOptions{steps, 0, true}, obs);
  out.occupancy = std::move(log.occupancy);
  out.events = std::move(log.events);
  return out;
}

PnEstimate gcmc_occupancy(double mu, std::size_t sweeps) {
  GCParams p;
  p.mu = mu;
  p.volume_omega = kOmegaSide * kOmegaSide * kOmegaSide;
  GCMCConfig cfg;
  cfg.box = {kOmegaSide, kOmegaSide, kOmegaSide};
  cfg.sweeps = sweeps;
  cfg.burn_in = 2000;
  cfg.moves_per_sweep = 100;
  cfg.n_initial = 25;
  Random rng(CounterRng(kSeed).derive("gcmc"));
  const auto r = gcmc_sample(wca(), p, cfg, rng);
  std::vector<std::size_t> n;
  n.reserve(r.samples.size());
  for (const auto& s : r.samples) n.push_back(s.n);
  return estimate_pn(n, rng);
}

void a4_a5_open_md() {
  const auto start = std::chrono::steady_clock::now();
  auto t0 = start;
  const auto w = closed_widom();
  std::fprintf(stderr, "  widom mu=%.5f +- %.5f (mu_ex %.5f, density %.5f), %.1f s\n", w.mu, w.mu_err, w.mu_excess,
               w.density, seconds_since(t0));

  t0 = std::chrono::steady_clock::now();
  const auto md = open_md(1000000);
  std::fprintf(stderr, "  open MD: %zu steps, %zu crossings, %.1f s\n", md.occupancy.size() - 1, md.events.size(),
               seconds_since(t0));
  Random rng(CounterRng(kSeed).derive("a4"));
  const auto flux = estimate_flux(md.events, md.occupancy, md.dt, rng);
  std::size_t bad = 0, active = 0;
  double worst = 0.0;
  for (std::size_t k = 0; k < flux.net_rate.size(); ++k) {
    if (flux.record.in[k] + flux.record.out[k] == 0.0) continue;
    ++active;
    const double z = flux.net_err[k] > 0.0 ? std::abs(flux.net_rate[k]) / flux.net_err[k]
                                           : (flux.net_rate[k] == 0.0 ? 0.0 : INFINITY);
    worst = std::max(worst, z);
    if (z > kA4Sigmas) ++bad;
  }

  // Birth/death chain at the same activity as the ideal reference below.
  BLKernelSpec k;
  k.nu = 1.0;
  k.params.mu = -2.0;
  RegionSpec bl_omega;
  bl_omega.omega_lo = {1.0, 1.0, 1.0};
  bl_omega.omega_hi = {3.0, 3.0, 3.0};
  BLSimulator sim(k, PairPotential{}, bl_omega);
  Random brng(CounterRng(kSeed).derive("a4-bl"));
  BLState s;
  std::vector<JumpEvent> jumps;
  const double T = 20000.0;
  while (s.time < T) {
    const auto res = sim.step(s, T - s.time, brng);
    if (res.jumped) jumps.push_back(res.event);
  }
  const auto bl = flux_balance_check(jumps, T, brng, 0, 20);
  double bl_worst = 0.0;
  for (std::size_t e = 0; e < bl.net_rate.size(); ++e)
    if (bl.net_err[e] > 0.0) bl_worst = std::max(bl_worst, std::abs(bl.net_rate[e]) / bl.net_err[e]);

  record("A4", bad == 0 && bl.balanced(kA4Sigmas),
         fmt("open MD: ", active, " active edges, worst |net|/sigma=", worst, "; BL chain: ", bl.net_rate.size(),
             " edges, worst |net|/sigma=", bl_worst));

  t0 = std::chrono::steady_clock::now();
  const auto gc = gcmc_occupancy(w.mu, 1000000);
  track(gc.histogram);
  std::fprintf(stderr, "  GCMC: %zu samples, %.1f s\n", gc.samples, seconds_since(t0));
  Random prng(CounterRng(kSeed).derive("a5"));
  const auto open = estimate_pn(md.occupancy, prng);
  track(open.histogram);
  const double zm = z_score(open.mean, open.mean_err, gc.mean, gc.mean_err);
  const double zv = z_score(open.variance, open.variance_err, gc.variance, gc.variance_err);
  const double secs = seconds_since(start);
  record("A5", std::abs(zm) <= kA5Sigmas && std::abs(zv) <= kA5Sigmas && secs < kA5MaxSeconds,
         fmt("mu=", w.mu, "+-", w.mu_err, "; <n> open ", open.mean, "+-", open.mean_err, " vs GCMC ", gc.mean, "+-",
             gc.mean_err, " (z ", zm, "); Var(n) open ", open.variance, "+-", open.variance_err, " vs GCMC ",
             gc.variance, "+-", gc.variance_err, " (z ", zv, "); ", secs, " s"));
}

// ------------------------------------------------------------------ A6

void a6_bl_ideal() {
  BLKernelSpec k;
  k.nu = 1.0;
  k.params.mu = -2.0;
  RegionSpec r;
  r.omega_lo = {1.0, 1.0, 1.0};
  r.omega_hi = {3.0, 3.0, 3.0};
  BLSimulator sim(k, PairPotential{}, r);
  GCParams gp = k.params;
  gp.volume_omega = r.volume();
  const auto law = ideal_gas_pn(gp);
  Random rng(CounterRng(kSeed).derive("a6"));
  BLState s;
  OccupancyHistogram h;
  const double sample_dt = 1.0;
  double next = sample_dt;
  while (s.time < 1e5) {
    sim.step(s, next - s.time, rng);
    if (s.time >= next) {
      h.add(s.particles.size());
      next += sample_dt;
    }
  }
  track(h);
  const auto chi = chi_square_test(h.counts, law.p);
  const double m = static_cast<double>(sim.inserted_components);
  const double p2 = sim.inserted_p2 / m, p4 = sim.inserted_p4 / m;
  const double MT = gp.M / gp.beta;
  const double e2 = std::abs(p2 / MT - 1.0), e4 = std::abs(p4 / (3.0 * MT * MT) - 1.0);
  record("A6", chi.p_value > kA6MinP && e2 <= kA6MomentTol && e4 <= kA6MomentTol,
         fmt("lambda ", law.mean(), ", ", h.total, " samples, chi2 p=", chi.p_value, "; inserted <p^2> rel err ", e2,
             ", <p^4> rel err ", e4, " over ", sim.inserted_components, " components"));
}

// ------------------------------------------------------------------ A7

double cylinder_oracle(double rho, double d, const PairPotential& v, std::size_t nz, std::size_t nu) {
  const double rc = v.cutoff();
  if (d >= rc) return 0.0;
  double total = 0.0;
  const double hz = (rc - d) / static_cast<double>(nz);
  for (std::size_t i = 0; i < nz; ++i) {
    const double z = d + (static_cast<double>(i) + 0.5) * hz;
    const double umax = rc * rc - z * z;
    const double hu = umax / static_cast<double>(nu);
    double inner = 0.0;
    for (std::size_t j = 0; j < nu; ++j) inner += -v.force_over_r(z * z + (static_cast<double>(j) + 0.5) * hu) * z;
    total += inner * hu * std::numbers::pi;
  }
  return rho * total * hz;
}

void a7_mean_field() {
  const double rho = 0.4, d = 0.5;
  const double f = mean_field_normal(UniformDensity{rho}, d, wca());
  const double oracle = cylinder_oracle(rho, d, wca(), 4000, 4000);
  const double rel = std::abs(f - oracle) / std::abs(oracle);
  const double rc = wca().cutoff();
  bool zero = true;
  for (double x : {rc, rc + 1e-9, rc + 0.3, 2.0 * rc})
    zero = zero && mean_field_normal(UniformDensity{rho}, x, wca()) == 0.0;
  record("A7", rel <= kA7RelTol && zero,
         fmt("WCA rho=0.4 d=0.5: F=", f, " oracle ", oracle, " rel ", rel, "; zero beyond cutoff: ",
             zero ? "yes" : "no"));
}

// ------------------------------------------------------------------ A8/A9

void a8_gc_residual() {
  ClosureSpec ideal = gc_closure();
  ideal.gc.mu = -2.0;
  const auto gi = grid(30, 24, 0.02);
  HierarchySolver si(gi, ideal, PairPotential{}, 2);
  const auto fi = gc_fields(gi, ideal.gc, PairPotential{}, 2);
  const double ri = stationary_residual(si, fi), ei = truncation_estimate(si, fi);
  max_boundary_fraction = std::max(max_boundary_fraction, boundary_momentum_fraction(fi, gi));

  const auto cl = gc_closure();
  double r[2], e[2];
  const GridSpec gs[2] = {grid(30, 24, 0.02), grid(60, 48, 0.01)};
  for (int k = 0; k < 2; ++k) {
    HierarchySolver s(gs[k], cl, grid_soft(), 2);
    const auto f = gc_fields(gs[k], cl.gc, grid_soft(), 2);
    max_boundary_fraction = std::max(max_boundary_fraction, boundary_momentum_fraction(f, gs[k]));
    r[k] = stationary_residual(s, f);
    e[k] = truncation_estimate(s, f);
  }
  record("A8", ri <= kA8IdealTol && ei == 0.0 && r[0] <= e[0] && r[1] <= e[1] && r[1] < r[0],
         fmt("ideal residual ", ri, " (estimate ", ei, "); soft N=2 residual ", r[0], " <= ", e[0], " at 30x24, ",
             r[1], " <= ", e[1], " at 60x48"));
}

void a9_boundary() {
  record("A9", max_boundary_fraction < kA9BoundaryTol,
         fmt("p_max = 8 sqrt(MT): max outermost-cell mass fraction ", max_boundary_fraction,
             " over every hierarchy step and GC field"));
}

template <class F>
void guarded(const char* id, F&& f) {
  const auto t0 = std::chrono::steady_clock::now();
  std::fprintf(stderr, "[%s] running\n", id);
  try {
    f();
  } catch (const std::exception& e) {
    record(id, false, std::string("error: ") + e.what());
  }
  std::fprintf(stderr, "[%s] %.1f s\n", id, seconds_since(t0));
}

}  // namespace

int main() {
  guarded("A7", a7_mean_field);
  guarded("A8", a8_gc_residual);
  guarded("A3", a3_hierarchy_vs_marginalization);
  guarded("A1", a1_ideal_binomial);
  guarded("A6", a6_bl_ideal);
  guarded("A4/A5", a4_a5_open_md);
  guarded("A2", a2_normalization_and_mass);
  guarded("A9", a9_boundary);

  std::sort(outcomes.begin(), outcomes.end(), [](const Outcome& a, const Outcome& b) { return a.id < b.id; });
  int failed = 0;
  for (const auto& o : outcomes) {
    std::printf("%s %s  %s\n", o.id.c_str(), o.pass ? "PASS" : "FAIL", o.detail.c_str());
    failed += o.pass ? 0 : 1;
  }
  std::fflush(stdout);
  return failed == 0 ? 0 : 1;
}
