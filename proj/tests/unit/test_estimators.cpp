#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>

#include <boost/math/distributions/binomial.hpp>
#include <boost/math/distributions/normal.hpp>

#include "olv/error.hpp"
#include "olv/estimators.hpp"
#include "olv/md.hpp"
#include "olv/stats.hpp"

using namespace olv;

namespace {

UniverseSpec box(double L, std::size_t n = 0) {
  UniverseSpec u;
  u.box_lengths = {L, L, L};
  u.n_total = n;
  return u;
}

RegionSpec cube(double lo, double hi, double delta = 0.0) {
  RegionSpec r;
  r.omega_lo = {lo, lo, lo};
  r.omega_hi = {hi, hi, hi};
  r.delta_thickness = delta;
  return r;
}

std::optional<ErrorCode> code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

// Normal component of the mean force by direct cylindrical midpoint
// integration over the half-space beyond the face.
double cylinder_oracle(double rho, double d, const PairPotential& v, std::size_t nz, std::size_t nu) {
  const double rc = v.cutoff();
  double total = 0.0;
  const double hz = (rc - d) / static_cast<double>(nz);
  for (std::size_t i = 0; i < nz; ++i) {
    const double z = d + (static_cast<double>(i) + 0.5) * hz;
    const double umax = rc * rc - z * z;
    const double hu = umax / static_cast<double>(nu);
    double inner = 0.0;
    for (std::size_t j = 0; j < nu; ++j) {
      const double r2 = z * z + (static_cast<double>(j) + 0.5) * hu;
      // Force on the inner particle along the outward normal: -force_over_r * z.
      inner += -v.force_over_r(r2) * z;
    }
    total += inner * hu * std::numbers::pi;  // 2 pi s ds = pi du
  }
  return rho * total * hz;
}

}  // namespace

TEST_CASE("constant occupancy gives a point mass") {
  std::vector<std::size_t> series(500, 3);
  Random rng(1);
  const auto est = estimate_pn(series, rng, PnOptions{1, 2.0, 50, 20});
  REQUIRE(est.p.size() == 4);
  CHECK(est.p[3] == 1.0);
  CHECK(est.p[0] == 0.0);
  CHECK(est.p_err[3] == 0.0);
  CHECK(normalization_check(est.histogram) == 1.0);
}

TEST_CASE("normalization holds for arbitrary histograms") {
  Random rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    OccupancyHistogram h;
    const auto bins = 1 + rng.below(50);
    for (std::size_t k = 0; k < bins; ++k) h.add(rng.below(200), rng.uniform(0.0, 7.0) + 1e-3);
    CHECK(std::abs(normalization_check(h) - 1.0) <= 1e-12);
  }
  OccupancyHistogram one;
  one.add(0);
  CHECK(normalization_check(one) == 1.0);
}

TEST_CASE("histograms merge associatively") {
  OccupancyHistogram a, b, c;
  a.add(1);
  a.add(4);
  b.add(2, 3.0);
  c.add(7);
  OccupancyHistogram ab = a;
  ab.merge(b);
  ab.merge(c);
  OccupancyHistogram bc = b;
  bc.merge(c);
  OccupancyHistogram a_bc = a;
  a_bc.merge(bc);
  CHECK(ab.counts == a_bc.counts);
  CHECK(ab.total == a_bc.total);
}

TEST_CASE("negative weights and corrupted counts are rejected") {
  OccupancyHistogram h;
  CHECK_THROWS_AS(h.add(1, -1.0), Error);
  h.add(1);
  h.counts[0] = -1.0;
  CHECK_THROWS_AS(normalization_check(h), Error);
  CHECK_THROWS_AS(normalization_check(OccupancyHistogram{}), Error);
}

TEST_CASE("too short series raise TooFewSamples") {
  std::vector<std::size_t> series(10, 1);
  Random rng(1);
  CHECK(code_of([&] { estimate_pn(series, rng); }) == ErrorCode::TooFewSamples);
}

TEST_CASE("iid ideal-gas occupancy follows the binomial law") {
  const std::size_t N = 1000;
  const double frac = 0.1;
  Random rng(42);
  std::vector<std::size_t> series;
  for (int f = 0; f < 4000; ++f) {
    std::size_t n = 0;
    for (std::size_t i = 0; i < N; ++i) n += rng.uniform() < frac ? 1 : 0;
    series.push_back(n);
  }
  const auto est = estimate_pn(series, rng);
  CHECK(est.stride <= 2);
  boost::math::binomial_distribution<double> law(static_cast<double>(N), frac);
  std::vector<double> probs(est.histogram.counts.size());
  for (std::size_t n = 0; n < probs.size(); ++n) probs[n] = boost::math::pdf(law, static_cast<double>(n));
  probs.back() += boost::math::cdf(boost::math::complement(law, static_cast<double>(probs.size() - 1)));
  const auto chi = chi_square_test(est.histogram.counts, probs);
  MESSAGE("chi2 p = " << chi.p_value);
  CHECK(chi.p_value > 1e-3);
  CHECK(std::abs(est.mean - 100.0) < 4.0 * est.mean_err);
}

TEST_CASE("flux with no events is zero") {
  std::vector<std::size_t> occ(101, 4);
  Random rng(1);
  const auto est = estimate_flux({}, occ, 0.01, rng);
  CHECK(est.total_in_rate == 0.0);
  CHECK(est.total_out_rate == 0.0);
  for (double r : est.net_rate) CHECK(r == 0.0);
}

TEST_CASE("flux records follow occupancy increments") {
  std::vector<std::size_t> occ = {1, 2, 2, 1, 1};
  std::vector<LoggedEvent> ev = {{1, {0, Direction::In, 0, 0.1}},
                                 {2, {0, Direction::Out, 0, 0.2}},
                                 {2, {1, Direction::In, 1, 0.3}},
                                 {3, {1, Direction::Out, 1, 0.5}}};
  Random rng(1);
  const auto est = estimate_flux(ev, occ, 1.0, rng, 2, 50);
  CHECK(est.record.in[1] == 2.0);
  CHECK(est.record.out[1] == 2.0);
  CHECK(est.record.time == 4.0);
  CHECK(est.total_in_rate == 0.5);
  ev.pop_back();
  CHECK(code_of([&] { estimate_flux(ev, occ, 1.0, rng); }) == ErrorCode::InconsistentLog);
}

TEST_CASE("ideal-gas effusion matches the kinetic formula") {
  const double rho = 0.1;
  const double L = 20.0;
  const auto u = box(L, static_cast<std::size_t>(rho * L * L * L));
  const auto r = cube(5.0, 15.0, 1.0);
  EngineConfig cfg;
  cfg.dt = 0.05;
  Engine e(u, r, PairPotential{}, cfg);
  Random rng(11);
  e.set_state(random_initial_state(u, rng));
  EventLogObserver log;
  Observer* obs[] = {&log};
  run(e, rng, RunOptions{2000, 0, true}, obs);
  const auto est = estimate_flux(log.events, log.occupancy, cfg.dt, rng);
  const double per_area = est.total_in_rate / r.surface_area();
  const double sigma = std::sqrt(est.total_in_rate * est.record.time) / est.record.time / r.surface_area();
  const double oracle = effusion_rate(rho, 1.0, 1.0);
  CHECK(oracle == doctest::Approx(0.0398942).epsilon(1e-5));
  MESSAGE("effusion " << per_area << " +- " << sigma << " vs " << oracle);
  CHECK(std::abs(per_area - oracle) < 4.0 * sigma);
  CHECK(std::abs(est.total_in_rate - est.total_out_rate) < 3.0 * std::hypot(est.total_in_err, est.total_out_err) + 1e-12);
}

TEST_CASE("ideal-gas conditional pair density is flat beyond the face") {
  const double L = 16.0, rho = 0.3;
  const auto u = box(L);
  const auto r = cube(4.0, 12.0);
  Random rng(3);
  F2Binning b{2.5, 5, 10, 5};
  ConditionalPairEstimate est(b);
  const auto n = static_cast<std::size_t>(rho * L * L * L);
  for (int f = 0; f < 30; ++f) {
    SimState s;
    for (std::size_t i = 0; i < n; ++i) s.particles.push_back({{rng.uniform(0, L), rng.uniform(0, L), rng.uniform(0, L)}, {}});
    accumulate_f2_conditional(est, s, u, r);
  }
  CHECK(est.empty_conditioning_bins().empty());
  for (std::size_t kd = 0; kd < b.d_bins; ++kd) {
    double counts = 0.0, expected = 0.0, slice = 0.0;
    const double d_hi = (static_cast<double>(kd) + 1) * est.d_width();
    for (std::size_t kz = 0; kz < b.z_bins; ++kz)
      for (std::size_t ks = 0; ks < b.s_bins; ++ks) {
        slice += est.probability(kd, kz, ks);
        const double z_lo = est.z_center(kz) - 0.5 * est.z_width();
        if (z_lo < d_hi) continue;
        counts += est.counts[est.index(kd, kz, ks)];
        expected += rho * est.conditioning[kd] * est.bin_volume(ks);
      }
    CHECK(slice == doctest::Approx(1.0).epsilon(1e-12));
    if (expected > 0.0) CHECK(std::abs(counts - expected) < 4.0 * std::sqrt(expected));
  }
}

TEST_CASE("inner particles deeper than the cutoff leave conditioning empty") {
  const auto u = box(20.0);
  const auto r = cube(4.0, 16.0);
  SimState s;
  s.particles = {{{10, 10, 10}, {}}, {{1, 1, 1}, {}}};
  ConditionalPairEstimate est(F2Binning{2.5, 5, 10, 5});
  accumulate_f2_conditional(est, s, u, r);
  CHECK(est.empty_conditioning_bins().size() == 5);
  CHECK(est.in_window == 0.0);
}

TEST_CASE("mean-field force: trivial cases") {
  const PairPotential lj({PotentialKind::LennardJones, 1.0, 1.0, 2.5});
  CHECK(mean_field_normal(UniformDensity{0.4}, 2.5, lj) == 0.0);
  CHECK(mean_field_normal(UniformDensity{0.4}, 3.7, lj) == 0.0);
  CHECK(mean_field_normal(UniformDensity{0.0}, 0.9, lj) == 0.0);
  CHECK(norm(mean_field_force(UniformDensity{0.0}, 0.9, lj)) == 0.0);
  CHECK(mean_field_normal(UniformDensity{0.4}, 0.9, PairPotential{}) == 0.0);
  CHECK_THROWS_AS(mean_field_normal(UniformDensity{0.4}, -0.1, lj), Error);
}

TEST_CASE("WCA mean-field force at half sigma matches a direct quadrature") {
  const PairPotential wca({PotentialKind::WCA, 1.0, 1.0, 2.5});
  const double f = mean_field_normal(UniformDensity{0.4}, 0.5, wca);
  const double oracle = cylinder_oracle(0.4, 0.5, wca, 4000, 4000);
  MESSAGE("F_av(0.5) = " << f << " oracle " << oracle);
  CHECK(f < 0.0);
  CHECK(std::abs(f - oracle) <= 0.01 * std::abs(oracle));
}

TEST_CASE("LJ mean-field force matches the direct quadrature and is continuous") {
  const PairPotential lj({PotentialKind::LennardJones, 1.0, 1.0, 2.5});
  for (double d : {0.8, 1.2, 2.0}) {
    const double f = mean_field_normal(UniformDensity{0.4}, d, lj);
    CHECK(std::abs(f - cylinder_oracle(0.4, d, lj, 2000, 2000)) <= 0.005 * std::abs(f) + 1e-9);
  }
  for (double d = 0.7; d < 2.5; d += 0.01) {
    const double f = mean_field_normal(UniformDensity{0.4}, d, lj);
    const double g = mean_field_normal(UniformDensity{0.4}, d + 1e-6, lj);
    CHECK(std::abs(g - f) < 1e-3 * std::max(1.0, std::abs(f)));
  }
  CHECK(std::abs(mean_field_normal(UniformDensity{0.4}, 2.5 - 1e-6, lj)) < 1e-6);
  // Attractive tail pulls outward once the repulsive core is out of reach.
  CHECK(mean_field_normal(UniformDensity{0.4}, 1.5, lj) > 0.0);
}

TEST_CASE("mean-field force from an ideal-gas estimate approaches the uniform model") {
  const double L = 16.0, rho = 0.3;
  const auto u = box(L);
  const auto r = cube(4.0, 12.0);
  const PairPotential soft({PotentialKind::SoftGaussian, 1.0, 0.6, 2.5});
  Random rng(9);
  ConditionalPairEstimate est(F2Binning{2.5, 5, 40, 20});
  const auto n = static_cast<std::size_t>(rho * L * L * L);
  for (int f = 0; f < 60; ++f) {
    SimState s;
    for (std::size_t i = 0; i < n; ++i) s.particles.push_back({{rng.uniform(0, L), rng.uniform(0, L), rng.uniform(0, L)}, {}});
    accumulate_f2_conditional(est, s, u, r);
  }
  const double d = 0.75;  // center of the second depth bin
  const double from_est = mean_field_normal(&est, d, soft);
  const double uniform = mean_field_normal(UniformDensity{rho}, d, soft);
  MESSAGE("estimate " << from_est << " uniform " << uniform);
  CHECK(from_est == doctest::Approx(uniform).epsilon(0.1));
  const ConditionalPairEstimate* none = nullptr;
  CHECK(mean_field_normal(none, d, soft) == 0.0);
}

TEST_CASE("one-dimensional mean field and force tables") {
  const PairPotential soft({PotentialKind::SoftGaussian, 1.0, 0.5, 1.5});
  CHECK(mean_field_normal_1d(0.5, 1.5, soft) == 0.0);
  CHECK(mean_field_normal_1d(0.0, 0.5, soft) == 0.0);
  CHECK(mean_field_normal_1d(0.5, 0.2, soft) < 0.0);
  const auto t = MeanFieldForceTable::tabulate([](double d) { return 1.0 - d; }, 0.0, 1.0, 11);
  CHECK(t(0.25) == doctest::Approx(0.75));
  CHECK(t(1.0) == 0.0);
  CHECK(t(2.0) == 0.0);
  CHECK(t(-1.0) == 1.0);
  CHECK(MeanFieldForceTable::zero()(0.3) == 0.0);
}

TEST_CASE("chi-square test") {
  const std::vector<double> probs = {0.25, 0.25, 0.5};
  const std::vector<double> exact = {25, 25, 50};
  const auto r = chi_square_test(exact, probs);
  CHECK(r.statistic == doctest::Approx(0.0));
  CHECK(r.p_value == doctest::Approx(1.0));
  CHECK(r.dof == 2);
  const std::vector<double> off = {50, 25, 25};
  CHECK(chi_square_test(off, probs).p_value < 1e-4);
}

TEST_CASE("Kolmogorov-Smirnov test") {
  Random rng(7);
  std::vector<double> x(2000);
  for (double& v : x) v = rng.normal();
  boost::math::normal_distribution<double> g;
  auto cdf = [&](double t) { return boost::math::cdf(g, t); };
  CHECK(ks_test(x, cdf).p_value > 0.01);
  for (double& v : x) v += 0.2;
  CHECK(ks_test(x, cdf).p_value < 1e-4);
}

TEST_CASE("integrated autocorrelation time of an AR(1) series") {
  const double phi = 0.8;
  Random rng(13);
  std::vector<double> x(400000);
  double v = 0.0;
  for (double& s : x) {
    v = phi * v + rng.normal();
    s = v;
  }
  const double tau = integrated_autocorr_time(x).tau;
  const double exact = 0.5 * (1 + phi) / (1 - phi);
  MESSAGE("tau " << tau << " exact " << exact);
  CHECK(tau == doctest::Approx(exact).epsilon(0.1));
  std::vector<double> white(50000);
  for (double& s : white) s = rng.normal();
  CHECK(integrated_autocorr_time(white).tau == doctest::Approx(0.5).epsilon(0.1));
}

TEST_CASE("block bootstrap error of a mean") {
  Random rng(21);
  std::vector<double> x(4000);
  for (double& s : x) s = rng.normal();
  const auto sd = block_bootstrap_sd(x.size(), 1, 400, rng, [&](std::span<const std::size_t> idx) {
    double m = 0.0;
    for (auto i : idx) m += x[i];
    return std::vector<double>{m / static_cast<double>(idx.size())};
  });
  CHECK(sd[0] == doctest::Approx(1.0 / std::sqrt(4000.0)).epsilon(0.15));
  CHECK(z_score(1.0, 0.3, 0.4, 0.4) == doctest::Approx(1.2));
}
