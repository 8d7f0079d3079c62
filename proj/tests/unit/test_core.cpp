#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "olv/core.hpp"
#include "olv/error.hpp"
#include "olv/rng.hpp"

using namespace olv;

namespace {

UniverseSpec universe10() {
  UniverseSpec u;
  u.box_lengths = {10.0, 10.0, 10.0};
  return u;
}

RegionSpec cube(double lo, double hi, double delta) {
  RegionSpec r;
  r.omega_lo = {lo, lo, lo};
  r.omega_hi = {hi, hi, hi};
  r.delta_thickness = delta;
  return r;
}

PhasePoint pp(Vec3 q, Vec3 p = {}) { return {q, p}; }

}  // namespace

TEST_CASE("region labels") {
  const auto u = universe10();
  const auto r = cube(3.0, 7.0, 1.0);
  CHECK(region_of({5, 5, 5}, u, r) == Region::InsideOmega);
  CHECK(region_of({7.0, 5, 5}, u, r) == Region::DeltaLayer);
  CHECK(region_of({3.0, 5, 5}, u, r) == Region::InsideOmega);
  CHECK(region_of({8.5, 5, 5}, u, r) == Region::Outer);
  CHECK(region_of({7.5, 7.5, 5}, u, r) == Region::DeltaLayer);
  CHECK(region_of({7.8, 7.8, 5}, u, r) == Region::Outer);  // corner distance 1.13
}

TEST_CASE("labels partition the universe and counts add up") {
  const auto u = universe10();
  const auto r = cube(2.0, 6.0, 1.5);
  Random rng(11);
  SimState s;
  for (int i = 0; i < 2000; ++i) s.particles.push_back(pp({rng.uniform(0, 10), rng.uniform(0, 10), rng.uniform(0, 10)}));
  const auto c = count_regions(s, u, r);
  CHECK(c.inside + c.delta + c.outer == s.particles.size());
  CHECK(occupancy(s, u, r) == c.inside);
  for (const auto& p : s.particles) {
    const auto lab = region_of(p.q, u, r);
    const bool in = r.contains(p.q);
    CHECK((lab == Region::InsideOmega) == in);
  }
}

TEST_CASE("periodic distance uses the nearest image") {
  auto u = universe10();
  const auto r = cube(1.0, 3.0, 1.0);
  CHECK(distance_to_omega({9.5, 2, 2}, u, r) == doctest::Approx(1.5));
  u.periodic = {false, false, false};
  CHECK(distance_to_omega({9.5, 2, 2}, u, r) == doctest::Approx(6.5));
}

TEST_CASE("occupancy extremes") {
  const auto u = universe10();
  const auto r = cube(4.0, 6.0, 0.5);
  SimState s;
  for (int i = 0; i < 10; ++i) s.particles.push_back(pp({5, 5, 5}));
  CHECK(occupancy(s, u, r) == 10);
  for (auto& p : s.particles) p.q = {0.5, 0.5, 0.5};
  CHECK(occupancy(s, u, r) == 0);
  CHECK(count_regions(s, u, r).outer == 10);
}

TEST_CASE("validation rejects bad geometry") {
  auto u = universe10();
  CHECK_THROWS_AS(validate(u, cube(6.0, 4.0, 1.0)), Error);
  CHECK_THROWS_AS(validate(u, cube(0.0, 4.0, 1.0)), Error);
  CHECK_THROWS_AS(validate(u, cube(2.0, 4.0, -1.0)), Error);
  u.mass = 0.0;
  CHECK_THROWS_AS(validate(u), Error);
  try {
    validate(universe10(), cube(6.0, 4.0, 1.0));
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ConfigInvalid);
  }
}

TEST_CASE("single exit event from linear motion") {
  const auto u = universe10();
  const auto r = cube(3.0, 7.0, 1.0);
  SimState a, b;
  a.particles = {pp({6.9, 5, 5}, {1, 0, 0})};
  b.particles = {pp({7.1, 5, 5}, {1, 0, 0})};
  const auto ev = crossing_events(a, b, 0.2, u, r);
  REQUIRE(ev.size() == 1);
  CHECK(ev[0].direction == Direction::Out);
  CHECK(ev[0].face == 1);
  CHECK(ev[0].time == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("motion parallel to a face gives no event") {
  const auto u = universe10();
  const auto r = cube(3.0, 7.0, 1.0);
  SimState a, b;
  a.particles = {pp({6.9, 5, 5}, {0, 1, 0})};
  b.particles = {pp({6.9, 5.2, 5}, {0, 1, 0})};
  CHECK(crossing_events(a, b, 0.2, u, r).empty());
}

TEST_CASE("out-and-back within one step yields Out then In") {
  const auto u = universe10();
  const auto r = cube(3.0, 7.0, 1.0);
  // Constant deceleration arc: q(t) = q0 + v t + a t^2 / 2.
  const double q0 = 6.99, v = 1.0, acc = -20.0, dt = 0.2;
  SimState a, b;
  a.particles = {pp({q0, 5, 5}, {v, 0, 0})};
  b.particles = {pp({q0 + v * dt + 0.5 * acc * dt * dt, 5, 5}, {v + acc * dt, 0, 0})};
  // Oracle: integrate in two sub-steps of dt/2 and bracket the roots.
  const double disc = v * v - 2.0 * acc * (q0 - 7.0);
  REQUIRE(disc > 0.0);
  const double t1 = (-v + std::sqrt(disc)) / acc;
  const double t2 = (-v - std::sqrt(disc)) / acc;
  const double tmin = std::min(t1, t2), tmax = std::max(t1, t2);
  const double qmid = q0 + v * (0.5 * dt) + 0.5 * acc * 0.25 * dt * dt;
  REQUIRE(qmid < 7.0);  // back inside at dt/2, so both crossings lie in the first half
  const auto ev = crossing_events(a, b, dt, u, r);
  REQUIRE(ev.size() == 2);
  CHECK(ev[0].direction == Direction::Out);
  CHECK(ev[1].direction == Direction::In);
  CHECK(ev[0].time == doctest::Approx(tmin).epsilon(1e-9));
  CHECK(ev[1].time == doctest::Approx(tmax).epsilon(1e-9));
  CHECK(ev[1].time < 0.5 * dt);
}

TEST_CASE("events are consistent with occupancy changes") {
  const auto u = universe10();
  const auto r = cube(2.5, 6.5, 1.0);
  Random rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    SimState a, b;
    for (int i = 0; i < 500; ++i) {
      const Vec3 q{rng.uniform(0, 10), rng.uniform(0, 10), rng.uniform(0, 10)};
      const Vec3 p{rng.normal(), rng.normal(), rng.normal()};
      const Vec3 f{rng.normal(), rng.normal(), rng.normal()};
      const double dt = 0.3;
      const Vec3 p1 = p + f * dt;
      a.particles.push_back(pp(q, p));
      b.particles.push_back(pp(u.wrap(q + p * dt + f * (0.5 * dt * dt)), p1));
    }
    const auto ev = crossing_events(a, b, 0.3, u, r);
    long net = 0;
    for (const auto& e : ev) net += e.direction == Direction::In ? 1 : -1;
    CHECK(static_cast<long>(occupancy(b, u, r)) - static_cast<long>(occupancy(a, u, r)) == net);
  }
}

TEST_CASE("displacements beyond half the box are rejected") {
  const auto u = universe10();
  const auto r = cube(3.0, 7.0, 1.0);
  SimState a, b;
  a.particles = {pp({1, 1, 1}, {60, 0, 0})};
  b.particles = {pp({7, 1, 1}, {60, 0, 0})};
  CHECK_THROWS_AS(crossing_events(a, b, 0.1, u, r), Error);
}

TEST_CASE("wrap and minimum image") {
  const auto u = universe10();
  const Vec3 w = u.wrap({-0.5, 10.5, 23.0});
  CHECK(w.x == doctest::Approx(9.5));
  CHECK(w.y == doctest::Approx(0.5));
  CHECK(w.z == doctest::Approx(3.0));
  const Vec3 d = u.minimum_image({9.0, -6.0, 4.0});
  CHECK(d.x == doctest::Approx(-1.0));
  CHECK(d.y == doctest::Approx(4.0));
  CHECK(d.z == doctest::Approx(4.0));
}

TEST_CASE("counter generator is deterministic and namespaced") {
  CounterRng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a() == b());
  CounterRng c(42);
  auto x = c.derive("md"), y = c.derive("gcmc"), z = c.derive("md");
  CHECK(x() != y());
  CHECK(x.key() == z.key());
  CHECK(c.derive(std::uint64_t{1}).key() != c.derive(std::uint64_t{2}).key());
  Random r(CounterRng(7));
  double s = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) s += r.uniform();
  CHECK(s / n == doctest::Approx(0.5).epsilon(0.01));
}
