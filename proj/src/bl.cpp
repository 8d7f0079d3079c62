#include "olv/bl.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "olv/error.hpp"
#include "olv/stats.hpp"

namespace olv {

namespace {

bool accept(double log_ratio, Random& rng) {
  if (log_ratio >= 0.0) return true;
  return std::log(rng.uniform_open_left()) < log_ratio;
}

}  // namespace

BLSimulator::BLSimulator(BLKernelSpec kernel, PairPotential potential, RegionSpec omega, double flow_dt)
    : kernel_(kernel), potential_(std::move(potential)), omega_(omega), flow_dt_(flow_dt) {
  kernel_.params.validate();
  if (!(kernel_.nu >= 0.0)) throw Error(ErrorCode::ConfigInvalid, "BL base rate must be non-negative");
  if (!(kernel_.birth_multiplier >= 0.0)) throw Error(ErrorCode::ConfigInvalid, "birth multiplier must be non-negative");
  if (!(flow_dt_ > 0.0)) throw Error(ErrorCode::ConfigInvalid, "BL flow step must be positive");
  for (int k = 0; k < 3; ++k)
    if (!(omega_.omega_lo[k] < omega_.omega_hi[k])) throw Error(ErrorCode::ConfigInvalid, "empty Omega box");
  kernel_.params.volume_omega = omega_.volume();
  z_volume_ = kernel_.params.activity() * kernel_.params.volume_omega;
}

double BLSimulator::interaction(const std::vector<PhasePoint>& ps, std::size_t skip, const Vec3& q) const {
  if (potential_.is_ideal()) return 0.0;
  double e = 0.0;
  for (std::size_t j = 0; j < ps.size(); ++j)
    if (j != skip) e += potential_.trial_energy_r2(norm2(q - ps[j].q));
  return e;
}

BLRates bl_rates(const BLState& state, const BLKernelSpec& kernel, const PairPotential& potential,
                 const RegionSpec& omega, const Vec3& proposed_q) {
  GCParams gp = kernel.params;
  gp.volume_omega = omega.volume();
  const double zV = gp.activity() * gp.volume_omega;
  const double beta = gp.beta;
  const auto& ps = state.particles;
  auto energy_of = [&](std::size_t skip, const Vec3& q) {
    if (potential.is_ideal()) return 0.0;
    double e = 0.0;
    for (std::size_t j = 0; j < ps.size(); ++j)
      if (j != skip) e += potential.trial_energy_r2(norm2(q - ps[j].q));
    return e;
  };
  BLRates r;
  const bool capped = kernel.n_cap && ps.size() >= kernel.n_cap;
  const double dU_ins = energy_of(static_cast<std::size_t>(-1), proposed_q);
  r.birth = capped ? 0.0 : kernel.nu * kernel.birth_multiplier * zV * std::min(1.0, std::exp(-beta * dU_ins));
  r.death.resize(ps.size());
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const double dU_del = -energy_of(i, ps[i].q);
    r.death[i] = kernel.nu * std::min(1.0, std::exp(-beta * dU_del));
  }
  return r;
}

Vec3 BLSimulator::reflect(Vec3 q, Vec3& p) const {
  for (int k = 0; k < 3; ++k) {
    const double lo = omega_.omega_lo[k];
    const double w = omega_.omega_hi[k] - lo;
    double x = q[k] - lo;
    if (x >= 0.0 && x < w) continue;
    const double period = 2.0 * w;
    const double folds = std::floor(x / w);
    double m = std::fmod(x, period);
    if (m < 0.0) m += period;
    x = m > w ? period - m : m;
    if (static_cast<long long>(folds) % 2 != 0) p[k] = -p[k];
    q[k] = lo + x;
    if (q[k] >= omega_.omega_hi[k]) q[k] = std::nextafter(omega_.omega_hi[k], lo);
  }
  return q;
}

void BLSimulator::forces(const std::vector<PhasePoint>& ps, std::vector<Vec3>& f) const {
  f.assign(ps.size(), Vec3{});
  if (potential_.is_ideal()) return;
  for (std::size_t i = 0; i < ps.size(); ++i)
    for (std::size_t j = i + 1; j < ps.size(); ++j) {
      const Vec3 d = ps[i].q - ps[j].q;
      const Vec3 fij = d * potential_.force_over_r(norm2(d));
      f[i] += fij;
      f[j] -= fij;
    }
  for (const auto& v : f)
    if (!is_finite(v)) throw Error(ErrorCode::NonFiniteForce, "non-finite force in BL flow");
}

void BLSimulator::flow(BLState& state, double duration) const {
  if (duration <= 0.0 || state.particles.empty()) return;
  const double inv_m = 1.0 / kernel_.params.M;
  auto& ps = state.particles;
  if (potential_.is_ideal()) {
    for (auto& pp : ps) pp.q = reflect(pp.q + pp.p * (duration * inv_m), pp.p);
    return;
  }
  const auto n = static_cast<std::size_t>(std::ceil(duration / flow_dt_));
  const double h = duration / static_cast<double>(n);
  std::vector<Vec3> f;
  forces(ps, f);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t i = 0; i < ps.size(); ++i) {
      ps[i].p += f[i] * (0.5 * h);
      ps[i].q = reflect(ps[i].q + ps[i].p * (h * inv_m), ps[i].p);
    }
    forces(ps, f);
    for (std::size_t i = 0; i < ps.size(); ++i) ps[i].p += f[i] * (0.5 * h);
  }
}

double BLSimulator::kinetic_energy(const BLState& state) const {
  double k = 0.0;
  for (const auto& pp : state.particles) k += norm2(pp.p);
  return 0.5 * k / kernel_.params.M;
}

double BLSimulator::energy(const BLState& state) const {
  double u = 0.0;
  const auto& ps = state.particles;
  if (!potential_.is_ideal())
    for (std::size_t i = 0; i < ps.size(); ++i)
      for (std::size_t j = i + 1; j < ps.size(); ++j) u += potential_.energy_r2(norm2(ps[i].q - ps[j].q));
  return kinetic_energy(state) + u;
}

BLStepResult BLSimulator::step(BLState& state, double dt_max, Random& rng) {
  if (!(dt_max > 0.0)) throw Error(ErrorCode::ConfigInvalid, "dt_max must be positive");
  BLStepResult res;
  const std::size_t n = state.particles.size();
  const double birth_bound = kernel_.nu * kernel_.birth_multiplier * z_volume_;
  const double R = birth_bound + kernel_.nu * static_cast<double>(n);
  const double wait = R > 0.0 ? rng.exponential(R) : std::numeric_limits<double>::infinity();
  if (wait > dt_max) {
    flow(state, dt_max);
    state.time += dt_max;
    return res;
  }
  flow(state, wait);
  state.time += wait;
  res.attempted = true;
  const double beta = kernel_.params.beta;
  if (rng.uniform() * R < birth_bound) {
    ++births_attempted;
    const Vec3 q{rng.uniform(omega_.omega_lo.x, omega_.omega_hi.x), rng.uniform(omega_.omega_lo.y, omega_.omega_hi.y),
                 rng.uniform(omega_.omega_lo.z, omega_.omega_hi.z)};
    const double sp = std::sqrt(kernel_.params.M / beta);
    const Vec3 p{sp * rng.normal(), sp * rng.normal(), sp * rng.normal()};
    if (kernel_.n_cap && n >= kernel_.n_cap) return res;
    const double dU = interaction(state.particles, static_cast<std::size_t>(-1), q);
    if (!std::isfinite(dU) || !accept(-beta * dU, rng)) return res;
    state.particles.push_back({q, p});
    ++births_accepted;
    for (int k = 0; k < 3; ++k) {
      inserted_p2 += p[k] * p[k];
      inserted_p4 += p[k] * p[k] * p[k] * p[k];
    }
    inserted_components += 3;
    res.jumped = true;
    res.event = {state.time, JumpType::Birth, n, n + 1, dU, 0};
  } else {
    ++deaths_attempted;
    const std::size_t i = rng.below(n);
    const double dU = -interaction(state.particles, i, state.particles[i].q);
    if (!accept(-beta * dU, rng)) return res;
    state.particles.erase(state.particles.begin() + static_cast<std::ptrdiff_t>(i));
    ++deaths_accepted;
    res.jumped = true;
    res.event = {state.time, JumpType::Death, n, n - 1, dU, 0};
  }
  return res;
}

bool FluxBalanceReport::balanced(double k_sigma) const {
  for (std::size_t k = 0; k < net_rate.size(); ++k)
    if (std::abs(net_rate[k]) > k_sigma * net_err[k]) return false;
  return true;
}

FluxBalanceReport flux_balance_check(std::span<const JumpEvent> events, double total_time, Random& rng,
                                     std::size_t segments, std::size_t time_blocks, std::size_t resamples) {
  if (events.empty()) throw Error(ErrorCode::TooFewEvents, "flux balance check needs jump events");
  if (!(total_time > 0.0)) throw Error(ErrorCode::ConfigInvalid, "flux balance check needs a positive duration");
  std::size_t n_max = 0;
  for (const auto& e : events) n_max = std::max({n_max, e.n_before, e.n_after});
  const std::size_t edges = n_max;
  FluxBalanceReport rep;
  rep.time = total_time;
  rep.up.assign(edges, 0.0);
  rep.down.assign(edges, 0.0);
  const bool by_segment = segments > 1;
  rep.blocks = by_segment ? segments : std::max<std::size_t>(time_blocks, 1);
  std::vector<std::vector<double>> per_block(rep.blocks, std::vector<double>(edges, 0.0));
  for (const auto& e : events) {
    std::size_t b;
    if (by_segment) {
      if (e.segment >= segments) throw Error(ErrorCode::InconsistentLog, "jump event segment out of range");
      b = e.segment;
    } else {
      b = std::min(rep.blocks - 1, static_cast<std::size_t>(e.time / total_time * static_cast<double>(rep.blocks)));
    }
    if (e.n_after == e.n_before + 1) {
      rep.up[e.n_before] += 1.0;
      per_block[b][e.n_before] += 1.0;
    } else if (e.n_before == e.n_after + 1) {
      rep.down[e.n_after] += 1.0;
      per_block[b][e.n_after] -= 1.0;
    } else {
      throw Error(ErrorCode::InconsistentLog, "jump event is not a single-particle transition");
    }
  }
  rep.net_rate.resize(edges);
  for (std::size_t k = 0; k < edges; ++k) rep.net_rate[k] = (rep.up[k] - rep.down[k]) / total_time;
  rep.net_err.assign(edges, 0.0);
  if (rep.blocks > 1) {
    const auto sd = block_bootstrap_sd(rep.blocks, 1, resamples, rng, [&](std::span<const std::size_t> idx) {
      std::vector<double> s(edges, 0.0);
      for (std::size_t i : idx)
        for (std::size_t k = 0; k < edges; ++k) s[k] += per_block[i][k];
      for (double& v : s) v /= total_time;
      return s;
    });
    rep.net_err = sd;
  }
  return rep;
}

}  // namespace olv
