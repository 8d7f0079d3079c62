#include "olv/md.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "olv/error.hpp"

namespace olv {

double ThermoForceField::at(double d) const {
  if (empty() || d < 0.0 || d > thickness) return 0.0;
  auto k = static_cast<std::size_t>(d / bin_width());
  if (k >= values.size()) k = values.size() - 1;
  return values[k];
}

double ThermoForceField::max_abs() const {
  double m = 0.0;
  for (double v : values) m = std::max(m, std::abs(v));
  return m;
}

// ---------------------------------------------------------------- cell list

CellList::CellList(const UniverseSpec& universe, double cutoff, double cell_size)
    : universe_(universe), cutoff_(cutoff), cutoff2_(cutoff * cutoff) {
  if (!(cutoff > 0.0)) throw Error(ErrorCode::ConfigInvalid, "cell list cutoff must be positive");
  if (cell_size == 0.0) cell_size = cutoff;
  if (cell_size < cutoff) throw Error(ErrorCode::ConfigInvalid, "cell size must be at least the cutoff");
  if (cutoff > universe.min_length() / 3.0)
    throw Error(ErrorCode::BoxTooSmall, "cutoff exceeds a third of the smallest box length");
  for (int k = 0; k < 3; ++k) {
    dims_[k] = static_cast<int>(std::floor(universe.box_lengths[k] / cell_size));
    if (dims_[k] < 3) throw Error(ErrorCode::BoxTooSmall, "fewer than three cells along an axis");
  }
  head_.assign(static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2], npos);
}

std::size_t CellList::cell_of(const Vec3& q) const {
  int idx[3];
  for (int k = 0; k < 3; ++k) {
    idx[k] = static_cast<int>(q[k] / universe_.box_lengths[k] * dims_[k]);
    idx[k] = std::clamp(idx[k], 0, dims_[k] - 1);
  }
  return (static_cast<std::size_t>(idx[0]) * dims_[1] + idx[1]) * dims_[2] + idx[2];
}

void CellList::build(std::span<const PhasePoint> particles) {
  std::fill(head_.begin(), head_.end(), npos);
  next_.assign(particles.size(), npos);
  // Insert in reverse so each cell lists particles in ascending order.
  for (std::size_t i = particles.size(); i-- > 0;) {
    const std::size_t c = cell_of(particles[i].q);
    next_[i] = head_[c];
    head_[c] = i;
  }
}

std::vector<std::pair<std::size_t, std::size_t>> CellList::pairs(std::span<const PhasePoint> particles) const {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for_each_pair(particles, [&](std::size_t i, std::size_t j, const Vec3&, double) { out.emplace_back(i, j); });
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::pair<std::size_t, std::size_t>> brute_force_pairs(std::span<const PhasePoint> particles,
                                                                   const UniverseSpec& universe, double cutoff) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  const double c2 = cutoff * cutoff;
  for (std::size_t i = 0; i < particles.size(); ++i)
    for (std::size_t j = i + 1; j < particles.size(); ++j)
      if (norm2(universe.minimum_image(particles[i].q - particles[j].q)) < c2) out.emplace_back(i, j);
  return out;
}

// ------------------------------------------------------------------- engine

namespace {

// Outward unit normal of Omega at the point of the surface closest to q.
Vec3 outward_direction(const Vec3& q, const UniverseSpec& universe, const RegionSpec& region) {
  Vec3 g;
  for (int k = 0; k < 3; ++k) {
    const double center = 0.5 * (region.omega_lo[k] + region.omega_hi[k]);
    const double half = 0.5 * (region.omega_hi[k] - region.omega_lo[k]);
    double dq = q[k] - center;
    if (universe.periodic[k]) dq -= universe.box_lengths[k] * std::nearbyint(dq / universe.box_lengths[k]);
    const double gap = std::abs(dq) - half;
    g[k] = gap > 0.0 ? std::copysign(gap, dq) : 0.0;
  }
  const double n = norm(g);
  return n > 0.0 ? g * (1.0 / n) : Vec3{};
}

double effective_cell_size(const PairPotential& potential, const EngineConfig& config) {
  return config.cell_size > 0.0 ? config.cell_size : potential.cutoff();
}

}  // namespace

void check_dt_guard(const UniverseSpec& universe, const RegionSpec& region, const PairPotential& potential,
                    const EngineConfig& config) {
  if (!(config.dt > 0.0)) throw Error(ErrorCode::ConfigInvalid, "dt must be positive");
  double length = std::numeric_limits<double>::infinity();
  if (region.delta_thickness > 0.0) length = std::min(length, region.delta_thickness);
  if (!potential.is_ideal()) length = std::min(length, effective_cell_size(potential, config));
  const double T = config.thermostat == ThermostatKind::Langevin ? config.thermostat_temperature
                                                                  : universe.temperature;
  if (std::sqrt(T / universe.mass) * config.dt > 0.25 * length)
    throw Error(ErrorCode::ConfigInvalid, "dt too large for crossing detection and neighbour search");
}

Engine::Engine(UniverseSpec universe, RegionSpec region, PairPotential potential, EngineConfig config,
               ThermoForceField thermo)
    : universe_(universe),
      region_(region),
      potential_(std::move(potential)),
      config_(config),
      thermo_(std::move(thermo)) {
  validate(universe_, region_);
  check_dt_guard(universe_, region_, potential_, config_);
  if (config_.thermostat == ThermostatKind::Langevin) {
    if (!(config_.gamma >= 0.0)) throw Error(ErrorCode::ConfigInvalid, "Langevin gamma must be non-negative");
    if (!(config_.thermostat_temperature > 0.0))
      throw Error(ErrorCode::ConfigInvalid, "thermostat temperature must be positive");
  }
  if (!potential_.is_ideal())
    cells_.emplace(universe_, potential_.cutoff(), effective_cell_size(potential_, config_));
}

void Engine::set_state(SimState state) {
  for (auto& pp : state.particles) pp.q = universe_.wrap(pp.q);
  state_ = std::move(state);
  compute_forces();
}

void Engine::set_thermo_force(ThermoForceField thermo) {
  thermo_ = std::move(thermo);
  compute_forces();
}

bool Engine::interacts(std::size_t i) const {
  return !config_.tracers || labels_[i] != Region::Outer;
}

void Engine::compute_forces() {
  const auto& ps = state_.particles;
  const std::size_t n = ps.size();
  forces_.assign(n, Vec3{});
  potential_energy_ = 0.0;
  labels_.resize(n);
  const bool need_labels = config_.tracers || !thermo_.empty();
  if (need_labels)
    for (std::size_t i = 0; i < n; ++i) labels_[i] = region_of(ps[i].q, universe_, region_);

  if (cells_) {
    cells_->build(ps);
    const double fl2 = potential_.hard_floor() * potential_.hard_floor();
    bool overlap = false;
    cells_->for_each_pair(ps, [&](std::size_t i, std::size_t j, const Vec3& d, double r2) {
      if (config_.tracers && (labels_[i] == Region::Outer || labels_[j] == Region::Outer)) return;
      Vec3 f = d * potential_.force_over_r(r2);
      if (config_.force_cap > 0.0) {
        const double m = norm(f);
        if (m > config_.force_cap) f = f * (config_.force_cap / m);
      } else if (r2 < fl2) {
        overlap = true;
      }
      forces_[i] += f;
      forces_[j] -= f;
      potential_energy_ += potential_.energy_r2(r2);
    });
    if (overlap) throw Error(ErrorCode::NonFiniteForce, "particles overlap below the hard floor");
  }

  if (!thermo_.empty()) {
    for (std::size_t i = 0; i < n; ++i) {
      if (labels_[i] != Region::DeltaLayer) continue;
      const double d = distance_to_omega(ps[i].q, universe_, region_);
      forces_[i] += outward_direction(ps[i].q, universe_, region_) * thermo_.at(d);
    }
  }

  for (const auto& f : forces_)
    if (!is_finite(f)) throw Error(ErrorCode::NonFiniteForce, "non-finite force encountered");
}

std::vector<Vec3> Engine::brute_force_forces() const {
  const auto& ps = state_.particles;
  std::vector<Vec3> out(ps.size());
  if (potential_.is_ideal()) return out;
  for (std::size_t i = 0; i < ps.size(); ++i)
    for (std::size_t j = i + 1; j < ps.size(); ++j) {
      if (config_.tracers && (region_of(ps[i].q, universe_, region_) == Region::Outer ||
                              region_of(ps[j].q, universe_, region_) == Region::Outer))
        continue;
      const Vec3 d = universe_.minimum_image(ps[i].q - ps[j].q);
      const double r2 = norm2(d);
      if (r2 >= potential_.cutoff() * potential_.cutoff()) continue;
      const Vec3 f = d * potential_.force_over_r(r2);
      out[i] += f;
      out[j] -= f;
    }
  return out;
}

void Engine::apply_walls(PhasePoint& pp) const {
  for (int k = 0; k < 3; ++k) {
    if (universe_.periodic[k]) continue;
    const double L = universe_.box_lengths[k];
    if (pp.q[k] < 0.0) {
      pp.q[k] = -pp.q[k];
      pp.p[k] = -pp.p[k];
    } else if (pp.q[k] >= L) {
      pp.q[k] = 2.0 * L - pp.q[k];
      pp.p[k] = -pp.p[k];
    }
  }
  pp.q = universe_.wrap(pp.q);
}

void Engine::vv_step() {
  const double dt = config_.dt;
  const double half = 0.5 * dt;
  const double inv_m = 1.0 / universe_.mass;
  auto& ps = state_.particles;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    ps[i].p += forces_[i] * half;
    ps[i].q += ps[i].p * (dt * inv_m);
    apply_walls(ps[i]);
  }
  compute_forces();
  for (std::size_t i = 0; i < ps.size(); ++i) ps[i].p += forces_[i] * half;
  state_.time += dt;
}

void Engine::thermostat_step(Random& rng) {
  if (config_.thermostat != ThermostatKind::Langevin) return;
  const double c = std::exp(-config_.gamma * config_.dt);
  const double s = std::sqrt((1.0 - c * c) * universe_.mass * config_.thermostat_temperature);
  for (auto& pp : state_.particles) {
    if (config_.mask == ThermostatMask::OutsideOmegaOnly && region_.contains(pp.q)) continue;
    pp.p.x = c * pp.p.x + s * rng.normal();
    pp.p.y = c * pp.p.y + s * rng.normal();
    pp.p.z = c * pp.p.z + s * rng.normal();
  }
}

double Engine::kinetic_energy() const {
  double k = 0.0;
  for (const auto& pp : state_.particles) k += norm2(pp.p);
  return 0.5 * k / universe_.mass;
}

Vec3 Engine::total_momentum() const {
  Vec3 P;
  for (const auto& pp : state_.particles) P += pp.p;
  return P;
}

SimState random_initial_state(const UniverseSpec& universe, Random& rng, double min_separation) {
  SimState st;
  st.particles.reserve(universe.n_total);
  const double min2 = min_separation * min_separation;
  const double sp = std::sqrt(universe.mass * universe.temperature);
  std::size_t attempts = 0;
  while (st.particles.size() < universe.n_total) {
    if (++attempts > 1000 * (universe.n_total + 10))
      throw Error(ErrorCode::ConfigInvalid, "could not place particles without overlap; lower the density");
    Vec3 q{rng.uniform() * universe.box_lengths.x, rng.uniform() * universe.box_lengths.y,
           rng.uniform() * universe.box_lengths.z};
    bool ok = true;
    if (min2 > 0.0)
      for (const auto& other : st.particles)
        if (norm2(universe.minimum_image(q - other.q)) < min2) {
          ok = false;
          break;
        }
    if (!ok) continue;
    st.particles.push_back({q, Vec3{sp * rng.normal(), sp * rng.normal(), sp * rng.normal()}});
  }
  if (st.particles.size() > 1) {
    Vec3 mean;
    for (const auto& pp : st.particles) mean += pp.p;
    mean *= 1.0 / static_cast<double>(st.particles.size());
    for (auto& pp : st.particles) pp.p -= mean;
  }
  return st;
}

// ---------------------------------------------------------------------- run

RunSummary run(Engine& engine, Random& rng, const RunOptions& options, std::span<Observer* const> observers) {
  RunSummary summary;
  const auto& universe = engine.universe();
  const auto& region = engine.region();

  auto emit_frame = [&](std::size_t step) {
    for (auto* o : observers) o->on_frame(step, engine.state());
    ++summary.frames;
  };
  emit_frame(0);
  for (auto* o : observers) o->on_step(0, engine.state().time, occupancy(engine.state(), universe, region));

  SimState previous;
  for (std::size_t step = 1; step <= options.steps; ++step) {
    if (options.detect_crossings) previous = engine.state();
    const double t0 = engine.state().time;
    engine.step(rng);
    if (options.detect_crossings) {
      const auto events = crossing_events(previous, engine.state(), engine.config().dt, universe, region);
      summary.events += events.size();
      if (!events.empty())
        for (auto* o : observers) o->on_events(step, t0, events);
    }
    const std::size_t n_in = occupancy(engine.state(), universe, region);
    for (auto* o : observers) o->on_step(step, engine.state().time, n_in);
    if (options.frame_stride > 0 && step % options.frame_stride == 0) emit_frame(step);
  }
  summary.steps = options.steps;
  return summary;
}

// ----------------------------------------------------------- density profile

double signed_surface_distance(const Vec3& q, const UniverseSpec& universe, const RegionSpec& region) {
  if (region.contains(q)) return -nearest_face(q, region).distance;
  return distance_to_omega(q, universe, region);
}

namespace {

// Volume of {x : signed distance to the box surface <= s}.
double volume_below(double s, const Vec3& e) {
  if (s <= 0.0) {
    const double t = -s;
    return std::max(e.x - 2 * t, 0.0) * std::max(e.y - 2 * t, 0.0) * std::max(e.z - 2 * t, 0.0);
  }
  const double pi = std::numbers::pi;
  return e.x * e.y * e.z + 2.0 * (e.x * e.y + e.y * e.z + e.z * e.x) * s + pi * (e.x + e.y + e.z) * s * s +
         4.0 / 3.0 * pi * s * s * s;
}

}  // namespace

double DensityProfile::density(std::size_t k) const {
  if (frames == 0 || volumes[k] <= 0.0) return 0.0;
  return counts[k] / (static_cast<double>(frames) * volumes[k]);
}

DensityProfileObserver::DensityProfileObserver(UniverseSpec universe, RegionSpec region, double depth,
                                               std::size_t bins)
    : universe_(universe), region_(region) {
  profile_.depth = depth;
  profile_.thickness = region.delta_thickness;
  profile_.counts.assign(bins, 0.0);
  profile_.volumes.resize(bins);
  const Vec3 e = region.extent();
  for (std::size_t k = 0; k < bins; ++k) {
    const double lo = -depth + static_cast<double>(k) * profile_.bin_width();
    const double hi = lo + profile_.bin_width();
    profile_.volumes[k] = volume_below(hi, e) - volume_below(lo, e);
  }
}

void DensityProfileObserver::on_frame(std::size_t, const SimState& state) {
  const double w = profile_.bin_width();
  for (const auto& pp : state.particles) {
    const double s = signed_surface_distance(pp.q, universe_, region_);
    if (s < -profile_.depth || s >= profile_.thickness) continue;
    auto k = static_cast<std::size_t>((s + profile_.depth) / w);
    if (k < profile_.counts.size()) profile_.counts[k] += 1.0;
  }
  ++profile_.frames;
}

// -------------------------------------------------------------- calibration

double max_inside_deviation(const DensityProfile& profile, double target_density) {
  double dev = 0.0;
  for (std::size_t k = 0; k < profile.bins(); ++k) {
    if (profile.center(k) >= 0.0) continue;
    dev = std::max(dev, std::abs(profile.density(k) - target_density) / target_density);
  }
  return dev;
}

CalibrationResult thermo_force_calibrate(const std::function<DensityProfile(const ThermoForceField&)>& sample,
                                         ThermoForceField initial, const CalibrationOptions& options) {
  if (!(options.target_density > 0.0))
    throw Error(ErrorCode::ConfigInvalid, "calibration target density must be positive");
  CalibrationResult result;
  ThermoForceField field = std::move(initial);
  double best = std::numeric_limits<double>::infinity();

  for (std::size_t it = 0;; ++it) {
    DensityProfile prof = sample(field);
    const double dev = max_inside_deviation(prof, options.target_density);
    result.deviation_history.push_back(dev);
    result.profiles.push_back(prof);
    if (dev < best) {
      best = dev;
      result.field = field;
    }
    if (dev < options.tolerance) {
      result.converged = true;
      result.iterations = it;
      return result;
    }
    if (it == options.iterations) break;

    // Field bins sit on the s > 0 part of the profile.
    const std::size_t nb = prof.bins();
    const double w = prof.bin_width();
    std::size_t first_out = 0;
    while (first_out < nb && prof.center(first_out) < 0.0) ++first_out;
    for (std::size_t k = 0; k < field.values.size(); ++k) {
      const std::size_t pk = first_out + k;
      if (pk >= nb) break;
      const std::size_t lo = pk > 0 ? pk - 1 : pk;
      const std::size_t hi = pk + 1 < nb ? pk + 1 : pk;
      if (hi == lo) continue;
      const double grad = (prof.density(hi) - prof.density(lo)) / (static_cast<double>(hi - lo) * w);
      field.values[k] -= options.gain * grad / options.target_density;
    }
    result.iterations = it + 1;
  }
  return result;
}

}  // namespace olv
