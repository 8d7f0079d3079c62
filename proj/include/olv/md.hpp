#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "olv/core.hpp"
#include "olv/potential.hpp"
#include "olv/rng.hpp"

namespace olv {

enum class ThermostatKind { Off, Langevin };
enum class ThermostatMask { Everywhere, OutsideOmegaOnly };

struct EngineConfig {
  double dt = 0.005;
  ThermostatKind thermostat = ThermostatKind::Off;
  double gamma = 1.0;
  double thermostat_temperature = 1.0;
  ThermostatMask mask = ThermostatMask::OutsideOmegaOnly;
  std::size_t steps = 0;
  double cell_size = 0.0;  // 0 selects the potential cutoff
  // Outer-region particles become non-interacting tracers.
  bool tracers = false;
  // Pair forces are clipped to this magnitude when positive; overlaps below
  // the hard floor are then tolerated (a tracer can switch on next to a neighbour).
  double force_cap = 0.0;
};

// Thermodynamic force in the Delta layer, tabulated on equal bins of the
// distance d to Omega; positive values push along the outward normal.
struct ThermoForceField {
  double thickness = 0.0;
  std::vector<double> values;

  static ThermoForceField zeros(double thickness, std::size_t bins) {
    return {thickness, std::vector<double>(bins, 0.0)};
  }
  bool empty() const { return values.empty() || thickness <= 0.0; }
  double bin_width() const { return thickness / static_cast<double>(values.size()); }
  double at(double d) const;
  double max_abs() const;
};

// Linked-cell neighbour search. The pair set equals the minimum-image
// reference set of all pairs closer than the cutoff.
class CellList {
 public:
  CellList(const UniverseSpec& universe, double cutoff, double cell_size = 0.0);

  void build(std::span<const PhasePoint> particles);

  // f(i, j, d, r2) with d = q_i - q_j (minimum image) and r2 < cutoff^2.
  template <class F>
  void for_each_pair(std::span<const PhasePoint> particles, F&& f) const;

  std::vector<std::pair<std::size_t, std::size_t>> pairs(std::span<const PhasePoint> particles) const;

  double cutoff() const noexcept { return cutoff_; }

 private:
  std::size_t cell_of(const Vec3& q) const;

  UniverseSpec universe_;
  double cutoff_;
  double cutoff2_;
  int dims_[3];
  std::vector<std::size_t> head_;
  std::vector<std::size_t> next_;
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
};

// Brute-force reference pair set (i < j, sorted).
std::vector<std::pair<std::size_t, std::size_t>> brute_force_pairs(std::span<const PhasePoint> particles,
                                                                   const UniverseSpec& universe, double cutoff);

// Closed-universe dynamics: velocity Verlet plus a masked Ornstein-Uhlenbeck
// momentum update (B-A-B-O splitting).
class Engine {
 public:
  Engine(UniverseSpec universe, RegionSpec region, PairPotential potential, EngineConfig config,
         ThermoForceField thermo = {});

  void set_state(SimState state);
  const SimState& state() const noexcept { return state_; }
  const std::vector<Vec3>& forces() const noexcept { return forces_; }

  void vv_step();
  void thermostat_step(Random& rng);
  void step(Random& rng) {
    vv_step();
    thermostat_step(rng);
  }

  void set_thermo_force(ThermoForceField thermo);
  const ThermoForceField& thermo_force() const noexcept { return thermo_; }

  double potential_energy() const noexcept { return potential_energy_; }
  double kinetic_energy() const;
  Vec3 total_momentum() const;

  const UniverseSpec& universe() const noexcept { return universe_; }
  const RegionSpec& region() const noexcept { return region_; }
  const PairPotential& potential() const noexcept { return potential_; }
  const EngineConfig& config() const noexcept { return config_; }

  // Forces via the O(N^2) loop, for checking the cell list.
  std::vector<Vec3> brute_force_forces() const;

 private:
  void compute_forces();
  bool interacts(std::size_t i) const;
  void apply_walls(PhasePoint& pp) const;

  UniverseSpec universe_;
  RegionSpec region_;
  PairPotential potential_;
  EngineConfig config_;
  ThermoForceField thermo_;
  SimState state_;
  std::vector<Vec3> forces_;
  std::vector<Region> labels_;
  std::optional<CellList> cells_;
  double potential_energy_ = 0.0;
};

// Rejects dt when sqrt(T/M) dt exceeds a quarter of the smallest positive
// length among the Delta thickness and the cell size.
void check_dt_guard(const UniverseSpec& universe, const RegionSpec& region, const PairPotential& potential,
                    const EngineConfig& config);

// Uniform positions (rejecting overlaps below min_separation) and Maxwell momenta.
SimState random_initial_state(const UniverseSpec& universe, Random& rng, double min_separation = 0.0);

class Observer {
 public:
  virtual ~Observer() = default;
  virtual void on_frame(std::size_t /*step*/, const SimState& /*state*/) {}
  // Called every step (including step 0) with the occupancy of Omega.
  virtual void on_step(std::size_t /*step*/, double /*time*/, std::size_t /*n_inside*/) {}
  virtual void on_events(std::size_t /*step*/, double /*step_start_time*/,
                         std::span<const CrossingEvent> /*events*/) {}
};

struct RunOptions {
  std::size_t steps = 0;
  std::size_t frame_stride = 1;  // 0 disables frame output
  bool detect_crossings = true;
};

struct RunSummary {
  std::size_t steps = 0;
  std::size_t frames = 0;
  std::size_t events = 0;
};

RunSummary run(Engine& engine, Random& rng, const RunOptions& options, std::span<Observer* const> observers);

// Histogram of particle density against signed distance s to the surface of
// Omega (negative inside), on equal bins over [-depth, thickness].
struct DensityProfile {
  double depth = 0.0;
  double thickness = 0.0;
  std::vector<double> counts;
  std::vector<double> volumes;
  std::size_t frames = 0;

  std::size_t bins() const { return counts.size(); }
  double bin_width() const { return (depth + thickness) / static_cast<double>(counts.size()); }
  double center(std::size_t k) const { return -depth + (static_cast<double>(k) + 0.5) * bin_width(); }
  double density(std::size_t k) const;
};

class DensityProfileObserver : public Observer {
 public:
  DensityProfileObserver(UniverseSpec universe, RegionSpec region, double depth, std::size_t bins);
  void on_frame(std::size_t step, const SimState& state) override;
  const DensityProfile& profile() const noexcept { return profile_; }

 private:
  UniverseSpec universe_;
  RegionSpec region_;
  DensityProfile profile_;
};

double signed_surface_distance(const Vec3& q, const UniverseSpec& universe, const RegionSpec& region);

struct CalibrationOptions {
  double target_density = 0.4;
  std::size_t iterations = 10;
  double gain = 1.0;       // c in F <- F - c grad(rho)/rho*
  double tolerance = 0.03;  // max relative density deviation inside Omega
};

struct CalibrationResult {
  ThermoForceField field;  // best field seen
  bool converged = false;
  std::size_t iterations = 0;
  std::vector<double> deviation_history;  // max deviation measured before each update
  std::vector<DensityProfile> profiles;
};

// Iterative thermodynamic-force calibration. `sample` runs the dynamics with
// the given field and returns the measured profile (bins with s > 0 must line
// up with the field bins).
CalibrationResult thermo_force_calibrate(const std::function<DensityProfile(const ThermoForceField&)>& sample,
                                         ThermoForceField initial, const CalibrationOptions& options);

double max_inside_deviation(const DensityProfile& profile, double target_density);

template <class F>
void CellList::for_each_pair(std::span<const PhasePoint> particles, F&& f) const {
  const int nx = dims_[0], ny = dims_[1], nz = dims_[2];
  for (int cx = 0; cx < nx; ++cx)
    for (int cy = 0; cy < ny; ++cy)
      for (int cz = 0; cz < nz; ++cz) {
        const std::size_t c = (static_cast<std::size_t>(cx) * ny + cy) * nz + cz;
        for (int ox = -1; ox <= 1; ++ox) {
          int x = cx + ox;
          if (x < 0 || x >= nx) {
            if (!universe_.periodic[0]) continue;
            x = (x + nx) % nx;
          }
          for (int oy = -1; oy <= 1; ++oy) {
            int y = cy + oy;
            if (y < 0 || y >= ny) {
              if (!universe_.periodic[1]) continue;
              y = (y + ny) % ny;
            }
            for (int oz = -1; oz <= 1; ++oz) {
              int z = cz + oz;
              if (z < 0 || z >= nz) {
                if (!universe_.periodic[2]) continue;
                z = (z + nz) % nz;
              }
              const std::size_t c2 = (static_cast<std::size_t>(x) * ny + y) * nz + z;
              for (std::size_t i = head_[c]; i != npos; i = next_[i]) {
                for (std::size_t j = head_[c2]; j != npos; j = next_[j]) {
                  if (j <= i) continue;
                  const Vec3 d = universe_.minimum_image(particles[i].q - particles[j].q);
                  const double r2 = norm2(d);
                  if (r2 < cutoff2_) f(i, j, d, r2);
                }
              }
            }
          }
        }
      }
}

}  // namespace olv
