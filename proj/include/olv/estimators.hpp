#pragma once

#include <cstddef>
#include <span>
#include <variant>
#include <vector>

#include "olv/core.hpp"
#include "olv/md.hpp"
#include "olv/potential.hpp"
#include "olv/rng.hpp"

namespace olv {

// ------------------------------------------------------------- occupancy law

// Mergeable histogram of the number of particles in Omega.
struct OccupancyHistogram {
  std::vector<double> counts;  // counts[n]
  double total = 0.0;
  std::size_t stride = 1;

  void add(std::size_t n, double weight = 1.0);
  void merge(const OccupancyHistogram& other);
  std::vector<double> probabilities() const;
  double mean() const;
  double variance() const;
};

// Sum of the normalized probabilities.
double normalization_check(const OccupancyHistogram& histogram);

struct PnOptions {
  std::size_t stride = 0;      // 0: ceil(stride_factor * tau_int)
  double stride_factor = 2.0;
  std::size_t resamples = 200;
  std::size_t min_samples = 20;
};

struct PnEstimate {
  OccupancyHistogram histogram;  // decorrelated samples only
  std::vector<double> p;
  std::vector<double> p_err;
  double tau_int = 0.5;          // in frames of the input series
  std::size_t stride = 1;
  std::size_t samples = 0;
  double mean = 0.0, mean_err = 0.0;
  double variance = 0.0, variance_err = 0.0;
};

PnEstimate estimate_pn(std::span<const std::size_t> series, Random& rng, const PnOptions& options = {});

// -------------------------------------------------------------------- fluxes

struct LoggedEvent {
  std::size_t step = 0;  // events of step s happen between frames s-1 and s
  CrossingEvent event;
};

// Records the per-step occupancy and every crossing event.
class EventLogObserver : public Observer {
 public:
  void on_step(std::size_t step, double time, std::size_t n_inside) override;
  void on_events(std::size_t step, double step_start_time, std::span<const CrossingEvent> events) override;

  std::vector<LoggedEvent> events;
  std::vector<std::size_t> occupancy;  // occupancy[s] after step s
  std::vector<double> times;
};

// in[k]: transitions k -> k+1; out[k]: transitions k+1 -> k.
struct FluxRecord {
  std::vector<double> in;
  std::vector<double> out;
  double time = 0.0;
  void merge(const FluxRecord& other);
};

struct FluxEstimate {
  FluxRecord record;
  std::vector<double> in_rate, out_rate;
  std::vector<double> net_rate, net_err;  // (in - out) / time per edge
  double total_in_rate = 0.0, total_in_err = 0.0;
  double total_out_rate = 0.0, total_out_err = 0.0;
};

FluxEstimate estimate_flux(std::span<const LoggedEvent> events, std::span<const std::size_t> occupancy, double dt,
                           Random& rng, std::size_t blocks = 50, std::size_t resamples = 200);

// One-sided kinetic flux per unit area of a Maxwell gas.
double effusion_rate(double density, double temperature, double mass);

// ----------------------------------------------- conditional pair estimate

struct F2Binning {
  double cutoff = 2.5;
  std::size_t d_bins = 10;  // inner particle depth in [0, cutoff)
  std::size_t z_bins = 20;  // normal offset of the outer particle in [-cutoff, cutoff)
  std::size_t s_bins = 10;  // tangential offset in [0, cutoff)
};

struct ConditionalPairEstimate {
  F2Binning binning;
  std::vector<double> conditioning;  // inner samples per d bin
  std::vector<double> counts;        // [d][z][s]
  double in_window = 0.0;
  double tail = 0.0;                 // window pairs at separation >= cutoff

  explicit ConditionalPairEstimate(F2Binning b = {});
  void merge(const ConditionalPairEstimate& other);

  std::size_t index(std::size_t kd, std::size_t kz, std::size_t ks) const {
    return (kd * binning.z_bins + kz) * binning.s_bins + ks;
  }
  double d_width() const { return binning.cutoff / static_cast<double>(binning.d_bins); }
  double z_width() const { return 2.0 * binning.cutoff / static_cast<double>(binning.z_bins); }
  double s_width() const { return binning.cutoff / static_cast<double>(binning.s_bins); }
  double d_center(std::size_t k) const { return (static_cast<double>(k) + 0.5) * d_width(); }
  double z_center(std::size_t k) const { return -binning.cutoff + (static_cast<double>(k) + 0.5) * z_width(); }
  double s_center(std::size_t k) const { return (static_cast<double>(k) + 0.5) * s_width(); }
  double bin_volume(std::size_t ks) const;

  // Outer-particle number density around an inner particle in depth bin kd.
  double density(std::size_t kd, std::size_t kz, std::size_t ks) const;
  // Probability of a bin within its conditioning slice (sums to 1 per slice).
  double probability(std::size_t kd, std::size_t kz, std::size_t ks) const;
  std::vector<std::size_t> empty_conditioning_bins() const;
  double tail_fraction() const;
};

void accumulate_f2_conditional(ConditionalPairEstimate& estimate, const SimState& state,
                               const UniverseSpec& universe, const RegionSpec& region);

ConditionalPairEstimate estimate_f2_conditional(std::span<const SimState> frames, const UniverseSpec& universe,
                                                const RegionSpec& region, const F2Binning& binning);

// ----------------------------------------------------------- mean-field force

struct UniformDensity {
  double rho = 0.0;
};
using MeanFieldModel = std::variant<UniformDensity, const ConditionalPairEstimate*>;

// Normal component (along the outward normal) of the mean force exerted by
// outer particles on an inner particle at depth d below a planar face.
double mean_field_normal(const MeanFieldModel& model, double d, const PairPotential& potential,
                         double rel_tol = 1e-8);
Vec3 mean_field_force(const MeanFieldModel& model, double d, const PairPotential& potential,
                      const Vec3& outward_normal = Vec3{0.0, 0.0, 1.0});

// One-dimensional analogue for a uniform line density beyond the face.
double mean_field_normal_1d(double rho, double d, const PairPotential& potential);

// Tabulated normal force on [d_min, cutoff], linear in between, 0 beyond.
class MeanFieldForceTable {
 public:
  MeanFieldForceTable() = default;
  template <class F>
  static MeanFieldForceTable tabulate(F&& f, double d_min, double cutoff, std::size_t points) {
    MeanFieldForceTable t;
    t.d_min_ = d_min;
    t.cutoff_ = cutoff;
    for (std::size_t k = 0; k < points; ++k) {
      const double d = d_min + (cutoff - d_min) * static_cast<double>(k) / static_cast<double>(points - 1);
      t.values_.push_back(k + 1 == points ? 0.0 : f(d));
    }
    return t;
  }
  static MeanFieldForceTable zero() { return {}; }

  double operator()(double d) const;
  bool empty() const noexcept { return values_.empty(); }
  double cutoff() const noexcept { return cutoff_; }
  double max_abs() const;

 private:
  double d_min_ = 0.0;
  double cutoff_ = 0.0;
  std::vector<double> values_;
};

}  // namespace olv
