#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "olv/core.hpp"
#include "olv/potential.hpp"
#include "olv/rng.hpp"

namespace olv {

struct GCParams {
  double beta = 1.0;
  double mu = 0.0;
  double P = 0.0;
  double volume_omega = 1.0;
  double h = 1.0;
  double M = 1.0;

  void validate() const;
  // lambda_T = h / sqrt(2 pi M / beta)
  double thermal_wavelength() const;
  // z = e^{beta mu} / lambda_T^3
  double activity() const;
};

// log of e^{-beta (H_n - mu n + P |Omega|)} / (n! h^{3n})
double log_gc_weight(std::size_t n, double H_n, const GCParams& params);
double gc_weight(std::size_t n, double H_n, const GCParams& params);

// Discrete law on 0..n_max; `tail` bounds the omitted mass above n_max.
struct DiscreteLaw {
  std::vector<double> p;
  double tail = 0.0;
  double mean() const;
  double variance() const;
  double sum() const;
};

DiscreteLaw poisson_law(double lambda, std::size_t n_max = 0);  // 0: automatic truncation
DiscreteLaw binomial_law(std::size_t N, double fraction);
DiscreteLaw ideal_gas_pn(const GCParams& params, std::size_t n_max = 0);

double total_variation(const DiscreteLaw& a, const DiscreteLaw& b);

// Grand canonical Monte Carlo in a periodic box.
struct GCMCConfig {
  Vec3 box{5.0, 5.0, 5.0};
  std::size_t sweeps = 1000;
  std::size_t moves_per_sweep = 0;  // 0: max(20, n_initial)
  double p_displace = 0.4;
  double p_insert = 0.3;
  double p_delete = 0.3;
  double max_displacement = 0.2;
  std::size_t burn_in = 0;
  std::size_t sample_every = 1;  // sweeps between samples
  std::size_t n_initial = 0;
  std::size_t n_cap = 0;  // 0: unlimited; insertions at the cap are rejected
};

struct MoveStats {
  std::size_t attempted = 0;
  std::size_t accepted = 0;
  double rate() const { return attempted ? static_cast<double>(accepted) / attempted : 0.0; }
};

struct GCMCSample {
  std::size_t sweep = 0;
  std::size_t n = 0;
  double energy = 0.0;
};

struct GCMCResult {
  std::vector<GCMCSample> samples;
  MoveStats displace, insert, remove;
  std::vector<Vec3> final_positions;
  // Transition counts between n = 0 and n = 1 (for two-state checks).
  std::size_t up_01 = 0, down_10 = 0;
  std::size_t moves_at_0 = 0, moves_at_1 = 0;
};

using GCMCCallback = std::function<void(const GCMCSample&, std::span<const Vec3>)>;

GCMCResult gcmc_sample(const PairPotential& potential, const GCParams& params, const GCMCConfig& config, Random& rng,
                       const GCMCCallback& on_sample = {});

// Widom test-particle estimate of the chemical potential from NVT frames.
struct WidomResult {
  double mu_excess = 0.0;
  double mu_excess_err = 0.0;
  double mu_ideal = 0.0;
  double mu = 0.0;
  double mu_err = 0.0;
  double density = 0.0;
  std::size_t insertions = 0;
};

WidomResult widom_mu(std::span<const SimState> frames, const UniverseSpec& universe, const PairPotential& potential,
                     double h, std::size_t insertions_per_frame, Random& rng, std::size_t min_insertions = 100);

// Ideal gas: P|Omega| - T ln Z with Z = e^{z |Omega|}.
double grand_potential_residual(const GCParams& params);
// ln Z by direct summation of the Poisson terms up to n_max.
double log_partition_series(const GCParams& params, std::size_t n_max);

}  // namespace olv
