#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "olv/core.hpp"
#include "olv/gc_oracle.hpp"
#include "olv/potential.hpp"
#include "olv/rng.hpp"

namespace olv {

// Single-particle birth/death kernel. Birth proposals are uniform in Omega with
// Maxwell momenta; Metropolis factors make the jump pair reversible with
// respect to the grand-canonical weight.
struct BLKernelSpec {
  double nu = 1.0;
  GCParams params;
  std::size_t n_cap = 0;          // 0: unlimited
  double birth_multiplier = 1.0;  // 1 for the reversible kernel
};

struct BLState {
  double time = 0.0;
  std::vector<PhasePoint> particles;
};

// birth = nu * m * z |Omega| * min(1, e^{-beta dU_ins}) for the proposed
// insertion at `proposed_q`; death_i = nu * min(1, e^{-beta dU_del,i}) where
// dU_del,i = -(interaction energy of particle i).
struct BLRates {
  double birth = 0.0;
  std::vector<double> death;
};

BLRates bl_rates(const BLState& state, const BLKernelSpec& kernel, const PairPotential& potential,
                 const RegionSpec& omega, const Vec3& proposed_q);

enum class JumpType { Birth, Death };

struct JumpEvent {
  double time = 0.0;
  JumpType type = JumpType::Birth;
  std::size_t n_before = 0;
  std::size_t n_after = 0;
  double dU = 0.0;
  std::size_t segment = 0;
};

struct BLStepResult {
  bool attempted = false;
  bool jumped = false;
  JumpEvent event;
};

class BLSimulator {
 public:
  BLSimulator(BLKernelSpec kernel, PairPotential potential, RegionSpec omega, double flow_dt = 0.005);

  // Draws an exponential waiting time from the bounding rate nu (m z|Omega| + n),
  // flows for min(wait, dt_max) and, if the wait ended, attempts a jump.
  BLStepResult step(BLState& state, double dt_max, Random& rng);

  // Hamiltonian flow with reflecting walls at the faces of Omega.
  void flow(BLState& state, double duration) const;

  double energy(const BLState& state) const;
  double kinetic_energy(const BLState& state) const;

  const BLKernelSpec& kernel() const noexcept { return kernel_; }
  const RegionSpec& omega() const noexcept { return omega_; }

  std::size_t births_attempted = 0, births_accepted = 0;
  std::size_t deaths_attempted = 0, deaths_accepted = 0;
  // Moments of inserted momenta (per component).
  double inserted_p2 = 0.0;
  double inserted_p4 = 0.0;
  std::size_t inserted_components = 0;

 private:
  Vec3 reflect(Vec3 q, Vec3& p) const;
  void forces(const std::vector<PhasePoint>& ps, std::vector<Vec3>& f) const;
  double interaction(const std::vector<PhasePoint>& ps, std::size_t skip, const Vec3& q) const;

  BLKernelSpec kernel_;
  PairPotential potential_;
  RegionSpec omega_;
  double flow_dt_;
  double z_volume_;
};

struct FluxBalanceReport {
  std::vector<double> up, down;       // per edge k: k -> k+1 and k+1 -> k counts
  std::vector<double> net_rate, net_err;
  double time = 0.0;
  std::size_t blocks = 0;
  // True when every edge with events satisfies |net| <= k_sigma * err.
  bool balanced(double k_sigma = 3.0) const;
};

// Blocks are segments (independent replicas of equal duration) when
// segments > 1, otherwise equal time windows.
FluxBalanceReport flux_balance_check(std::span<const JumpEvent> events, double total_time, Random& rng,
                                     std::size_t segments = 0, std::size_t time_blocks = 20,
                                     std::size_t resamples = 200);

}  // namespace olv
