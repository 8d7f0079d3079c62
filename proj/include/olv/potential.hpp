#pragma once

#include <string_view>

#include "olv/core.hpp"

namespace olv {

enum class PotentialKind {
  Ideal,
  LennardJones,  // truncated and shifted at the cutoff
  WCA,           // LJ cut at its minimum 2^(1/6) sigma and shifted up by epsilon
  SoftGaussian,  // epsilon * exp(-r^2 / (2 sigma^2)), truncated and shifted; for grid solvers
};

std::string_view to_string(PotentialKind k) noexcept;
PotentialKind potential_kind_from_string(std::string_view name);

struct PairPotentialSpec {
  PotentialKind kind = PotentialKind::Ideal;
  double epsilon = 1.0;
  double sigma = 1.0;
  double cutoff = 2.5;
};

class PairPotential {
 public:
  PairPotential() = default;
  explicit PairPotential(const PairPotentialSpec& spec);

  const PairPotentialSpec& spec() const noexcept { return spec_; }
  PotentialKind kind() const noexcept { return spec_.kind; }
  bool is_ideal() const noexcept { return spec_.kind == PotentialKind::Ideal; }
  double cutoff() const noexcept { return spec_.cutoff; }
  // Separations below this raise ZeroSeparation (0 for soft kinds).
  double hard_floor() const noexcept { return floor_; }

  // Checked evaluation: throws ZeroSeparation below the hard floor.
  double energy(double r) const;
  // Derivative dV/dr (checked).
  double derivative(double r) const;
  // Force on particle i for separation r_vec = q_i - q_j (checked).
  Vec3 force(const Vec3& r_vec) const;

  // Unchecked kernels on squared distance; callers guarantee r2 > floor^2.
  double energy_r2(double r2) const;
  // -dV/dr / r, so that the force on i is force_over_r(r2) * (q_i - q_j).
  double force_over_r(double r2) const;

  // Trial-move energy: +infinity inside the hard floor instead of throwing.
  double trial_energy_r2(double r2) const;

 private:
  double raw_energy_r2(double r2) const;

  PairPotentialSpec spec_{};
  double cutoff2_ = 0.0;
  double shift_ = 0.0;
  double floor_ = 0.0;
};

// Sum over unordered pairs with the minimum-image convention (O(N^2) reference).
double total_potential(const SimState& state, const UniverseSpec& universe, const PairPotential& potential);

struct PotentialSplit {
  double inside = 0.0;   // both members in Omega
  double outside = 0.0;  // neither member in Omega
  double cross = 0.0;    // exactly one member in Omega
  double total() const { return inside + outside + cross; }
};

PotentialSplit split_potential(const SimState& state, const UniverseSpec& universe, const RegionSpec& region,
                               const PairPotential& potential);

}  // namespace olv
