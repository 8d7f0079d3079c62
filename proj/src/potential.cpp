#include "olv/potential.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "olv/error.hpp"

namespace olv {

std::string_view to_string(PotentialKind k) noexcept {
  switch (k) {
    case PotentialKind::Ideal: return "ideal";
    case PotentialKind::LennardJones: return "lj";
    case PotentialKind::WCA: return "wca";
    case PotentialKind::SoftGaussian: return "soft_gaussian";
  }
  return "?";
}

PotentialKind potential_kind_from_string(std::string_view name) {
  if (name == "ideal") return PotentialKind::Ideal;
  if (name == "lj" || name == "lennard_jones") return PotentialKind::LennardJones;
  if (name == "wca") return PotentialKind::WCA;
  if (name == "soft_gaussian" || name == "soft") return PotentialKind::SoftGaussian;
  throw Error(ErrorCode::ConfigInvalid, "unknown potential kind '" + std::string(name) + "'");
}

PairPotential::PairPotential(const PairPotentialSpec& spec) : spec_(spec) {
  if (spec_.kind != PotentialKind::Ideal) {
    if (!(spec_.epsilon > 0.0)) throw Error(ErrorCode::ConfigInvalid, "potential epsilon must be positive");
    if (!(spec_.sigma > 0.0)) throw Error(ErrorCode::ConfigInvalid, "potential sigma must be positive");
  }
  if (spec_.kind == PotentialKind::WCA) spec_.cutoff = std::pow(2.0, 1.0 / 6.0) * spec_.sigma;
  if (spec_.kind != PotentialKind::Ideal && !(spec_.cutoff > 0.0))
    throw Error(ErrorCode::ConfigInvalid, "potential cutoff must be positive");

  cutoff2_ = spec_.cutoff * spec_.cutoff;
  if (spec_.kind == PotentialKind::LennardJones || spec_.kind == PotentialKind::WCA)
    floor_ = 0.5 * spec_.sigma;
  shift_ = 0.0;
  if (spec_.kind != PotentialKind::Ideal) shift_ = raw_energy_r2(cutoff2_);
}

double PairPotential::raw_energy_r2(double r2) const {
  switch (spec_.kind) {
    case PotentialKind::Ideal: return 0.0;
    case PotentialKind::LennardJones:
    case PotentialKind::WCA: {
      const double s6 = std::pow(spec_.sigma * spec_.sigma / r2, 3);
      return 4.0 * spec_.epsilon * (s6 * s6 - s6);
    }
    case PotentialKind::SoftGaussian:
      return spec_.epsilon * std::exp(-0.5 * r2 / (spec_.sigma * spec_.sigma));
  }
  return 0.0;
}

double PairPotential::energy_r2(double r2) const {
  if (spec_.kind == PotentialKind::Ideal || r2 >= cutoff2_) return 0.0;
  return raw_energy_r2(r2) - shift_;
}

double PairPotential::force_over_r(double r2) const {
  if (spec_.kind == PotentialKind::Ideal || r2 >= cutoff2_) return 0.0;
  switch (spec_.kind) {
    case PotentialKind::LennardJones:
    case PotentialKind::WCA: {
      const double inv2 = 1.0 / r2;
      const double s6 = std::pow(spec_.sigma * spec_.sigma * inv2, 3);
      return 24.0 * spec_.epsilon * (2.0 * s6 * s6 - s6) * inv2;
    }
    case PotentialKind::SoftGaussian: {
      const double is2 = 1.0 / (spec_.sigma * spec_.sigma);
      return spec_.epsilon * is2 * std::exp(-0.5 * r2 * is2);
    }
    case PotentialKind::Ideal: break;
  }
  return 0.0;
}

double PairPotential::trial_energy_r2(double r2) const {
  if (r2 < floor_ * floor_) return std::numeric_limits<double>::infinity();
  return energy_r2(r2);
}

double PairPotential::energy(double r) const {
  if (r < floor_ || !(r > 0.0 || floor_ == 0.0))
    throw Error(ErrorCode::ZeroSeparation, "pair separation " + std::to_string(r) + " below hard floor");
  return energy_r2(r * r);
}

double PairPotential::derivative(double r) const {
  if (r < floor_ || !(r > 0.0 || floor_ == 0.0))
    throw Error(ErrorCode::ZeroSeparation, "pair separation " + std::to_string(r) + " below hard floor");
  return -force_over_r(r * r) * r;
}

Vec3 PairPotential::force(const Vec3& r_vec) const {
  const double r2 = norm2(r_vec);
  if (r2 < floor_ * floor_ || (floor_ > 0.0 && r2 == 0.0))
    throw Error(ErrorCode::ZeroSeparation, "pair separation " + std::to_string(std::sqrt(r2)) + " below hard floor");
  return r_vec * force_over_r(r2);
}

namespace {

double checked_pair(const PairPotential& potential, const Vec3& d) {
  const double r2 = norm2(d);
  const double fl = potential.hard_floor();
  if (r2 < fl * fl)
    throw Error(ErrorCode::ZeroSeparation, "pair separation " + std::to_string(std::sqrt(r2)) + " below hard floor");
  return potential.energy_r2(r2);
}

}  // namespace

double total_potential(const SimState& state, const UniverseSpec& universe, const PairPotential& potential) {
  if (potential.is_ideal()) return 0.0;
  const auto& ps = state.particles;
  double sum = 0.0;
  for (std::size_t i = 0; i < ps.size(); ++i)
    for (std::size_t j = i + 1; j < ps.size(); ++j)
      sum += checked_pair(potential, universe.minimum_image(ps[i].q - ps[j].q));
  return sum;
}

PotentialSplit split_potential(const SimState& state, const UniverseSpec& universe, const RegionSpec& region,
                               const PairPotential& potential) {
  PotentialSplit split;
  if (potential.is_ideal()) return split;
  const auto& ps = state.particles;
  std::vector<char> inside(ps.size());
  for (std::size_t i = 0; i < ps.size(); ++i) inside[i] = region.contains(ps[i].q) ? 1 : 0;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    for (std::size_t j = i + 1; j < ps.size(); ++j) {
      const double e = checked_pair(potential, universe.minimum_image(ps[i].q - ps[j].q));
      if (inside[i] && inside[j]) split.inside += e;
      else if (!inside[i] && !inside[j]) split.outside += e;
      else split.cross += e;
    }
  }
  return split;
}

}  // namespace olv
