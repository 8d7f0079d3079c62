#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "olv/estimators.hpp"
#include "olv/gc_oracle.hpp"
#include "olv/potential.hpp"

namespace olv {

// One-dimensional phase-space grid: positions [0, L] with nx cells, momenta
// [-p_max, p_max] with np cells, and Omega = [a, b] on cell edges.
struct GridSpec {
  double L = 10.0;
  double a = 3.0;
  double b = 7.0;
  std::size_t nx = 400;
  double p_max = 8.0;
  std::size_t np = 200;
  double dt = 0.01;
  double M = 1.0;
  bool periodic = true;  // universe walls: periodic or reflecting

  double dx() const { return L / static_cast<double>(nx); }
  double dp() const { return 2.0 * p_max / static_cast<double>(np); }
  double x(std::size_t i) const { return (static_cast<double>(i) + 0.5) * dx(); }
  double p(std::size_t j) const { return -p_max + (static_cast<double>(j) + 0.5) * dp(); }
  std::size_t ia() const;
  std::size_t ib() const;
  std::size_t n_omega() const { return ib() - ia(); }
  bool omega_is_universe() const { return ia() == 0 && ib() == nx; }

  // Checks cell alignment and the advection CFL number.
  void validate() const;
};

// Reservoir single-particle density f1°(q, p) = rho * Maxwell(p - drift; M T).
struct ReservoirDensity {
  double rho = 0.0;
  double temperature = 1.0;
  double drift = 0.0;
  double operator()(double p, double M) const;
};

enum class ClosureMode { Factorized, GrandCanonical };
// AsWritten evaluates the incoming weight at the reflected momentum -p.
enum class MomentumConvention { AsWritten, Unreflected };

struct ClosureSpec {
  ClosureMode mode = ClosureMode::Factorized;
  ReservoirDensity reservoir;
  GCParams gc;  // GrandCanonical mode (1D weights use h^n)
  MomentumConvention convention = MomentumConvention::AsWritten;
};

// Full N-particle density on (U x P)^N, N in {1, 2}; cell averages.
struct FullField {
  std::size_t N = 1;
  std::size_t nx = 0, np = 0;
  std::vector<double> F;  // N=1: [i*np + j]; N=2: [((i1*np + j1)*nx + i2)*np + j2]
  double time = 0.0;
};

// Hierarchy densities on Omega: f0 scalar, f1 on (Omega x P), f2 on (Omega x P)^2.
struct DensityField {
  std::size_t N = 1;
  std::size_t nq = 0, np = 0;
  double f0 = 0.0;
  std::vector<double> f1;
  std::vector<double> f2;
  double time = 0.0;
};

double total_mass(const FullField& F, const GridSpec& grid);
double level_mass(const DensityField& f, const GridSpec& grid, std::size_t n);
double total_mass(const DensityField& f, const GridSpec& grid);
// Mass in the outermost momentum cells over the total.
double boundary_momentum_fraction(const DensityField& f, const GridSpec& grid);
double boundary_momentum_fraction(const FullField& F, const GridSpec& grid);

// Donor-cell solver for the closed universe.
class FullLiouvilleSolver {
 public:
  FullLiouvilleSolver(GridSpec grid, PairPotential potential, std::size_t N);
  void step(FullField& F) const;
  const GridSpec& grid() const noexcept { return grid_; }

 private:
  GridSpec grid_;
  PairPotential potential_;
  std::size_t N_;
  std::vector<double> pair_force_;  // [i1 * nx + i2]: force on particle 1
};

struct HierarchyStepInfo {
  double boundary_fraction = 0.0;
  double max_debit_factor = 0.0;
};

class HierarchySolver {
 public:
  HierarchySolver(GridSpec grid, ClosureSpec closure, PairPotential potential, std::size_t N,
                  MeanFieldForceTable mean_field = {});
  HierarchyStepInfo step(DensityField& f) const;
  const GridSpec& grid() const noexcept { return grid_; }
  const ClosureSpec& closure() const noexcept { return closure_; }
  // Total force on a particle at cell i (Omega-local) from the mean field.
  double mean_field_at(std::size_t i) const { return mf_[i]; }
  double pair_force(std::size_t i1, std::size_t i2) const { return pair_force_[i1 * grid_.n_omega() + i2]; }
  double pair_energy(std::size_t i1, std::size_t i2) const { return pair_energy_[i1 * grid_.n_omega() + i2]; }

 private:
  // Value of f_{n}(X^{n-1}, (q_face, p)) entering through a face, divided by
  // f_{n-1}(X^{n-1}); `others_u` is the energy of the entering particle with
  // the particles already inside.
  double inflow_ratio(std::size_t n, double q_face, double p, double others_u) const;
  void check_debit(std::size_t n) const;

  GridSpec grid_;
  ClosureSpec closure_;
  PairPotential potential_;
  std::size_t N_;
  MeanFieldForceTable mean_field_;
  std::vector<double> mf_;           // mean-field force per Omega cell
  std::vector<double> pair_force_;   // [i1 * nq + i2], Omega-local
  std::vector<double> pair_energy_;  // [i1 * nq + i2]
  std::vector<double> face_energy_a_, face_energy_b_;  // V(face - x_i) per Omega cell
};

DensityField marginalize(const FullField& F, const GridSpec& grid);
DensityField empty_density_field(const GridSpec& grid, std::size_t N);

struct ErrorReport {
  std::vector<double> l1;    // per n, absolute (mass units; total mass is 1)
  std::vector<double> linf;  // per n, in density units
  double l1_total = 0.0;
};
ErrorReport compare(const DensityField& a, const DensityField& b, const GridSpec& grid);

struct ConvergenceReport {
  ErrorReport coarse, fine;
  double ratio = 0.0;
  double order = 0.0;
};
ConvergenceReport convergence(const ErrorReport& coarse, const ErrorReport& fine);

// Grand-canonical fields f_n ~ e^{beta mu n} e^{-beta H_n} / (n! h^n) for
// n <= N (interactions among inner particles only), normalized to mass 1.
DensityField gc_fields(const GridSpec& grid, const GCParams& params, const PairPotential& potential, std::size_t N);

// ||(step(f) - f) / dt||_1 summed over levels.
double stationary_residual(const HierarchySolver& solver, const DensityField& f);
// First-order truncation estimate: numerical diffusion in q and p plus the
// q/p splitting commutator, in the same norm.
double truncation_estimate(const HierarchySolver& solver, const DensityField& f);

// Cell averages of a product Gaussian in (q, p) for N=1, by Gauss-Legendre.
struct Gaussian1 {
  double q0 = 5.0, sq = 1.0, p0 = 0.0, sp = 1.0;
  double operator()(double q, double p) const;
};
FullField gaussian_full_field(const GridSpec& grid, const Gaussian1& g);
// Symmetrized product of two packets, normalized to mass 1 on the grid.
FullField gaussian_pair_field(const GridSpec& grid, const Gaussian1& g1, const Gaussian1& g2);
DensityField gaussian_density_field(const GridSpec& grid, const Gaussian1& g);
// Exact free-flight solution at time t (periodic universe), marginalized onto
// Omega and averaged over each cell.
DensityField exact_free_flight(const GridSpec& grid, const Gaussian1& g, double t);

// Flat binary snapshot (little-endian doubles) plus a JSON sidecar.
void write_snapshot(const DensityField& f, const GridSpec& grid, const std::string& stem);

}  // namespace olv
