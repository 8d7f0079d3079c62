#include "olv/grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>

#include <boost/math/quadrature/gauss.hpp>
#include "json.hpp"

#include "olv/error.hpp"

namespace olv {

// ------------------------------------------------------------------ spec

namespace {

std::size_t aligned_index(double x, double dx, const char* what) {
  const double k = x / dx;
  const double r = std::nearbyint(k);
  if (std::abs(k - r) > 1e-9 * std::max(1.0, std::abs(k)))
    throw Error(ErrorCode::ConfigInvalid, std::string("grid: ") + what + " is not on a cell edge");
  return static_cast<std::size_t>(r);
}

}  // namespace

std::size_t GridSpec::ia() const { return aligned_index(a, dx(), "omega lower edge"); }
std::size_t GridSpec::ib() const { return aligned_index(b, dx(), "omega upper edge"); }

void GridSpec::validate() const {
  if (!(L > 0.0) || nx == 0 || np == 0 || !(p_max > 0.0) || !(dt > 0.0) || !(M > 0.0))
    throw Error(ErrorCode::ConfigInvalid, "grid: lengths, cell counts, dt and mass must be positive");
  if (!(a >= 0.0 && a < b && b <= L)) throw Error(ErrorCode::ConfigInvalid, "grid: need 0 <= a < b <= L");
  if (np % 2 != 0) throw Error(ErrorCode::ConfigInvalid, "grid: momentum cell count must be even");
  (void)ia();
  (void)ib();
  if (omega_is_universe() && !periodic)
    throw Error(ErrorCode::ConfigInvalid, "grid: Omega = U requires a periodic universe");
  const double cfl = (p_max / M) * dt / dx();
  if (cfl > 0.9) throw Error(ErrorCode::CFLViolation, "grid: advection CFL " + std::to_string(cfl) + " exceeds 0.9");
}

double ReservoirDensity::operator()(double p, double M) const {
  if (rho == 0.0) return 0.0;
  const double s2 = M * temperature;
  const double d = p - drift;
  return rho * std::exp(-0.5 * d * d / s2) / std::sqrt(2.0 * std::numbers::pi * s2);
}

// ------------------------------------------------------------ transport

namespace {

enum class Edge { Periodic, Open, Closed };

struct Scratch {
  std::vector<double> prev, first, c, in, out;
};

// Donor-cell update along one axis for a slab of w contiguous elements per
// cell; cell k of element e sits at base[k * stride + e]. Open edges take
// inflow values `in[e]` at the upstream face and report |c| f at the
// downstream face in `out[e]`.
void advect(double* base, std::size_t n, std::size_t stride, std::size_t w, const double* c, Edge edge,
            const double* in, double* out, Scratch& s) {
  s.prev.resize(w);
  s.first.resize(w);
  for (std::size_t e = 0; e < w; ++e) {
    s.first[e] = base[e];
    s.prev[e] = edge == Edge::Periodic ? base[(n - 1) * stride + e] : (edge == Edge::Open ? in[e] : 0.0);
  }
  if (out)
    for (std::size_t e = 0; e < w; ++e) out[e] = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    double* row = base + k * stride;
    const double* next = (k + 1 < n) ? base + (k + 1) * stride : nullptr;
    for (std::size_t e = 0; e < w; ++e) {
      const double ce = c[e];
      const double old = row[e];
      if (ce > 0.0) {
        const bool last = k + 1 == n;
        const double fo = (last && edge == Edge::Closed) ? 0.0 : ce * old;
        row[e] = old - fo + ce * s.prev[e];
        s.prev[e] = old;
        if (last && out && edge == Edge::Open) out[e] = fo;
      } else if (ce < 0.0) {
        const double ac = -ce;
        const double up = next ? next[e] : (edge == Edge::Periodic ? s.first[e] : (edge == Edge::Open ? in[e] : 0.0));
        const double fo = (k == 0 && edge == Edge::Closed) ? 0.0 : ac * old;
        row[e] = old - fo + ac * up;
        if (k == 0 && out && edge == Edge::Open) out[e] = fo;
      }
    }
  }
}

double min_image_1d(double d, double L, bool periodic) {
  if (periodic) d -= L * std::nearbyint(d / L);
  return d;
}

void require_smooth(const PairPotential& potential) {
  if (potential.hard_floor() > 0.0)
    throw Error(ErrorCode::ConfigInvalid, "grid solvers need a smooth pair potential (soft_gaussian or ideal)");
}

}  // namespace

// ---------------------------------------------------------- masses

double total_mass(const FullField& F, const GridSpec& grid) {
  const double cell = std::pow(grid.dx() * grid.dp(), static_cast<double>(F.N));
  double s = 0.0;
  for (double v : F.F) s += v;
  return s * cell;
}

double level_mass(const DensityField& f, const GridSpec& grid, std::size_t n) {
  const double c = grid.dx() * grid.dp();
  double s = 0.0;
  if (n == 0) return f.f0;
  if (n == 1) {
    for (double v : f.f1) s += v;
    return s * c;
  }
  for (double v : f.f2) s += v;
  return s * c * c;
}

double total_mass(const DensityField& f, const GridSpec& grid) {
  double m = 0.0;
  for (std::size_t n = 0; n <= f.N; ++n) m += level_mass(f, grid, n);
  return m;
}

double boundary_momentum_fraction(const DensityField& f, const GridSpec& grid) {
  const std::size_t nq = f.nq, np = f.np;
  const double c = grid.dx() * grid.dp();
  double edge = 0.0;
  for (std::size_t i = 0; i < nq; ++i) edge += (f.f1[i * np] + f.f1[i * np + np - 1]) * c;
  if (f.N >= 2) {
    const std::size_t cells = nq * np;
    for (std::size_t a = 0; a < cells; ++a)
      for (std::size_t b = 0; b < cells; ++b) {
        const std::size_t j1 = a % np, j2 = b % np;
        if (j1 == 0 || j1 == np - 1 || j2 == 0 || j2 == np - 1) edge += f.f2[a * cells + b] * c * c;
      }
  }
  const double tot = total_mass(f, grid);
  return tot > 0.0 ? edge / tot : 0.0;
}

double boundary_momentum_fraction(const FullField& F, const GridSpec& grid) {
  const std::size_t np = F.np;
  const double cell = std::pow(grid.dx() * grid.dp(), static_cast<double>(F.N));
  double edge = 0.0;
  if (F.N == 1) {
    for (std::size_t i = 0; i < F.nx; ++i) edge += (F.F[i * np] + F.F[i * np + np - 1]) * cell;
  } else {
    const std::size_t cells = F.nx * np;
    for (std::size_t a = 0; a < cells; ++a)
      for (std::size_t b = 0; b < cells; ++b) {
        const std::size_t j1 = a % np, j2 = b % np;
        if (j1 == 0 || j1 == np - 1 || j2 == 0 || j2 == np - 1) edge += F.F[a * cells + b] * cell;
      }
  }
  const double tot = total_mass(F, grid);
  return tot > 0.0 ? edge / tot : 0.0;
}

// ------------------------------------------------------ full Liouville

FullLiouvilleSolver::FullLiouvilleSolver(GridSpec grid, PairPotential potential, std::size_t N)
    : grid_(grid), potential_(std::move(potential)), N_(N) {
  grid_.validate();
  require_smooth(potential_);
  if (N_ < 1 || N_ > 2) throw Error(ErrorCode::ConfigInvalid, "full Liouville solver supports N = 1 or 2");
  if (N_ == 2) {
    const std::size_t nx = grid_.nx;
    pair_force_.assign(nx * nx, 0.0);
    double fmax = 0.0;
    for (std::size_t i1 = 0; i1 < nx; ++i1)
      for (std::size_t i2 = 0; i2 < nx; ++i2) {
        const double d = min_image_1d(grid_.x(i1) - grid_.x(i2), grid_.L, grid_.periodic);
        const double f = potential_.force_over_r(d * d) * d;
        pair_force_[i1 * nx + i2] = f;
        fmax = std::max(fmax, std::abs(f));
      }
    if (fmax * grid_.dt / grid_.dp() > 0.9) throw Error(ErrorCode::CFLViolation, "grid: force CFL exceeds 0.9");
  }
}

namespace {

// Reflecting universe walls: mass leaving through x = 0 or x = L re-enters the
// boundary cell with mirrored momentum.
void deposit_reflected(double* target_cell_base, const std::vector<double>& out, std::size_t w) {
  for (std::size_t e = 0; e < w; ++e) target_cell_base[e] += out[e];
}

}  // namespace

void FullLiouvilleSolver::step(FullField& F) const {
  if (F.N != N_ || F.nx != grid_.nx || F.np != grid_.np) throw Error(ErrorCode::GridMismatch, "field/grid mismatch");
  const std::size_t nx = grid_.nx, np = grid_.np;
  const double dt = grid_.dt, dx = grid_.dx(), dp = grid_.dp();
  const Edge qedge = grid_.periodic ? Edge::Periodic : Edge::Open;
  Scratch s;
  std::vector<double> zeros(std::max(nx, np) * np, 0.0);

  if (N_ == 1) {
    s.c.resize(np);
    for (std::size_t j = 0; j < np; ++j) s.c[j] = grid_.p(j) / grid_.M * dt / dx;
    std::vector<double> out(np, 0.0);
    advect(F.F.data(), nx, np, np, s.c.data(), qedge, zeros.data(), grid_.periodic ? nullptr : out.data(), s);
    if (!grid_.periodic) {
      std::vector<double> lo(np, 0.0), hi(np, 0.0);
      for (std::size_t j = 0; j < np; ++j) (s.c[j] > 0.0 ? hi : lo)[np - 1 - j] += out[j];
      deposit_reflected(&F.F[0], lo, np);
      deposit_reflected(&F.F[(nx - 1) * np], hi, np);
    }
    F.time += dt;
    return;
  }

  const std::size_t cells = nx * np;
  auto sweep_q1 = [&](std::vector<double>& G) {
    std::vector<double> c(cells), out(cells);
    std::vector<std::vector<double>> lo(np), hi(np);
    for (std::size_t j1 = 0; j1 < np; ++j1) {
      const double cj = grid_.p(j1) / grid_.M * dt / dx;
      std::fill(c.begin(), c.end(), cj);
      advect(&G[j1 * cells], nx, np * cells, cells, c.data(), qedge, zeros.data(), grid_.periodic ? nullptr : out.data(), s);
      if (!grid_.periodic) (cj > 0.0 ? hi : lo)[np - 1 - j1] = out;
    }
    if (!grid_.periodic)
      for (std::size_t j = 0; j < np; ++j) {
        if (!lo[j].empty()) deposit_reflected(&G[(0 * np + j) * cells], lo[j], cells);
        if (!hi[j].empty()) deposit_reflected(&G[((nx - 1) * np + j) * cells], hi[j], cells);
      }
  };
  auto sweep_q2 = [&](std::vector<double>& G) {
    std::vector<double> c(np), out(np);
    for (std::size_t j2 = 0; j2 < np; ++j2) c[j2] = grid_.p(j2) / grid_.M * dt / dx;
    for (std::size_t a = 0; a < cells; ++a) {
      double* base = &G[a * cells];
      advect(base, nx, np, np, c.data(), qedge, zeros.data(), grid_.periodic ? nullptr : out.data(), s);
      if (!grid_.periodic)
        for (std::size_t j2 = 0; j2 < np; ++j2) {
          const std::size_t cell = c[j2] > 0.0 ? nx - 1 : 0;
          base[cell * np + (np - 1 - j2)] += out[j2];
        }
    }
  };
  auto sweep_p1 = [&](std::vector<double>& G) {
    std::vector<double> c(cells);
    for (std::size_t i1 = 0; i1 < nx; ++i1) {
      for (std::size_t i2 = 0; i2 < nx; ++i2)
        for (std::size_t j2 = 0; j2 < np; ++j2) c[i2 * np + j2] = pair_force_[i1 * nx + i2] * dt / dp;
      advect(&G[i1 * np * cells], np, cells, cells, c.data(), Edge::Closed, nullptr, nullptr, s);
    }
  };
  auto sweep_p2 = [&](std::vector<double>& G) {
    double c;
    for (std::size_t i1 = 0; i1 < nx; ++i1)
      for (std::size_t j1 = 0; j1 < np; ++j1)
        for (std::size_t i2 = 0; i2 < nx; ++i2) {
          c = pair_force_[i2 * nx + i1] * dt / dp;
          advect(&G[((i1 * np + j1) * nx + i2) * np], np, 1, 1, &c, Edge::Closed, nullptr, nullptr, s);
        }
  };

  std::vector<double> A = F.F, B = F.F;
  sweep_q1(A);
  sweep_q2(A);
  sweep_p1(A);
  sweep_p2(A);
  sweep_q2(B);
  sweep_q1(B);
  sweep_p2(B);
  sweep_p1(B);
  for (std::size_t k = 0; k < F.F.size(); ++k) F.F[k] = 0.5 * (A[k] + B[k]);
  F.time += dt;
}

// ------------------------------------------------------------ hierarchy

HierarchySolver::HierarchySolver(GridSpec grid, ClosureSpec closure, PairPotential potential, std::size_t N,
                                 MeanFieldForceTable mean_field)
    : grid_(grid), closure_(closure), potential_(std::move(potential)), N_(N), mean_field_(std::move(mean_field)) {
  grid_.validate();
  require_smooth(potential_);
  if (N_ < 1 || N_ > 2) throw Error(ErrorCode::ConfigInvalid, "hierarchy solver supports N = 1 or 2");
  if (closure_.mode == ClosureMode::GrandCanonical) closure_.gc.validate();
  const std::size_t nq = grid_.n_omega();
  const bool faces = !grid_.omega_is_universe();
  const double dx = grid_.dx();
  auto xc = [&](std::size_t i) { return grid_.a + (static_cast<double>(i) + 0.5) * dx; };

  mf_.assign(nq, 0.0);
  if (faces && !mean_field_.empty())
    for (std::size_t i = 0; i < nq; ++i) mf_[i] = mean_field_(grid_.b - xc(i)) - mean_field_(xc(i) - grid_.a);

  pair_force_.assign(nq * nq, 0.0);
  pair_energy_.assign(nq * nq, 0.0);
  face_energy_a_.assign(nq, 0.0);
  face_energy_b_.assign(nq, 0.0);
  double fmax = 0.0;
  for (std::size_t i1 = 0; i1 < nq; ++i1) {
    fmax = std::max(fmax, std::abs(mf_[i1]));
    for (std::size_t i2 = 0; i2 < nq; ++i2) {
      const double d = min_image_1d(xc(i1) - xc(i2), grid_.L, grid_.periodic);
      pair_force_[i1 * nq + i2] = potential_.force_over_r(d * d) * d;
      pair_energy_[i1 * nq + i2] = potential_.energy_r2(d * d);
      if (N_ >= 2) fmax = std::max(fmax, std::abs(pair_force_[i1 * nq + i2] + mf_[i1]));
    }
    const double da = min_image_1d(grid_.a - xc(i1), grid_.L, grid_.periodic);
    const double db = min_image_1d(grid_.b - xc(i1), grid_.L, grid_.periodic);
    face_energy_a_[i1] = potential_.energy_r2(da * da);
    face_energy_b_[i1] = potential_.energy_r2(db * db);
  }
  if (fmax * grid_.dt / grid_.dp() > 0.9) throw Error(ErrorCode::CFLViolation, "grid: force CFL exceeds 0.9");
  if (faces)
    for (std::size_t n = 1; n <= N_; ++n) check_debit(n);
}

double HierarchySolver::inflow_ratio(std::size_t n, double, double p, double others_u) const {
  if (closure_.mode == ClosureMode::Factorized) {
    const double pe = closure_.convention == MomentumConvention::AsWritten ? -p : p;
    return closure_.reservoir(pe, grid_.M);
  }
  const auto& gc = closure_.gc;
  return std::exp(gc.beta * gc.mu - gc.beta * (0.5 * p * p / grid_.M + others_u)) /
         (static_cast<double>(n) * gc.h);
}

void HierarchySolver::check_debit(std::size_t n) const {
  // Largest fraction of an f_{n-1} cell moved into f_n during one step.
  double u_min = 0.0;
  if (n >= 2)
    for (std::size_t i = 0; i < grid_.n_omega(); ++i) u_min = std::min({u_min, face_energy_a_[i], face_energy_b_[i]});
  double per_sweep = 0.0;
  for (std::size_t j = 0; j < grid_.np; ++j) {
    const double p = grid_.p(j);
    const double face = p > 0.0 ? grid_.a : grid_.b;
    per_sweep += std::abs(p) / grid_.M * grid_.dt * grid_.dp() * inflow_ratio(n, face, p, u_min);
  }
  const double factor = static_cast<double>(n) * per_sweep;
  if (factor > 1.0)
    throw Error(ErrorCode::CFLViolation, "grid: inflow debit factor " + std::to_string(factor) + " exceeds 1");
}

HierarchyStepInfo HierarchySolver::step(DensityField& f) const {
  const std::size_t nq = grid_.n_omega(), np = grid_.np;
  if (f.N != N_ || f.nq != nq || f.np != np) throw Error(ErrorCode::GridMismatch, "density field/grid mismatch");
  const double dt = grid_.dt, dx = grid_.dx(), dp = grid_.dp();
  const double cell = dx * dp;
  const bool faces = !grid_.omega_is_universe();
  const Edge qedge = faces ? Edge::Open : Edge::Periodic;
  Scratch s;
  HierarchyStepInfo info;

  std::vector<double> cq(np);
  for (std::size_t j = 0; j < np; ++j) cq[j] = grid_.p(j) / grid_.M * dt / dx;

  // Level 1.
  {
    std::vector<double> in(np, 0.0), out(np, 0.0);
    double debit = 0.0;
    if (faces)
      for (std::size_t j = 0; j < np; ++j) {
        if (cq[j] == 0.0) continue;
        const double face = cq[j] > 0.0 ? grid_.a : grid_.b;
        in[j] = f.f0 * inflow_ratio(1, face, grid_.p(j), 0.0);
        debit += std::abs(cq[j]) * in[j] * cell;
      }
    advect(f.f1.data(), nq, np, np, cq.data(), qedge, in.data(), faces ? out.data() : nullptr, s);
    f.f0 -= debit;
    if (!mean_field_.empty() && faces)
      for (std::size_t i = 0; i < nq; ++i) {
        double c = mf_[i] * dt / dp;
        if (c != 0.0) advect(&f.f1[i * np], np, 1, 1, &c, Edge::Closed, nullptr, nullptr, s);
      }
    if (faces) {
      double gain = 0.0;
      for (std::size_t j = 0; j < np; ++j) gain += out[j] * cell;
      f.f0 += gain;
    }
  }

  // Level 2: average of the two mirrored sweep orderings.
  if (N_ >= 2) {
    const std::size_t cells = nq * np;
    const bool forces = !potential_.is_ideal() || !mean_field_.empty();
    auto sweep_q1 = [&](std::vector<double>& G, std::vector<double>& d1) {
      std::vector<double> c(cells), in(cells, 0.0), out(cells, 0.0);
      for (std::size_t j1 = 0; j1 < np; ++j1) {
        const double cj = cq[j1];
        if (cj == 0.0) continue;
        std::fill(c.begin(), c.end(), cj);
        if (faces) {
          const double face = cj > 0.0 ? grid_.a : grid_.b;
          const auto& fe = cj > 0.0 ? face_energy_a_ : face_energy_b_;
          for (std::size_t i2 = 0; i2 < nq; ++i2) {
            const double r = inflow_ratio(2, face, grid_.p(j1), fe[i2]);
            for (std::size_t j2 = 0; j2 < np; ++j2) in[i2 * np + j2] = f.f1[i2 * np + j2] * r;
          }
        }
        advect(&G[j1 * cells], nq, np * cells, cells, c.data(), qedge, in.data(), faces ? out.data() : nullptr, s);
        if (faces)
          for (std::size_t e = 0; e < cells; ++e) d1[e] += (out[e] - std::abs(cj) * in[e]) * cell;
      }
    };
    auto sweep_q2 = [&](std::vector<double>& G, std::vector<double>& d1) {
      std::vector<double> in(np, 0.0), out(np, 0.0);
      for (std::size_t a = 0; a < cells; ++a) {
        const std::size_t i1 = a / np;
        if (faces)
          for (std::size_t j2 = 0; j2 < np; ++j2) {
            if (cq[j2] == 0.0) continue;
            const bool left = cq[j2] > 0.0;
            const double r = inflow_ratio(2, left ? grid_.a : grid_.b, grid_.p(j2),
                                          left ? face_energy_a_[i1] : face_energy_b_[i1]);
            in[j2] = f.f1[a] * r;
          }
        advect(&G[a * cells], nq, np, np, cq.data(), qedge, in.data(), faces ? out.data() : nullptr, s);
        if (faces) {
          double dsum = 0.0;
          for (std::size_t j2 = 0; j2 < np; ++j2) dsum += out[j2] - std::abs(cq[j2]) * in[j2];
          d1[a] += dsum * cell;
        }
      }
    };
    auto sweep_p1 = [&](std::vector<double>& G) {
      std::vector<double> c(cells);
      for (std::size_t i1 = 0; i1 < nq; ++i1) {
        for (std::size_t i2 = 0; i2 < nq; ++i2) {
          const double ci = (pair_force_[i1 * nq + i2] + mf_[i1]) * dt / dp;
          for (std::size_t j2 = 0; j2 < np; ++j2) c[i2 * np + j2] = ci;
        }
        advect(&G[i1 * np * cells], np, cells, cells, c.data(), Edge::Closed, nullptr, nullptr, s);
      }
    };
    auto sweep_p2 = [&](std::vector<double>& G) {
      for (std::size_t i1 = 0; i1 < nq; ++i1)
        for (std::size_t j1 = 0; j1 < np; ++j1)
          for (std::size_t i2 = 0; i2 < nq; ++i2) {
            double c = (pair_force_[i2 * nq + i1] + mf_[i2]) * dt / dp;
            advect(&G[((i1 * np + j1) * nq + i2) * np], np, 1, 1, &c, Edge::Closed, nullptr, nullptr, s);
          }
    };

    std::vector<double> A = f.f2, B = f.f2;
    std::vector<double> dA(cells, 0.0), dB(cells, 0.0);
    sweep_q1(A, dA);
    sweep_q2(A, dA);
    if (forces) {
      sweep_p1(A);
      sweep_p2(A);
    }
    sweep_q2(B, dB);
    sweep_q1(B, dB);
    if (forces) {
      sweep_p2(B);
      sweep_p1(B);
    }
    for (std::size_t k = 0; k < f.f2.size(); ++k) f.f2[k] = 0.5 * (A[k] + B[k]);
    if (faces)
      for (std::size_t e = 0; e < cells; ++e) f.f1[e] += 0.5 * (dA[e] + dB[e]);
  }

  auto check = [](const std::vector<double>& v, const char* what) {
    for (double x : v)
      if (x < 0.0 || !std::isfinite(x))
        throw Error(ErrorCode::NegativeDensity, std::string("negative or non-finite density in ") + what);
  };
  if (f.f0 < 0.0 || !std::isfinite(f.f0)) throw Error(ErrorCode::NegativeDensity, "negative or non-finite f0");
  check(f.f1, "f1");
  check(f.f2, "f2");
  f.time += dt;
  info.boundary_fraction = boundary_momentum_fraction(f, grid_);
  return info;
}

// ----------------------------------------------------- marginalization

DensityField empty_density_field(const GridSpec& grid, std::size_t N) {
  DensityField f;
  f.N = N;
  f.nq = grid.n_omega();
  f.np = grid.np;
  f.f1.assign(f.nq * f.np, 0.0);
  if (N >= 2) f.f2.assign(f.nq * f.np * f.nq * f.np, 0.0);
  return f;
}

DensityField marginalize(const FullField& F, const GridSpec& grid) {
  if (F.nx != grid.nx || F.np != grid.np) throw Error(ErrorCode::GridMismatch, "full field does not match the grid");
  DensityField f = empty_density_field(grid, F.N);
  f.time = F.time;
  const std::size_t nx = grid.nx, np = grid.np, ia = grid.ia(), ib = grid.ib(), nq = f.nq;
  const double cell = grid.dx() * grid.dp();
  auto inside = [&](std::size_t i) { return i >= ia && i < ib; };
  if (F.N == 1) {
    double out = 0.0;
    for (std::size_t i = 0; i < nx; ++i)
      for (std::size_t j = 0; j < np; ++j) {
        const double v = F.F[i * np + j];
        if (inside(i)) f.f1[(i - ia) * np + j] = v;
        else out += v;
      }
    f.f0 = out * cell;
    return f;
  }
  const std::size_t fc = nx * np, oc = nq * np;
  double out = 0.0;
  for (std::size_t i1 = 0; i1 < nx; ++i1)
    for (std::size_t j1 = 0; j1 < np; ++j1)
      for (std::size_t i2 = 0; i2 < nx; ++i2)
        for (std::size_t j2 = 0; j2 < np; ++j2) {
          const double v = F.F[(i1 * np + j1) * fc + i2 * np + j2];
          const bool in1 = inside(i1), in2 = inside(i2);
          if (in1 && in2) f.f2[((i1 - ia) * np + j1) * oc + (i2 - ia) * np + j2] = v;
          else if (in1) f.f1[(i1 - ia) * np + j1] += v * cell;
          else if (in2) f.f1[(i2 - ia) * np + j2] += v * cell;
          else out += v;
        }
  f.f0 = out * cell * cell;
  return f;
}

ErrorReport compare(const DensityField& a, const DensityField& b, const GridSpec& grid) {
  if (a.N != b.N || a.nq != b.nq || a.np != b.np || a.f1.size() != b.f1.size() || a.f2.size() != b.f2.size())
    throw Error(ErrorCode::GridMismatch, "compared fields have different shapes");
  ErrorReport r;
  const double cell = grid.dx() * grid.dp();
  r.l1.assign(a.N + 1, 0.0);
  r.linf.assign(a.N + 1, 0.0);
  r.l1[0] = r.linf[0] = std::abs(a.f0 - b.f0);
  for (std::size_t k = 0; k < a.f1.size(); ++k) {
    const double d = std::abs(a.f1[k] - b.f1[k]);
    r.l1[1] += d * cell;
    r.linf[1] = std::max(r.linf[1], d);
  }
  for (std::size_t k = 0; k < a.f2.size(); ++k) {
    const double d = std::abs(a.f2[k] - b.f2[k]);
    r.l1[2] += d * cell * cell;
    r.linf[2] = std::max(r.linf[2], d);
  }
  for (double v : r.l1) r.l1_total += v;
  return r;
}

ConvergenceReport convergence(const ErrorReport& coarse, const ErrorReport& fine) {
  ConvergenceReport c{coarse, fine, 0.0, 0.0};
  if (fine.l1_total > 0.0) {
    c.ratio = coarse.l1_total / fine.l1_total;
    c.order = std::log2(c.ratio);
  }
  return c;
}

// ------------------------------------------------------ GC fields

DensityField gc_fields(const GridSpec& grid, const GCParams& params, const PairPotential& potential, std::size_t N) {
  grid.validate();
  params.validate();
  HierarchySolver geometry(grid, ClosureSpec{}, potential, N);
  DensityField f = empty_density_field(grid, N);
  const std::size_t nq = f.nq, np = f.np;
  const double beta = params.beta;
  std::vector<double> kin(np);
  for (std::size_t j = 0; j < np; ++j) kin[j] = 0.5 * grid.p(j) * grid.p(j) / grid.M;
  f.f0 = 1.0;
  for (std::size_t i = 0; i < nq; ++i)
    for (std::size_t j = 0; j < np; ++j) f.f1[i * np + j] = std::exp(beta * params.mu - beta * kin[j]) / params.h;
  if (N >= 2) {
    const std::size_t cells = nq * np;
    for (std::size_t a = 0; a < cells; ++a)
      for (std::size_t b = 0; b < cells; ++b) {
        const std::size_t i1 = a / np, j1 = a % np, i2 = b / np, j2 = b % np;
        const double H = kin[j1] + kin[j2] + geometry.pair_energy(i1, i2);
        f.f2[a * cells + b] = std::exp(2.0 * beta * params.mu - beta * H) / (2.0 * params.h * params.h);
      }
  }
  const double m = total_mass(f, grid);
  f.f0 /= m;
  for (double& v : f.f1) v /= m;
  for (double& v : f.f2) v /= m;
  return f;
}

double stationary_residual(const HierarchySolver& solver, const DensityField& f) {
  DensityField g = f;
  solver.step(g);
  const auto r = compare(g, f, solver.grid());
  return r.l1_total / solver.grid().dt;
}

double truncation_estimate(const HierarchySolver& solver, const DensityField& f) {
  const GridSpec& grid = solver.grid();
  const std::size_t nq = f.nq, np = f.np;
  const double dx = grid.dx(), dp = grid.dp(), dt = grid.dt, M = grid.M;
  const double cell = dx * dp;
  const bool faces = !grid.omega_is_universe();

  // Derivatives along one axis of a line accessor g(k), k in [0, n).
  struct D {
    double d1, d2;
  };
  auto diff = [](auto&& g, std::size_t k, std::size_t n, double h) {
    if (n < 3) return D{0.0, 0.0};
    const std::size_t c = std::clamp<std::size_t>(k, 1, n - 2);
    const double d2 = (g(c + 1) - 2.0 * g(c) + g(c - 1)) / (h * h);
    double d1;
    if (k == 0) d1 = (g(1) - g(0)) / h;
    else if (k == n - 1) d1 = (g(n - 1) - g(n - 2)) / h;
    else d1 = (g(k + 1) - g(k - 1)) / (2.0 * h);
    return D{d1, d2};
  };

  double est = 0.0;
  // Level 1.
  for (std::size_t i = 0; i < nq; ++i)
    for (std::size_t j = 0; j < np; ++j) {
      const double v = grid.p(j) / M;
      const double F = solver.mean_field_at(i);
      const D q = diff([&](std::size_t k) { return f.f1[k * np + j]; }, i, nq, dx);
      const D p = diff([&](std::size_t k) { return f.f1[i * np + k]; }, j, np, dp);
      double e = 0.5 * std::abs(v) * dx * std::abs(q.d2) + 0.5 * std::abs(F) * dp * std::abs(p.d2);
      if (F != 0.0) {
        const D qp = diff([&](std::size_t k) { return diff([&](std::size_t m) { return f.f1[k * np + m]; }, j, np, dp).d1; }, i, nq, dx);
        e += dt * std::abs(F) * std::abs(q.d1 / M + v * qp.d1);
      }
      const bool inflow_cell = faces && ((v > 0.0 && i == 0) || (v < 0.0 && i == nq - 1));
      if (inflow_cell) e += 0.5 * std::abs(v) * std::abs(q.d1);
      est += e * cell;
    }
  // Level 2.
  if (f.N >= 2) {
    const std::size_t cells = nq * np;
    auto at = [&](std::size_t i1, std::size_t j1, std::size_t i2, std::size_t j2) {
      return f.f2[(i1 * np + j1) * cells + i2 * np + j2];
    };
    for (std::size_t i1 = 0; i1 < nq; ++i1)
      for (std::size_t j1 = 0; j1 < np; ++j1)
        for (std::size_t i2 = 0; i2 < nq; ++i2)
          for (std::size_t j2 = 0; j2 < np; ++j2) {
            const double v1 = grid.p(j1) / M, v2 = grid.p(j2) / M;
            const double F1 = solver.pair_force(i1, i2) + solver.mean_field_at(i1);
            const double F2 = solver.pair_force(i2, i1) + solver.mean_field_at(i2);
            const D q1 = diff([&](std::size_t k) { return at(k, j1, i2, j2); }, i1, nq, dx);
            const D q2 = diff([&](std::size_t k) { return at(i1, j1, k, j2); }, i2, nq, dx);
            const D p1 = diff([&](std::size_t k) { return at(i1, k, i2, j2); }, j1, np, dp);
            const D p2 = diff([&](std::size_t k) { return at(i1, j1, i2, k); }, j2, np, dp);
            double e = 0.5 * std::abs(v1) * dx * std::abs(q1.d2) + 0.5 * std::abs(v2) * dx * std::abs(q2.d2) +
                       0.5 * std::abs(F1) * dp * std::abs(p1.d2) + 0.5 * std::abs(F2) * dp * std::abs(p2.d2);
            if (F1 != 0.0 || F2 != 0.0) {
              // B A f = sum_k F_k [ d_qk f / M + sum_i v_i d_pk d_qi f ].
              auto mixed = [&](int pk, int qi) {
                auto dq = [&](std::size_t a1, std::size_t b1, std::size_t a2, std::size_t b2) {
                  if (qi == 1) return diff([&](std::size_t k) { return at(k, b1, a2, b2); }, a1, nq, dx).d1;
                  return diff([&](std::size_t k) { return at(a1, b1, k, b2); }, a2, nq, dx).d1;
                };
                if (pk == 1) return diff([&](std::size_t k) { return dq(i1, k, i2, j2); }, j1, np, dp).d1;
                return diff([&](std::size_t k) { return dq(i1, j1, i2, k); }, j2, np, dp).d1;
              };
              const double ba = F1 * (q1.d1 / M + v1 * mixed(1, 1) + v2 * mixed(1, 2)) +
                                F2 * (q2.d1 / M + v1 * mixed(2, 1) + v2 * mixed(2, 2));
              e += dt * std::abs(ba);
            }
            if (faces) {
              if ((v1 > 0.0 && i1 == 0) || (v1 < 0.0 && i1 == nq - 1)) e += 0.5 * std::abs(v1) * std::abs(q1.d1);
              if ((v2 > 0.0 && i2 == 0) || (v2 < 0.0 && i2 == nq - 1)) e += 0.5 * std::abs(v2) * std::abs(q2.d1);
            }
            est += e * cell * cell;
          }
  }
  // f0 changes by minus the net mass change of the other levels.
  return 2.0 * est;
}

// ----------------------------------------------------- Gaussian data

double Gaussian1::operator()(double q, double p) const {
  const double a = (q - q0) / sq, b = (p - p0) / sp;
  return std::exp(-0.5 * (a * a + b * b)) / (2.0 * std::numbers::pi * sq * sp);
}

namespace {

using GL = boost::math::quadrature::gauss<double, 8>;

// Cell average of a separable-in-cell function by tensor Gauss-Legendre.
template <class Fn>
double cell_average(Fn&& fn, double x0, double x1, double p0, double p1) {
  const double hx = 0.5 * (x1 - x0), cx = 0.5 * (x0 + x1);
  const double hp = 0.5 * (p1 - p0), cp = 0.5 * (p0 + p1);
  const auto& absc = GL::abscissa();
  const auto& wts = GL::weights();
  double s = 0.0;
  auto nodes = [&](auto&& body) {
    for (std::size_t a = 0; a < absc.size(); ++a) {
      if (absc[a] == 0.0) {
        body(0.0, wts[a]);
      } else {
        body(absc[a], wts[a]);
        body(-absc[a], wts[a]);
      }
    }
  };
  nodes([&](double u, double wu) {
    nodes([&](double v, double wv) { s += wu * wv * fn(cx + hx * u, cp + hp * v); });
  });
  return 0.25 * s;  // weights sum to 2 per axis
}

std::vector<double> gaussian_cells(const GridSpec& grid, const Gaussian1& g) {
  std::vector<double> out(grid.nx * grid.np);
  const double dx = grid.dx(), dp = grid.dp();
  for (std::size_t i = 0; i < grid.nx; ++i)
    for (std::size_t j = 0; j < grid.np; ++j) {
      const double x0 = i * dx, p0 = -grid.p_max + j * dp;
      out[i * grid.np + j] = cell_average(g, x0, x0 + dx, p0, p0 + dp);
    }
  return out;
}

}  // namespace

FullField gaussian_full_field(const GridSpec& grid, const Gaussian1& g) {
  FullField F;
  F.N = 1;
  F.nx = grid.nx;
  F.np = grid.np;
  F.F = gaussian_cells(grid, g);
  const double m = total_mass(F, grid);
  for (double& v : F.F) v /= m;
  return F;
}

FullField gaussian_pair_field(const GridSpec& grid, const Gaussian1& g1, const Gaussian1& g2) {
  const auto a = gaussian_cells(grid, g1);
  const auto b = gaussian_cells(grid, g2);
  FullField F;
  F.N = 2;
  F.nx = grid.nx;
  F.np = grid.np;
  const std::size_t cells = grid.nx * grid.np;
  F.F.resize(cells * cells);
  for (std::size_t x = 0; x < cells; ++x)
    for (std::size_t y = 0; y < cells; ++y) F.F[x * cells + y] = 0.5 * (a[x] * b[y] + b[x] * a[y]);
  const double m = total_mass(F, grid);
  for (double& v : F.F) v /= m;
  return F;
}

DensityField gaussian_density_field(const GridSpec& grid, const Gaussian1& g) {
  return marginalize(gaussian_full_field(grid, g), grid);
}

DensityField exact_free_flight(const GridSpec& grid, const Gaussian1& g, double t) {
  // Same normalization as the discretized initial data.
  FullField F0;
  F0.N = 1;
  F0.nx = grid.nx;
  F0.np = grid.np;
  F0.F = gaussian_cells(grid, g);
  const double norm = total_mass(F0, grid);
  const double L = grid.L;
  auto periodic_g = [&](double x, double p) {
    double q = x - p / grid.M * t;
    if (grid.periodic) q -= L * std::floor(q / L);
    double s = 0.0;
    for (int m = -1; m <= 1; ++m) s += g(q + m * L, p);
    return s;
  };
  DensityField f = empty_density_field(grid, 1);
  f.time = t;
  const double dx = grid.dx(), dp = grid.dp();
  const std::size_t ia = grid.ia();
  double inside = 0.0;
  for (std::size_t i = 0; i < f.nq; ++i)
    for (std::size_t j = 0; j < grid.np; ++j) {
      const double x0 = (ia + i) * dx, p0 = -grid.p_max + j * dp;
      const double v = cell_average(periodic_g, x0, x0 + dx, p0, p0 + dp) / norm;
      f.f1[i * grid.np + j] = v;
      inside += v * dx * dp;
    }
  f.f0 = 1.0 - inside;
  return f;
}

// ---------------------------------------------------------- snapshots

void write_snapshot(const DensityField& f, const GridSpec& grid, const std::string& stem) {
  std::ofstream bin(stem + ".bin", std::ios::binary);
  if (!bin) throw Error(ErrorCode::IoError, "cannot write " + stem + ".bin");
  auto put = [&](const std::vector<double>& v) {
    bin.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
  };
  put({f.f0});
  put(f.f1);
  put(f.f2);
  nlohmann::json j;
  j["format"] = "float64-le";
  j["N"] = f.N;
  j["time"] = f.time;
  j["levels"] = {{{"name", "f0"}, {"shape", std::vector<std::size_t>{}}},
                 {{"name", "f1"}, {"shape", {f.nq, f.np}}},
                 {{"name", "f2"}, {"shape", f.N >= 2 ? std::vector<std::size_t>{f.nq, f.np, f.nq, f.np} : std::vector<std::size_t>{0}}}};
  j["omega"] = {grid.a, grid.b};
  j["universe_length"] = grid.L;
  j["dx"] = grid.dx();
  j["p_range"] = {-grid.p_max, grid.p_max};
  j["dp"] = grid.dp();
  j["cell_centers"] = "x = a + (i + 1/2) dx, p = -p_max + (j + 1/2) dp";
  std::ofstream side(stem + ".json");
  if (!side) throw Error(ErrorCode::IoError, "cannot write " + stem + ".json");
  side << j.dump(2) << "\n";
}

}  // namespace olv
