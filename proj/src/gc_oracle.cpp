#include "olv/gc_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <boost/math/distributions/binomial.hpp>
#include <boost/math/distributions/poisson.hpp>

#include "olv/error.hpp"
#include "olv/stats.hpp"

namespace olv {

void GCParams::validate() const {
  if (!(beta > 0.0)) throw Error(ErrorCode::ConfigInvalid, "beta must be positive");
  if (!(volume_omega > 0.0)) throw Error(ErrorCode::ConfigInvalid, "|Omega| must be positive");
  if (!(h > 0.0)) throw Error(ErrorCode::ConfigInvalid, "h must be positive");
  if (!(M > 0.0)) throw Error(ErrorCode::ConfigInvalid, "mass must be positive");
  if (!std::isfinite(mu) || !std::isfinite(P)) throw Error(ErrorCode::ConfigInvalid, "mu and P must be finite");
}

double GCParams::thermal_wavelength() const { return h / std::sqrt(2.0 * std::numbers::pi * M / beta); }

double GCParams::activity() const {
  const double l = thermal_wavelength();
  return std::exp(beta * mu) / (l * l * l);
}

double log_gc_weight(std::size_t n, double H_n, const GCParams& params) {
  const double dn = static_cast<double>(n);
  return -params.beta * (H_n - params.mu * dn + params.P * params.volume_omega) - std::lgamma(dn + 1.0) -
         3.0 * dn * std::log(params.h);
}

double gc_weight(std::size_t n, double H_n, const GCParams& params) { return std::exp(log_gc_weight(n, H_n, params)); }

double DiscreteLaw::mean() const {
  double m = 0.0;
  for (std::size_t n = 0; n < p.size(); ++n) m += static_cast<double>(n) * p[n];
  return m;
}

double DiscreteLaw::variance() const {
  const double m = mean();
  double v = 0.0;
  for (std::size_t n = 0; n < p.size(); ++n) v += (static_cast<double>(n) - m) * (static_cast<double>(n) - m) * p[n];
  return v;
}

double DiscreteLaw::sum() const {
  double s = 0.0;
  for (double v : p) s += v;
  return s;
}

DiscreteLaw poisson_law(double lambda, std::size_t n_max) {
  if (!(lambda >= 0.0)) throw Error(ErrorCode::ConfigInvalid, "Poisson mean must be non-negative");
  DiscreteLaw law;
  if (lambda == 0.0) {
    law.p = {1.0};
    return law;
  }
  if (n_max == 0) n_max = static_cast<std::size_t>(std::ceil(lambda + 12.0 * std::sqrt(lambda) + 30.0));
  boost::math::poisson_distribution<double> dist(lambda);
  law.p.resize(n_max + 1);
  for (std::size_t n = 0; n <= n_max; ++n) law.p[n] = boost::math::pdf(dist, static_cast<double>(n));
  law.tail = boost::math::cdf(boost::math::complement(dist, static_cast<double>(n_max)));
  return law;
}

DiscreteLaw binomial_law(std::size_t N, double fraction) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw Error(ErrorCode::ConfigInvalid, "fraction must lie in [0, 1]");
  DiscreteLaw law;
  boost::math::binomial_distribution<double> dist(static_cast<double>(N), fraction);
  law.p.resize(N + 1);
  for (std::size_t n = 0; n <= N; ++n) law.p[n] = boost::math::pdf(dist, static_cast<double>(n));
  return law;
}

DiscreteLaw ideal_gas_pn(const GCParams& params, std::size_t n_max) {
  params.validate();
  return poisson_law(params.activity() * params.volume_omega, n_max);
}

double total_variation(const DiscreteLaw& a, const DiscreteLaw& b) {
  const std::size_t n = std::max(a.p.size(), b.p.size());
  double s = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double pa = k < a.p.size() ? a.p[k] : 0.0;
    const double pb = k < b.p.size() ? b.p[k] : 0.0;
    s += std::abs(pa - pb);
  }
  return 0.5 * (s + a.tail + b.tail);
}

// ---------------------------------------------------------------------- GCMC

namespace {

class PeriodicBox {
 public:
  explicit PeriodicBox(Vec3 L) : L_(L) {}
  Vec3 wrap(Vec3 q) const {
    for (int k = 0; k < 3; ++k) {
      q[k] -= L_[k] * std::floor(q[k] / L_[k]);
      if (q[k] >= L_[k]) q[k] = 0.0;
    }
    return q;
  }
  Vec3 image(Vec3 d) const {
    for (int k = 0; k < 3; ++k) d[k] -= L_[k] * std::nearbyint(d[k] / L_[k]);
    return d;
  }
  Vec3 random_point(Random& rng) const { return {rng.uniform() * L_.x, rng.uniform() * L_.y, rng.uniform() * L_.z}; }
  double volume() const { return L_.x * L_.y * L_.z; }

 private:
  Vec3 L_;
};

double particle_energy(const std::vector<Vec3>& pos, std::size_t skip, const Vec3& q, const PeriodicBox& box,
                       const PairPotential& potential) {
  if (potential.is_ideal()) return 0.0;
  double e = 0.0;
  for (std::size_t j = 0; j < pos.size(); ++j) {
    if (j == skip) continue;
    e += potential.trial_energy_r2(norm2(box.image(q - pos[j])));
  }
  return e;
}

bool metropolis(double log_ratio, Random& rng) {
  if (log_ratio >= 0.0) return true;
  return std::log(rng.uniform_open_left()) < log_ratio;
}

}  // namespace

GCMCResult gcmc_sample(const PairPotential& potential, const GCParams& params, const GCMCConfig& config, Random& rng,
                       const GCMCCallback& on_sample) {
  params.validate();
  for (int k = 0; k < 3; ++k)
    if (!(config.box[k] > 0.0)) throw Error(ErrorCode::ConfigInvalid, "GCMC box lengths must be positive");
  const double min_edge = std::min({config.box.x, config.box.y, config.box.z});
  if (!potential.is_ideal() && potential.cutoff() > 0.5 * min_edge)
    throw Error(ErrorCode::ConfigInvalid, "GCMC cutoff exceeds half the box edge");
  const double psum = config.p_displace + config.p_insert + config.p_delete;
  if (!(psum > 0.0) || config.p_displace < 0.0 || config.p_insert < 0.0 || config.p_delete < 0.0)
    throw Error(ErrorCode::ConfigInvalid, "GCMC move probabilities must be non-negative with a positive sum");
  if ((config.p_insert > 0.0) != (config.p_delete > 0.0))
    throw Error(ErrorCode::ConfigInvalid, "GCMC needs both insertion and deletion moves or neither");
  if (config.sample_every == 0) throw Error(ErrorCode::ConfigInvalid, "sample_every must be positive");

  const PeriodicBox box(config.box);
  const double V = box.volume();
  const double beta = params.beta;
  const double log_zV = beta * params.mu - 3.0 * std::log(params.thermal_wavelength()) + std::log(V);
  const double pd = config.p_displace / psum;
  const double pi = config.p_insert / psum;
  const double log_proposal = (pi > 0.0) ? std::log(config.p_delete / config.p_insert) : 0.0;

  GCMCResult res;
  std::vector<Vec3> pos;
  double U = 0.0;
  for (std::size_t k = 0; k < config.n_initial; ++k) {
    Vec3 q;
    double e = std::numeric_limits<double>::infinity();
    for (int attempt = 0; attempt < 10000 && !std::isfinite(e); ++attempt) {
      q = box.random_point(rng);
      e = particle_energy(pos, static_cast<std::size_t>(-1), q, box, potential);
    }
    if (!std::isfinite(e)) throw Error(ErrorCode::ConfigInvalid, "cannot place initial GCMC particles");
    pos.push_back(q);
    U += e;
  }

  // A state-dependent sweep length would bias the sampled law.
  const std::size_t moves = config.moves_per_sweep ? config.moves_per_sweep : std::max<std::size_t>(20, config.n_initial);
  for (std::size_t sweep = 1; sweep <= config.burn_in + config.sweeps; ++sweep) {
    for (std::size_t m = 0; m < moves; ++m) {
      const std::size_t n = pos.size();
      if (n == 0) ++res.moves_at_0;
      if (n == 1) ++res.moves_at_1;
      const double u = rng.uniform();
      if (u < pd) {
        ++res.displace.attempted;
        if (n == 0) continue;
        const std::size_t i = rng.below(n);
        Vec3 q = pos[i];
        for (int k = 0; k < 3; ++k) q[k] += config.max_displacement * rng.uniform(-1.0, 1.0);
        q = box.wrap(q);
        const double e_new = particle_energy(pos, i, q, box, potential);
        if (!std::isfinite(e_new)) continue;
        const double e_old = particle_energy(pos, i, pos[i], box, potential);
        if (metropolis(-beta * (e_new - e_old), rng)) {
          pos[i] = q;
          U += e_new - e_old;
          ++res.displace.accepted;
        }
      } else if (u < pd + pi) {
        ++res.insert.attempted;
        if (config.n_cap && n >= config.n_cap) continue;
        const Vec3 q = box.random_point(rng);
        const double e = particle_energy(pos, static_cast<std::size_t>(-1), q, box, potential);
        if (!std::isfinite(e)) continue;
        const double log_acc = log_zV - std::log(static_cast<double>(n + 1)) - beta * e + log_proposal;
        if (metropolis(log_acc, rng)) {
          pos.push_back(q);
          U += e;
          ++res.insert.accepted;
          if (n == 0) ++res.up_01;
        }
      } else {
        ++res.remove.attempted;
        if (n == 0) continue;
        const std::size_t i = rng.below(n);
        const double e = particle_energy(pos, i, pos[i], box, potential);
        const double log_acc = std::log(static_cast<double>(n)) - log_zV + beta * e - log_proposal;
        if (metropolis(log_acc, rng)) {
          pos[i] = pos.back();
          pos.pop_back();
          U -= e;
          ++res.remove.accepted;
          if (n == 1) ++res.down_10;
        }
      }
    }
    if (sweep > config.burn_in && (sweep - config.burn_in) % config.sample_every == 0) {
      GCMCSample s{sweep, pos.size(), U};
      res.samples.push_back(s);
      if (on_sample) on_sample(s, pos);
    }
  }
  res.final_positions = pos;
  return res;
}

// --------------------------------------------------------------------- Widom

WidomResult widom_mu(std::span<const SimState> frames, const UniverseSpec& universe, const PairPotential& potential,
                     double h, std::size_t insertions_per_frame, Random& rng, std::size_t min_insertions) {
  validate(universe);
  WidomResult r;
  r.insertions = frames.size() * insertions_per_frame;
  if (r.insertions < min_insertions || frames.empty())
    throw Error(ErrorCode::TooFewInsertions, "Widom estimate needs at least " + std::to_string(min_insertions) +
                                                 " insertions, got " + std::to_string(r.insertions));
  const double T = universe.temperature;
  const double beta = 1.0 / T;
  std::vector<double> per_frame;
  per_frame.reserve(frames.size());
  double n_sum = 0.0;
  for (const auto& f : frames) {
    n_sum += static_cast<double>(f.particles.size());
    double w = 0.0;
    for (std::size_t k = 0; k < insertions_per_frame; ++k) {
      const Vec3 q{rng.uniform() * universe.box_lengths.x, rng.uniform() * universe.box_lengths.y,
                   rng.uniform() * universe.box_lengths.z};
      double e = 0.0;
      if (!potential.is_ideal())
        for (const auto& pp : f.particles) {
          e += potential.trial_energy_r2(norm2(universe.minimum_image(q - pp.q)));
          if (!std::isfinite(e)) break;
        }
      w += std::exp(-beta * e);
    }
    per_frame.push_back(w / static_cast<double>(insertions_per_frame));
  }
  const MeanVar mv = mean_var(per_frame);
  if (!(mv.mean > 0.0)) throw Error(ErrorCode::TooFewInsertions, "no Widom insertion had finite energy");
  const double W_err = std::sqrt(mv.variance / static_cast<double>(per_frame.size()));
  r.mu_excess = -T * std::log(mv.mean);
  r.mu_excess_err = T * W_err / mv.mean;
  r.density = n_sum / static_cast<double>(frames.size()) / universe.volume();
  GCParams p;
  p.beta = beta;
  p.h = h;
  p.M = universe.mass;
  const double lam = p.thermal_wavelength();
  r.mu_ideal = T * std::log(r.density * lam * lam * lam);
  r.mu = r.mu_ideal + r.mu_excess;
  r.mu_err = r.mu_excess_err;
  return r;
}

double grand_potential_residual(const GCParams& params) {
  params.validate();
  const double T = 1.0 / params.beta;
  const double lnZ = params.activity() * params.volume_omega;
  return params.P * params.volume_omega - T * lnZ;
}

double log_partition_series(const GCParams& params, std::size_t n_max) {
  params.validate();
  const double lambda = params.activity() * params.volume_omega;
  if (lambda == 0.0) return 0.0;
  const double ll = std::log(lambda);
  double mx = -std::numeric_limits<double>::infinity();
  std::vector<double> terms(n_max + 1);
  for (std::size_t n = 0; n <= n_max; ++n) {
    terms[n] = static_cast<double>(n) * ll - std::lgamma(static_cast<double>(n) + 1.0);
    mx = std::max(mx, terms[n]);
  }
  double s = 0.0;
  for (double t : terms) s += std::exp(t - mx);
  return mx + std::log(s);
}

}  // namespace olv
