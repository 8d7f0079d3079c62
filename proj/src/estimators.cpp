#include "olv/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "olv/error.hpp"
#include "olv/stats.hpp"

namespace olv {

// ------------------------------------------------------------- occupancy law

void OccupancyHistogram::add(std::size_t n, double weight) {
  if (!(weight >= 0.0)) throw Error(ErrorCode::ConfigInvalid, "negative histogram weight");
  if (counts.size() <= n) counts.resize(n + 1, 0.0);
  counts[n] += weight;
  total += weight;
}

void OccupancyHistogram::merge(const OccupancyHistogram& other) {
  if (counts.size() < other.counts.size()) counts.resize(other.counts.size(), 0.0);
  for (std::size_t n = 0; n < other.counts.size(); ++n) counts[n] += other.counts[n];
  total += other.total;
}

std::vector<double> OccupancyHistogram::probabilities() const {
  std::vector<double> p(counts.size(), 0.0);
  if (total <= 0.0) return p;
  for (std::size_t n = 0; n < counts.size(); ++n) p[n] = counts[n] / total;
  return p;
}

double OccupancyHistogram::mean() const {
  double m = 0.0;
  for (std::size_t n = 0; n < counts.size(); ++n) m += static_cast<double>(n) * counts[n];
  return total > 0.0 ? m / total : 0.0;
}

double OccupancyHistogram::variance() const {
  const double m = mean();
  double v = 0.0;
  for (std::size_t n = 0; n < counts.size(); ++n) v += (static_cast<double>(n) - m) * (static_cast<double>(n) - m) * counts[n];
  return total > 1.0 ? v / (total - 1.0) : 0.0;
}

double normalization_check(const OccupancyHistogram& histogram) {
  if (!(histogram.total > 0.0)) throw Error(ErrorCode::TooFewSamples, "normalization check on an empty histogram");
  for (double c : histogram.counts)
    if (c < 0.0) throw Error(ErrorCode::ConfigInvalid, "negative histogram count");
  double s = 0.0;
  for (double p : histogram.probabilities()) s += p;
  return s;
}

PnEstimate estimate_pn(std::span<const std::size_t> series, Random& rng, const PnOptions& options) {
  PnEstimate est;
  if (series.size() < options.min_samples)
    throw Error(ErrorCode::TooFewSamples, "occupancy series shorter than the minimum sample count");
  std::vector<double> x(series.begin(), series.end());
  est.tau_int = integrated_autocorr_time(x).tau;
  est.stride = options.stride > 0 ? options.stride
                                  : std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(options.stride_factor * est.tau_int)));

  std::vector<std::size_t> thin;
  for (std::size_t i = 0; i < series.size(); i += est.stride) thin.push_back(series[i]);
  if (thin.size() < options.min_samples)
    throw Error(ErrorCode::TooFewSamples, "too few decorrelated samples: " + std::to_string(thin.size()));
  est.samples = thin.size();
  est.histogram.stride = est.stride;
  for (std::size_t n : thin) est.histogram.add(n);
  est.p = est.histogram.probabilities();
  est.mean = est.histogram.mean();
  est.variance = est.histogram.variance();

  std::vector<double> thin_d(thin.begin(), thin.end());
  const auto block = static_cast<std::size_t>(std::ceil(2.0 * integrated_autocorr_time(thin_d).tau));
  const std::size_t nbins = est.p.size();
  const auto sd = block_bootstrap_sd(thin.size(), block, options.resamples, rng,
                                     [&](std::span<const std::size_t> idx) {
                                       std::vector<double> out(nbins + 2, 0.0);
                                       double m = 0.0, m2 = 0.0;
                                       for (std::size_t i : idx) {
                                         const double n = static_cast<double>(thin[i]);
                                         out[thin[i]] += 1.0;
                                         m += n;
                                         m2 += n * n;
                                       }
                                       const double c = static_cast<double>(idx.size());
                                       for (std::size_t k = 0; k < nbins; ++k) out[k] /= c;
                                       m /= c;
                                       out[nbins] = m;
                                       out[nbins + 1] = (m2 / c - m * m) * c / std::max(c - 1.0, 1.0);
                                       return out;
                                     });
  est.p_err.assign(sd.begin(), sd.begin() + static_cast<std::ptrdiff_t>(nbins));
  est.mean_err = sd[nbins];
  est.variance_err = sd[nbins + 1];
  return est;
}

// -------------------------------------------------------------------- fluxes

void EventLogObserver::on_step(std::size_t, double time, std::size_t n_inside) {
  occupancy.push_back(n_inside);
  times.push_back(time);
}

void EventLogObserver::on_events(std::size_t step, double, std::span<const CrossingEvent> evs) {
  for (const auto& e : evs) events.push_back({step, e});
}

void FluxRecord::merge(const FluxRecord& other) {
  if (in.size() < other.in.size()) in.resize(other.in.size(), 0.0);
  if (out.size() < other.out.size()) out.resize(other.out.size(), 0.0);
  for (std::size_t k = 0; k < other.in.size(); ++k) in[k] += other.in[k];
  for (std::size_t k = 0; k < other.out.size(); ++k) out[k] += other.out[k];
  time += other.time;
}

FluxEstimate estimate_flux(std::span<const LoggedEvent> events, std::span<const std::size_t> occupancy, double dt,
                           Random& rng, std::size_t blocks, std::size_t resamples) {
  if (occupancy.empty()) throw Error(ErrorCode::InconsistentLog, "flux estimate needs an occupancy series");
  if (!(dt > 0.0)) throw Error(ErrorCode::ConfigInvalid, "flux estimate needs a positive dt");
  const std::size_t steps = occupancy.size() - 1;
  std::size_t n_max = 0;
  for (std::size_t n : occupancy) n_max = std::max(n_max, n);
  // Intermediate occupancies within one step can exceed the recorded maximum.
  for (std::size_t i = 0, run = 0; i < events.size(); ++i) {
    run = (i > 0 && events[i].step == events[i - 1].step) ? run + 1 : 1;
    n_max = std::max(n_max, occupancy.empty() ? run : run + *std::max_element(occupancy.begin(), occupancy.end()));
  }

  FluxEstimate est;
  est.record.in.assign(n_max + 1, 0.0);
  est.record.out.assign(n_max + 1, 0.0);
  est.record.time = static_cast<double>(steps) * dt;

  blocks = std::clamp<std::size_t>(blocks, 1, std::max<std::size_t>(steps, 1));
  const std::size_t edges = n_max + 1;
  // Per block: net count per edge, then total in, total out.
  std::vector<std::vector<double>> per_block(blocks, std::vector<double>(edges + 2, 0.0));
  auto block_of = [&](std::size_t step) {
    return std::min(blocks - 1, (step - 1) * blocks / std::max<std::size_t>(steps, 1));
  };

  std::size_t e = 0;
  for (std::size_t s = 1; s <= steps; ++s) {
    long n = static_cast<long>(occupancy[s - 1]);
    auto& blk = per_block[block_of(s)];
    for (; e < events.size() && events[e].step == s; ++e) {
      const auto& ev = events[e].event;
      if (ev.direction == Direction::In) {
        est.record.in[static_cast<std::size_t>(n)] += 1.0;
        blk[static_cast<std::size_t>(n)] += 1.0;
        blk[edges] += 1.0;
        ++n;
      } else {
        if (n <= 0) throw Error(ErrorCode::InconsistentLog, "Out event with an empty region");
        --n;
        est.record.out[static_cast<std::size_t>(n)] += 1.0;
        blk[static_cast<std::size_t>(n)] -= 1.0;
        blk[edges + 1] += 1.0;
      }
    }
    if (n != static_cast<long>(occupancy[s]))
      throw Error(ErrorCode::InconsistentLog,
                  "occupancy change at step " + std::to_string(s) + " disagrees with crossing events");
  }
  if (e != events.size()) throw Error(ErrorCode::InconsistentLog, "events outside the occupancy series");

  const double T = est.record.time;
  est.in_rate.resize(edges);
  est.out_rate.resize(edges);
  est.net_rate.resize(edges);
  for (std::size_t k = 0; k < edges; ++k) {
    est.in_rate[k] = T > 0.0 ? est.record.in[k] / T : 0.0;
    est.out_rate[k] = T > 0.0 ? est.record.out[k] / T : 0.0;
    est.net_rate[k] = est.in_rate[k] - est.out_rate[k];
  }
  double tin = 0.0, tout = 0.0;
  for (std::size_t k = 0; k < edges; ++k) {
    tin += est.record.in[k];
    tout += est.record.out[k];
  }
  est.total_in_rate = T > 0.0 ? tin / T : 0.0;
  est.total_out_rate = T > 0.0 ? tout / T : 0.0;

  est.net_err.assign(edges, 0.0);
  if (T > 0.0 && blocks > 1) {
    const auto sd = block_bootstrap_sd(blocks, 1, resamples, rng, [&](std::span<const std::size_t> idx) {
      std::vector<double> sum(edges + 2, 0.0);
      for (std::size_t i : idx)
        for (std::size_t k = 0; k < edges + 2; ++k) sum[k] += per_block[i][k];
      for (double& v : sum) v /= T;
      return sum;
    });
    for (std::size_t k = 0; k < edges; ++k) est.net_err[k] = sd[k];
    est.total_in_err = sd[edges];
    est.total_out_err = sd[edges + 1];
  }
  return est;
}

double effusion_rate(double density, double temperature, double mass) {
  return density * std::sqrt(temperature / (2.0 * std::numbers::pi * mass));
}

// ----------------------------------------------- conditional pair estimate

ConditionalPairEstimate::ConditionalPairEstimate(F2Binning b) : binning(b) {
  if (!(b.cutoff > 0.0) || b.d_bins == 0 || b.z_bins == 0 || b.s_bins == 0)
    throw Error(ErrorCode::ConfigInvalid, "invalid conditional-pair binning");
  conditioning.assign(b.d_bins, 0.0);
  counts.assign(b.d_bins * b.z_bins * b.s_bins, 0.0);
}

void ConditionalPairEstimate::merge(const ConditionalPairEstimate& other) {
  if (other.counts.size() != counts.size() || other.binning.cutoff != binning.cutoff)
    throw Error(ErrorCode::GridMismatch, "merging conditional-pair estimates with different binning");
  for (std::size_t k = 0; k < conditioning.size(); ++k) conditioning[k] += other.conditioning[k];
  for (std::size_t k = 0; k < counts.size(); ++k) counts[k] += other.counts[k];
  in_window += other.in_window;
  tail += other.tail;
}

double ConditionalPairEstimate::bin_volume(std::size_t ks) const {
  const double s0 = static_cast<double>(ks) * s_width();
  const double s1 = s0 + s_width();
  return z_width() * std::numbers::pi * (s1 * s1 - s0 * s0);
}

double ConditionalPairEstimate::density(std::size_t kd, std::size_t kz, std::size_t ks) const {
  if (conditioning[kd] <= 0.0) return 0.0;
  return counts[index(kd, kz, ks)] / (conditioning[kd] * bin_volume(ks));
}

double ConditionalPairEstimate::probability(std::size_t kd, std::size_t kz, std::size_t ks) const {
  double slice = 0.0;
  for (std::size_t z = 0; z < binning.z_bins; ++z)
    for (std::size_t s = 0; s < binning.s_bins; ++s) slice += counts[index(kd, z, s)];
  return slice > 0.0 ? counts[index(kd, kz, ks)] / slice : 0.0;
}

std::vector<std::size_t> ConditionalPairEstimate::empty_conditioning_bins() const {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < conditioning.size(); ++k)
    if (conditioning[k] <= 0.0) out.push_back(k);
  return out;
}

double ConditionalPairEstimate::tail_fraction() const { return in_window > 0.0 ? tail / in_window : 0.0; }

void accumulate_f2_conditional(ConditionalPairEstimate& est, const SimState& state, const UniverseSpec& universe,
                               const RegionSpec& region) {
  const double rc = est.binning.cutoff;
  const auto& ps = state.particles;
  std::vector<std::size_t> outer;
  for (std::size_t j = 0; j < ps.size(); ++j)
    if (!region.contains(ps[j].q)) outer.push_back(j);
  for (std::size_t i = 0; i < ps.size(); ++i) {
    if (!region.contains(ps[i].q)) continue;
    const FaceDistance fd = nearest_face(ps[i].q, region);
    if (fd.distance >= rc) continue;
    const auto kd = std::min(est.binning.d_bins - 1, static_cast<std::size_t>(fd.distance / est.d_width()));
    est.conditioning[kd] += 1.0;
    for (std::size_t j : outer) {
      const Vec3 r = universe.minimum_image(ps[j].q - ps[i].q);
      const double z = dot(r, fd.outward_normal);
      if (z < -rc || z >= rc) continue;
      const double s = norm(r - fd.outward_normal * z);
      if (s >= rc) continue;
      est.in_window += 1.0;
      if (z * z + s * s >= rc * rc) est.tail += 1.0;
      const auto kz = std::min(est.binning.z_bins - 1, static_cast<std::size_t>((z + rc) / est.z_width()));
      const auto ks = std::min(est.binning.s_bins - 1, static_cast<std::size_t>(s / est.s_width()));
      est.counts[est.index(kd, kz, ks)] += 1.0;
    }
  }
}

ConditionalPairEstimate estimate_f2_conditional(std::span<const SimState> frames, const UniverseSpec& universe,
                                                const RegionSpec& region, const F2Binning& binning) {
  ConditionalPairEstimate est(binning);
  for (const auto& f : frames) accumulate_f2_conditional(est, f, universe, region);
  return est;
}

// ----------------------------------------------------------- mean-field force

namespace {

double uniform_density_normal(double rho, double d, const PairPotential& potential, double rel_tol) {
  const double rc = potential.cutoff();
  if (rho == 0.0 || potential.is_ideal() || d >= rc) return 0.0;
  // pi rho int_d^rc V'(r) (r^2 - d^2) dr, with V'(r) = -r * force_over_r(r^2).
  auto integrand = [&](double r) { return -r * potential.force_over_r(r * r) * (r * r - d * d); };
  double err = 0.0;
  const double I = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(integrand, d, rc, 20, rel_tol, &err);
  if (!std::isfinite(I) || err > 1e-3 * std::abs(I) + 1e-10)
    throw Error(ErrorCode::QuadratureNotConverged,
                "mean-field quadrature did not converge at d = " + std::to_string(d));
  return std::numbers::pi * rho * I;
}

double estimate_normal(const ConditionalPairEstimate& est, double d, const PairPotential& potential) {
  const double rc = est.binning.cutoff;
  if (potential.is_ideal() || d >= rc || d >= potential.cutoff()) return 0.0;
  const auto kd = std::min(est.binning.d_bins - 1, static_cast<std::size_t>(d / est.d_width()));
  double f = 0.0;
  for (std::size_t kz = 0; kz < est.binning.z_bins; ++kz)
    for (std::size_t ks = 0; ks < est.binning.s_bins; ++ks) {
      const double rho = est.density(kd, kz, ks);
      if (rho == 0.0) continue;
      const double z = est.z_center(kz);
      const double s = est.s_center(ks);
      // Force on the inner particle is force_over_r * (q_in - q_out) = -force_over_r * r.
      f += rho * est.bin_volume(ks) * (-potential.force_over_r(z * z + s * s) * z);
    }
  return f;
}

}  // namespace

double mean_field_normal(const MeanFieldModel& model, double d, const PairPotential& potential, double rel_tol) {
  if (!(d >= 0.0)) throw Error(ErrorCode::ConfigInvalid, "mean-field depth must be non-negative");
  if (const auto* u = std::get_if<UniformDensity>(&model)) return uniform_density_normal(u->rho, d, potential, rel_tol);
  const auto* est = std::get<const ConditionalPairEstimate*>(model);
  if (est == nullptr) return 0.0;
  return estimate_normal(*est, d, potential);
}

Vec3 mean_field_force(const MeanFieldModel& model, double d, const PairPotential& potential, const Vec3& outward_normal) {
  return outward_normal * mean_field_normal(model, d, potential);
}

double mean_field_normal_1d(double rho, double d, const PairPotential& potential) {
  if (!(d >= 0.0)) throw Error(ErrorCode::ConfigInvalid, "mean-field depth must be non-negative");
  if (rho == 0.0 || potential.is_ideal() || d >= potential.cutoff()) return 0.0;
  return -rho * potential.energy_r2(d * d);
}

double MeanFieldForceTable::operator()(double d) const {
  if (values_.empty() || d >= cutoff_) return 0.0;
  if (d <= d_min_) return values_.front();
  const double h = (cutoff_ - d_min_) / static_cast<double>(values_.size() - 1);
  const double x = (d - d_min_) / h;
  const auto k = std::min(values_.size() - 2, static_cast<std::size_t>(x));
  const double w = x - static_cast<double>(k);
  return (1.0 - w) * values_[k] + w * values_[k + 1];
}

double MeanFieldForceTable::max_abs() const {
  double m = 0.0;
  for (double v : values_) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace olv
