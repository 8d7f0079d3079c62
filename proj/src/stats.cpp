#include "olv/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/chi_squared.hpp>

#include "olv/error.hpp"

namespace olv {

MeanVar mean_var(std::span<const double> x) {
  MeanVar r;
  if (x.empty()) return r;
  double m = 0.0;
  for (double v : x) m += v;
  m /= static_cast<double>(x.size());
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  r.mean = m;
  r.variance = x.size() > 1 ? s / static_cast<double>(x.size() - 1) : 0.0;
  return r;
}

std::vector<double> autocorrelation(std::span<const double> x, std::size_t max_lag) {
  const std::size_t n = x.size();
  std::vector<double> rho(std::min(max_lag, n ? n - 1 : 0) + 1, 0.0);
  if (n < 2) {
    rho[0] = 1.0;
    return rho;
  }
  const double m = mean_var(x).mean;
  double c0 = 0.0;
  for (double v : x) c0 += (v - m) * (v - m);
  if (c0 <= 0.0) {
    rho[0] = 1.0;
    return rho;
  }
  for (std::size_t t = 0; t < rho.size(); ++t) {
    double c = 0.0;
    for (std::size_t i = 0; i + t < n; ++i) c += (x[i] - m) * (x[i + t] - m);
    rho[t] = c / c0;
  }
  return rho;
}

AutocorrTime integrated_autocorr_time(std::span<const double> x, double c) {
  AutocorrTime r;
  const std::size_t n = x.size();
  if (n < 2) return r;
  const double m = mean_var(x).mean;
  double c0 = 0.0;
  for (double v : x) c0 += (v - m) * (v - m);
  if (c0 <= 0.0) return r;
  double tau = 0.5;
  for (std::size_t t = 1; t < n; ++t) {
    double ct = 0.0;
    for (std::size_t i = 0; i + t < n; ++i) ct += (x[i] - m) * (x[i + t] - m);
    tau += ct / c0;
    if (static_cast<double>(t) >= c * tau) {
      r.tau = std::max(tau, 0.5);
      r.window = t;
      return r;
    }
  }
  r.tau = std::max(tau, 0.5);
  r.window = n - 1;
  return r;
}

std::vector<double> block_bootstrap_sd(
    std::size_t n_items, std::size_t block, std::size_t resamples, Random& rng,
    const std::function<std::vector<double>(std::span<const std::size_t>)>& stat) {
  if (n_items == 0) throw Error(ErrorCode::TooFewSamples, "bootstrap over an empty sample");
  block = std::clamp<std::size_t>(block, 1, n_items);
  const std::size_t n_blocks = (n_items + block - 1) / block;
  const std::size_t starts = n_items - block + 1;
  std::vector<std::size_t> idx;
  idx.reserve(n_blocks * block);
  std::vector<double> sum, sum2;
  for (std::size_t r = 0; r < resamples; ++r) {
    idx.clear();
    for (std::size_t b = 0; b < n_blocks; ++b) {
      const std::size_t s = rng.below(starts);
      for (std::size_t k = 0; k < block; ++k) idx.push_back(s + k);
    }
    idx.resize(n_items);
    const auto v = stat(idx);
    if (sum.empty()) {
      sum.assign(v.size(), 0.0);
      sum2.assign(v.size(), 0.0);
    }
    for (std::size_t k = 0; k < v.size(); ++k) {
      sum[k] += v[k];
      sum2[k] += v[k] * v[k];
    }
  }
  std::vector<double> sd(sum.size());
  const double R = static_cast<double>(resamples);
  for (std::size_t k = 0; k < sd.size(); ++k) {
    const double m = sum[k] / R;
    sd[k] = std::sqrt(std::max(sum2[k] / R - m * m, 0.0) * R / std::max(R - 1.0, 1.0));
  }
  return sd;
}

ChiSquareResult chi_square_test(std::span<const double> counts, std::span<const double> probabilities,
                                double min_expected) {
  const std::size_t n = std::max(counts.size(), probabilities.size());
  double total = 0.0;
  for (double c : counts) total += c;
  if (total <= 0.0) throw Error(ErrorCode::TooFewSamples, "chi-square test on an empty histogram");
  std::vector<double> obs(n, 0.0), expct(n, 0.0);
  for (std::size_t i = 0; i < counts.size(); ++i) obs[i] = counts[i];
  double psum = 0.0;
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    expct[i] = probabilities[i] * total;
    psum += probabilities[i];
  }
  // Mass of the law beyond the listed support goes to the last bin.
  if (psum < 1.0 && n > 0) expct[n - 1] += (1.0 - psum) * total;

  // Greedy left-to-right pooling; a short leftover tail joins the last group.
  std::vector<double> po, pe;
  double ao = 0.0, ae = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ao += obs[i];
    ae += expct[i];
    if (ae >= min_expected) {
      po.push_back(ao);
      pe.push_back(ae);
      ao = ae = 0.0;
    }
  }
  if (ae > 0.0 || ao > 0.0) {
    if (pe.empty()) {
      po.push_back(ao);
      pe.push_back(ae);
    } else {
      po.back() += ao;
      pe.back() += ae;
    }
  }
  ChiSquareResult r;
  r.bins_used = po.size();
  for (std::size_t i = 0; i < po.size(); ++i)
    if (pe[i] > 0.0) r.statistic += (po[i] - pe[i]) * (po[i] - pe[i]) / pe[i];
  r.dof = po.size() > 1 ? po.size() - 1 : 0;
  if (r.dof == 0) {
    r.p_value = 1.0;
    return r;
  }
  boost::math::chi_squared dist(static_cast<double>(r.dof));
  r.p_value = boost::math::cdf(boost::math::complement(dist, r.statistic));
  return r;
}

KSResult ks_test(std::vector<double> samples, const std::function<double(double)>& cdf) {
  if (samples.empty()) throw Error(ErrorCode::TooFewSamples, "KS test on an empty sample");
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double F = cdf(samples[i]);
    d = std::max({d, F - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - F});
  }
  KSResult r;
  r.statistic = d;
  const double sn = std::sqrt(n);
  const double lambda = (sn + 0.12 + 0.11 / sn) * d;
  // Kolmogorov tail series.
  double q = 0.0;
  if (lambda < 0.3) {
    q = 1.0;
  } else {
    for (int k = 1; k <= 100; ++k) {
      const double term = 2.0 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
      q += term;
      if (std::abs(term) < 1e-12) break;
    }
  }
  r.p_value = std::clamp(q, 0.0, 1.0);
  return r;
}

double z_score(double a, double ea, double b, double eb) {
  const double s = std::sqrt(ea * ea + eb * eb);
  if (s == 0.0) return a == b ? 0.0 : std::copysign(INFINITY, a - b);
  return (a - b) / s;
}

}  // namespace olv
