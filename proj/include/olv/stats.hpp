#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "olv/rng.hpp"

namespace olv {

struct MeanVar {
  double mean = 0.0;
  double variance = 0.0;  // unbiased
};
MeanVar mean_var(std::span<const double> x);

// Normalized autocorrelation rho(t) for lags 0..max_lag.
std::vector<double> autocorrelation(std::span<const double> x, std::size_t max_lag);

// Integrated autocorrelation time tau = 1/2 + sum_t rho(t) with Sokal's
// automatic window (smallest W with W >= c * tau(W)).
struct AutocorrTime {
  double tau = 0.5;
  std::size_t window = 0;
};
AutocorrTime integrated_autocorr_time(std::span<const double> x, double c = 5.0);

// Moving-block bootstrap: resamples contiguous blocks of `block` items with
// replacement, calls `stat` on each resampled index set and returns the
// standard deviation of each statistic component over resamples.
std::vector<double> block_bootstrap_sd(
    std::size_t n_items, std::size_t block, std::size_t resamples, Random& rng,
    const std::function<std::vector<double>(std::span<const std::size_t>)>& stat);

inline constexpr std::size_t kBootstrapResamples = 200;

struct ChiSquareResult {
  double statistic = 0.0;
  std::size_t dof = 0;
  double p_value = 1.0;
  std::size_t bins_used = 0;
};
// Pearson test of integer counts against a probability law; adjacent bins are
// pooled from both tails until every expected count is at least min_expected.
ChiSquareResult chi_square_test(std::span<const double> counts, std::span<const double> probabilities,
                                double min_expected = 5.0);

struct KSResult {
  double statistic = 0.0;
  double p_value = 1.0;
};
KSResult ks_test(std::vector<double> samples, const std::function<double(double)>& cdf);

// Two-sample z-score (a - b) / sqrt(ea^2 + eb^2).
double z_score(double a, double ea, double b, double eb);

}  // namespace olv
