#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace rwre::stats {

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
  double sd = 0.0;
  std::size_t n = 0;
};

MeanSe mean_se(std::span<const double> x);

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
  bool exact = false;
};

/// Two-sample Kolmogorov-Smirnov test. Exact p-value when n*m <= 10000
/// (lattice-path recursion), asymptotic Kolmogorov law with Stephens'
/// correction otherwise. Throws EmptySample.
KsResult ks_two_sample(std::span<const double> a, std::span<const double> b);

/// One-sample test against a continuous CDF; asymptotic p-value.
KsResult ks_one_sample(std::span<const double> a, const std::function<double(double)>& cdf);

/// Survival function of the Kolmogorov distribution, P(K > lambda).
double kolmogorov_survival(double lambda);

double normal_cdf(double x);

struct ChiSquareResult {
  double statistic = 0.0;
  int dof = 0;
  double p_value = 1.0;
};

/// Pearson goodness of fit. Cells with expected count below `min_expected`
/// are pooled into one cell (dropped if still below).
ChiSquareResult chi_square_gof(std::span<const double> observed, std::span<const double> expected,
                               double min_expected = 5.0);

/// Upper tail of the chi-square law.
double chi_square_survival(double statistic, int dof);

struct HillEstimate {
  double kappa = 0.0;       // 1 / mean log-excess
  double std_err = 0.0;     // asymptotic kappa / sqrt(k)
  double ci_low = 0.0;      // bootstrap percentile interval
  double ci_high = 0.0;
  int k_top = 0;
};

/// Hill estimator on the k_top largest observations. Throws InsufficientTail
/// when fewer than k_top + 1 positive values exist or the top order
/// statistics are all equal.
double hill(std::span<const double> samples, int k_top);

/// Hill estimate plus a bootstrap percentile interval (level 0.95).
HillEstimate hill_with_ci(std::span<const double> samples, int k_top, int n_boot, std::uint64_t seed);

/// Slope of log empirical survival against log value over the top k order
/// statistics, negated: a second tail-index estimate.
double rank_regression_kappa(std::span<const double> samples, int k_top);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

LinearFit linear_fit(std::span<const double> x, std::span<const double> y);

}  // namespace rwre::stats
