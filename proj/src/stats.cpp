#include "rwre/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/special_functions/gamma.hpp>

#include "rwre/error.hpp"
#include "rwre/rng.hpp"

namespace rwre::stats {

MeanSe mean_se(std::span<const double> x) {
  MeanSe out;
  out.n = x.size();
  if (x.empty()) return out;
  // Welford.
  double mean = 0.0, m2 = 0.0;
  std::size_t k = 0;
  for (double v : x) {
    ++k;
    const double d = v - mean;
    mean += d / static_cast<double>(k);
    m2 += d * (v - mean);
  }
  out.mean = mean;
  if (x.size() > 1) {
    out.sd = std::sqrt(m2 / static_cast<double>(x.size() - 1));
    out.se = out.sd / std::sqrt(static_cast<double>(x.size()));
  }
  return out;
}

double kolmogorov_survival(double lambda) {
  if (lambda <= 0.0) return 1.0;
  if (lambda < 0.2) return 1.0;
  double sum = 0.0;
  for (int k = 1; k <= 200; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += (k % 2 == 1 ? term : -term);
    if (term < 1e-17) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

namespace {

std::vector<double> sorted_copy(std::span<const double> x) {
  std::vector<double> v(x.begin(), x.end());
  std::sort(v.begin(), v.end());
  return v;
}

// P(D < d) for the two-sample statistic under H0 by counting monotone
// lattice paths that keep |i/n - j/m| strictly below d. `bound` is d*n*m.
double ks_exact_cdf(std::size_t n, std::size_t m, std::int64_t bound) {
  std::vector<double> row(m + 1, 0.0);
  const auto inside = [&](std::size_t i, std::size_t j) {
    const std::int64_t diff = static_cast<std::int64_t>(i * m) - static_cast<std::int64_t>(j * n);
    return std::llabs(diff) < bound;
  };
  row[0] = 1.0;
  for (std::size_t j = 1; j <= m; ++j) row[j] = inside(0, j) ? row[j - 1] : 0.0;
  for (std::size_t i = 1; i <= n; ++i) {
    row[0] = inside(i, 0) ? row[0] : 0.0;
    for (std::size_t j = 1; j <= m; ++j) {
      row[j] = inside(i, j) ? row[j] + row[j - 1] : 0.0;
    }
  }
  // Divide by C(n+m, n) in log space.
  const double log_total = std::lgamma(static_cast<double>(n + m + 1)) - std::lgamma(static_cast<double>(n + 1)) -
                           std::lgamma(static_cast<double>(m + 1));
  if (row[m] <= 0.0) return 0.0;
  return std::exp(std::log(row[m]) - log_total);
}

}  // namespace

KsResult ks_two_sample(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw Error(ErrorKind::EmptySample, "ks_two_sample needs two nonempty samples");
  const auto x = sorted_copy(a);
  const auto y = sorted_copy(b);
  const std::size_t n = x.size(), m = y.size();
  std::size_t i = 0, j = 0;
  // Track the statistic in integer units of 1/(n m) to avoid rounding.
  std::int64_t best = 0;
  while (i < n || j < m) {
    double v;
    if (j >= m || (i < n && x[i] <= y[j])) {
      v = x[i];
    } else {
      v = y[j];
    }
    while (i < n && x[i] == v) ++i;
    while (j < m && y[j] == v) ++j;
    const std::int64_t diff =
        static_cast<std::int64_t>(i * m) - static_cast<std::int64_t>(j * n);
    best = std::max<std::int64_t>(best, std::llabs(diff));
  }
  KsResult out;
  out.statistic = static_cast<double>(best) / (static_cast<double>(n) * static_cast<double>(m));
  if (best == 0) {
    out.p_value = 1.0;
    out.exact = true;
    return out;
  }
  if (static_cast<double>(n) * static_cast<double>(m) <= 10000.0) {
    out.exact = true;
    out.p_value = std::clamp(1.0 - ks_exact_cdf(n, m, best), 0.0, 1.0);
  } else {
    const double en = std::sqrt(static_cast<double>(n) * static_cast<double>(m) / static_cast<double>(n + m));
    out.p_value = kolmogorov_survival((en + 0.12 + 0.11 / en) * out.statistic);
  }
  return out;
}

KsResult ks_one_sample(std::span<const double> a, const std::function<double(double)>& cdf) {
  if (a.empty()) throw Error(ErrorKind::EmptySample, "ks_one_sample needs a nonempty sample");
  const auto x = sorted_copy(a);
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = cdf(x[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  KsResult out;
  out.statistic = d;
  const double en = std::sqrt(n);
  out.p_value = kolmogorov_survival((en + 0.12 + 0.11 / en) * d);
  return out;
}

double chi_square_survival(double statistic, int dof) {
  if (dof <= 0) return 1.0;
  if (statistic <= 0.0) return 1.0;
  return boost::math::gamma_q(0.5 * dof, 0.5 * statistic);
}

ChiSquareResult chi_square_gof(std::span<const double> observed, std::span<const double> expected,
                               double min_expected) {
  if (observed.size() != expected.size() || observed.empty()) {
    throw Error(ErrorKind::EmptySample, "chi_square_gof needs matching nonempty cells");
  }
  double stat = 0.0;
  int cells = 0;
  double pooled_obs = 0.0, pooled_exp = 0.0;
  for (std::size_t c = 0; c < observed.size(); ++c) {
    if (expected[c] < min_expected) {
      pooled_obs += observed[c];
      pooled_exp += expected[c];
      continue;
    }
    const double d = observed[c] - expected[c];
    stat += d * d / expected[c];
    ++cells;
  }
  if (pooled_exp >= min_expected) {
    const double d = pooled_obs - pooled_exp;
    stat += d * d / pooled_exp;
    ++cells;
  } else if (cells > 0 && pooled_exp > 0.0) {
    // Too little mass to form its own cell; it still counts toward the fit.
    const double d = pooled_obs - pooled_exp;
    stat += d * d / std::max(pooled_exp, min_expected);
  }
  ChiSquareResult out;
  out.statistic = stat;
  out.dof = std::max(cells - 1, 0);
  out.p_value = chi_square_survival(stat, out.dof);
  return out;
}

namespace {

// Top k+1 positive order statistics, descending.
std::vector<double> top_order_statistics(std::span<const double> samples, int k_top) {
  if (k_top < 1) throw Error(ErrorKind::InsufficientTail, "k_top must be positive");
  std::vector<double> pos;
  pos.reserve(samples.size());
  for (double v : samples) {
    if (v > 0.0 && std::isfinite(v)) pos.push_back(v);
  }
  const auto need = static_cast<std::size_t>(k_top) + 1;
  if (pos.size() < need) {
    throw Error(ErrorKind::InsufficientTail, "fewer positive samples than k_top + 1");
  }
  std::nth_element(pos.begin(), pos.begin() + static_cast<std::ptrdiff_t>(k_top), pos.end(), std::greater<>());
  pos.resize(need);
  std::sort(pos.begin(), pos.end(), std::greater<>());
  return pos;
}

double hill_from_top(const std::vector<double>& top, int k_top) {
  const double log_threshold = std::log(top[static_cast<std::size_t>(k_top)]);
  double acc = 0.0;
  for (int j = 0; j < k_top; ++j) acc += std::log(top[static_cast<std::size_t>(j)]) - log_threshold;
  const double xi = acc / k_top;
  if (!(xi > 0.0)) throw Error(ErrorKind::InsufficientTail, "top order statistics are all equal");
  return 1.0 / xi;
}

}  // namespace

double hill(std::span<const double> samples, int k_top) {
  return hill_from_top(top_order_statistics(samples, k_top), k_top);
}

HillEstimate hill_with_ci(std::span<const double> samples, int k_top, int n_boot, std::uint64_t seed) {
  HillEstimate out;
  out.k_top = k_top;
  out.kappa = hill(samples, k_top);
  out.std_err = out.kappa / std::sqrt(static_cast<double>(k_top));
  if (n_boot <= 0) {
    out.ci_low = out.kappa - 1.96 * out.std_err;
    out.ci_high = out.kappa + 1.96 * out.std_err;
    return out;
  }
  std::vector<double> boot;
  boot.reserve(static_cast<std::size_t>(n_boot));
  std::vector<double> resample(samples.size());
  for (int b = 0; b < n_boot; ++b) {
    rng::Stream stream(seed, rng::Domain::Bootstrap, static_cast<std::uint64_t>(b));
    for (auto& v : resample) v = samples[stream.below(samples.size())];
    try {
      boot.push_back(hill(resample, k_top));
    } catch (const Error&) {
      // A resample without enough distinct tail values carries no information.
    }
  }
  if (boot.size() < 10) {
    out.ci_low = out.kappa - 1.96 * out.std_err;
    out.ci_high = out.kappa + 1.96 * out.std_err;
    return out;
  }
  std::sort(boot.begin(), boot.end());
  const auto at = [&](double q) {
    const double pos = q * static_cast<double>(boot.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, boot.size() - 1);
    return boot[lo] + (pos - static_cast<double>(lo)) * (boot[hi] - boot[lo]);
  };
  out.ci_low = at(0.025);
  out.ci_high = at(0.975);
  return out;
}

double rank_regression_kappa(std::span<const double> samples, int k_top) {
  const auto top = top_order_statistics(samples, k_top);
  const double n = static_cast<double>(samples.size());
  std::vector<double> lx, ly;
  lx.reserve(static_cast<std::size_t>(k_top));
  ly.reserve(static_cast<std::size_t>(k_top));
  for (int j = 0; j < k_top; ++j) {
    lx.push_back(std::log(top[static_cast<std::size_t>(j)]));
    ly.push_back(std::log((j + 0.5) / n));
  }
  const LinearFit fit = linear_fit(lx, ly);
  return -fit.slope;
}

LinearFit linear_fit(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw Error(ErrorKind::EmptySample, "linear_fit needs two points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  LinearFit fit;
  fit.slope = sxx > 0.0 ? sxy / sxx : 0.0;
  fit.intercept = my - fit.slope * mx;
  fit.r2 = (sxx > 0.0 && syy > 0.0) ? (sxy * sxy) / (sxx * syy) : 1.0;
  return fit;
}

}  // namespace rwre::stats
