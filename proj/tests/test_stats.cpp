#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "helpers.hpp"
#include "rwre/rng.hpp"
#include "rwre/stats.hpp"

using namespace rwre;
using namespace rwre::testing;

namespace {

std::vector<double> uniforms(std::uint64_t key, int n) {
  rng::Stream s(key);
  std::vector<double> x(static_cast<std::size_t>(n));
  for (auto& v : x) v = s.uniform();
  return x;
}

double ks_distance(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double d = 0.0;
  std::vector<double> points = a;
  points.insert(points.end(), b.begin(), b.end());
  for (double u : points) {
    const double fa = double(std::upper_bound(a.begin(), a.end(), u) - a.begin()) / a.size();
    const double fb = double(std::upper_bound(b.begin(), b.end(), u) - b.begin()) / b.size();
    d = std::max(d, std::abs(fa - fb));
  }
  return d;
}

// Exact permutation p-value: enumerate every split of the pooled sample.
double brute_force_p(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> pooled = a;
  pooled.insert(pooled.end(), b.begin(), b.end());
  const double observed = ks_distance(a, b);
  std::vector<int> mask(pooled.size(), 0);
  std::fill(mask.begin(), mask.begin() + static_cast<long>(a.size()), 1);
  std::sort(mask.begin(), mask.end());
  int total = 0, extreme = 0;
  do {
    std::vector<double> x, y;
    for (std::size_t i = 0; i < pooled.size(); ++i) (mask[i] ? x : y).push_back(pooled[i]);
    ++total;
    extreme += ks_distance(x, y) >= observed - 1e-12;
  } while (std::next_permutation(mask.begin(), mask.end()));
  return double(extreme) / total;
}

std::vector<double> pareto(std::uint64_t key, int n, double kappa) {
  rng::Stream s(key);
  std::vector<double> x(static_cast<std::size_t>(n));
  for (auto& v : x) v = std::pow(s.uniform_open(), -1.0 / kappa);
  return x;
}

}  // namespace

TEST_CASE("mean and standard error") {
  const std::vector<double> x{1, 2, 3, 4};
  const auto ms = stats::mean_se(x);
  CHECK(ms.mean == 2.5);
  CHECK(ms.sd == doctest::Approx(std::sqrt(5.0 / 3.0)));
  CHECK(ms.se == doctest::Approx(std::sqrt(5.0 / 3.0) / 2.0));
}

TEST_CASE("two-sample KS: identical, separated, empty") {
  const auto a = uniforms(1, 10000);
  const auto same = stats::ks_two_sample(a, a);
  CHECK(same.statistic == 0.0);
  CHECK(same.p_value == doctest::Approx(1.0));
  std::vector<double> shifted = a;
  for (auto& v : shifted) v += 0.5;
  const auto far = stats::ks_two_sample(a, shifted);
  CHECK(far.statistic == doctest::Approx(0.5).epsilon(0.05));
  CHECK(far.p_value < 1e-6);
  CHECK(error_kind([&] { stats::ks_two_sample(a, std::vector<double>{}); }) == ErrorKind::EmptySample);
}

TEST_CASE("two-sample KS: exact p-value against enumeration") {
  for (std::uint64_t k = 0; k < 6; ++k) {
    const auto a = uniforms(100 + k, 5);
    auto b = uniforms(200 + k, 6);
    for (auto& v : b) v = v * 0.8 + 0.1 * static_cast<double>(k % 3);
    const auto r = stats::ks_two_sample(a, b);
    CHECK(r.exact);
    CHECK(r.statistic == doctest::Approx(ks_distance(a, b)).epsilon(1e-12));
    CHECK(r.p_value == doctest::Approx(brute_force_p(a, b)).epsilon(1e-9));
  }
}

TEST_CASE("two-sample KS: p-values are uniform under the null") {
  std::vector<double> p;
  for (std::uint64_t rep = 0; rep < 200; ++rep) {
    const auto a = uniforms(rng::derive_key(7, rng::Domain::Synthetic, 2 * rep), 10000);
    const auto b = uniforms(rng::derive_key(7, rng::Domain::Synthetic, 2 * rep + 1), 10000);
    p.push_back(stats::ks_two_sample(a, b).p_value);
  }
  const auto meta = stats::ks_one_sample(p, [](double u) { return std::clamp(u, 0.0, 1.0); });
  CHECK(meta.p_value > 0.01);
}

TEST_CASE("one-sample KS against the normal law") {
  rng::Stream s(3);
  std::vector<double> z(20000);
  for (auto& v : z) v = s.normal();
  CHECK(stats::ks_one_sample(z, stats::normal_cdf).p_value > 0.01);
  std::vector<double> shifted = z;
  for (auto& v : shifted) v += 0.1;
  CHECK(stats::ks_one_sample(shifted, stats::normal_cdf).p_value < 1e-6);
}

TEST_CASE("reference distribution values") {
  CHECK(stats::normal_cdf(0.0) == doctest::Approx(0.5));
  CHECK(stats::normal_cdf(1.959963984540054) == doctest::Approx(0.975).epsilon(1e-9));
  CHECK(stats::kolmogorov_survival(1.3580986393225505) == doctest::Approx(0.05).epsilon(1e-6));
  CHECK(stats::chi_square_survival(3.841458820694124, 1) == doctest::Approx(0.05).epsilon(1e-9));
  CHECK(stats::chi_square_survival(18.307038053275146, 10) == doctest::Approx(0.05).epsilon(1e-9));
}

TEST_CASE("chi-square goodness of fit") {
  rng::Stream s(9);
  std::vector<double> observed(6, 0.0), expected(6, 10000.0);
  for (int i = 0; i < 60000; ++i) observed[s.below(6)] += 1;
  const auto fair = stats::chi_square_gof(observed, expected);
  CHECK(fair.dof == 5);
  CHECK(fair.p_value > 0.01);
  observed[0] += 600;
  observed[1] -= 600;
  CHECK(stats::chi_square_gof(observed, expected).p_value < 1e-6);
}

TEST_CASE("Hill estimator on synthetic tails") {
  const auto x = pareto(rng::derive_key(5, rng::Domain::Synthetic, 0), 100000, 1.5);
  CHECK(std::abs(stats::hill(x, 1000) - 1.5) < 0.1);
  const auto ci = stats::hill_with_ci(x, 1000, 200, 1);
  CHECK(ci.ci_low < ci.kappa);
  CHECK(ci.kappa < ci.ci_high);
  CHECK(std::abs(stats::rank_regression_kappa(x, 1000) - 1.5) < 0.15);
  const std::vector<double> flat(1000, 2.0);
  CHECK(error_kind([&] { stats::hill(flat, 100); }) == ErrorKind::InsufficientTail);
  CHECK(error_kind([&] { stats::hill(x, 200000); }) == ErrorKind::InsufficientTail);
}

TEST_CASE("linear fit") {
  const std::vector<double> t{0, 1, 2, 3, 4};
  const std::vector<double> y{1, -1, -3, -5, -7};
  const auto f = stats::linear_fit(t, y);
  CHECK(f.slope == doctest::Approx(-2.0));
  CHECK(f.intercept == doctest::Approx(1.0));
  CHECK(f.r2 == doctest::Approx(1.0));
}
