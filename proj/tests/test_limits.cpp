#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "rwre/limits.hpp"

using namespace rwre;
using namespace rwre::testing;

namespace {

const EnvSpec& mild_env() {
  static const EnvSpec spec = two_point({0.7, 0.2, 0.1}, {0.55, 0.25, 0.2}, 2);
  return spec;
}

const EnvSpec& heavy_env() {
  static const EnvSpec spec = two_point({0.85, 0.1, 0.05}, {0.42, 0.38, 0.20}, 2);
  return spec;
}

}  // namespace

TEST_CASE("invariant density: closed forms") {
  {
    EnvWindow env(constant_env({0.7, 0.2, 0.1}, 2), 1);
    const auto d = invariant_density(env);
    // (1/0.7)(1 + e_1 (I - Mbar)^{-1} Mbar e_1^T) with the series equal to 4/3.
    const LMatrixd mb = build_Mbar(env.site_law(0));
    const Eigen::MatrixXd m = Eigen::MatrixXd(mb);
    const double series = (Eigen::MatrixXd::Identity(2, 2) - m).inverse().operator()(0, 0) - 1.0;
    CHECK(series == doctest::Approx(4.0 / 3.0).epsilon(1e-12));
    CHECK(std::abs(d.pi_value - 10.0 / 3.0) < 1e-10 * 10.0 / 3.0);
    CHECK(std::abs(d.pi_alt - 10.0 / 3.0) < 1e-10 * 10.0 / 3.0);
    CHECK(std::abs(d.hitting_crossing - 10.0 / 3.0) < 1e-10 * 10.0 / 3.0);
    CHECK(std::abs(d.hitting_visits - 10.0 / 3.0) < 1e-10 * 10.0 / 3.0);
  }
  {
    EnvWindow env(constant_env({0.75, 0.25}, 1), 1);
    const auto d = invariant_density(env);
    CHECK(std::abs(d.pi_value - 2.0) < 2e-10);
    CHECK(std::abs(d.pi_alt - 2.0) < 2e-10);
  }
  {
    EnvWindow env(always_up(3), 1);
    const auto d = invariant_density(env);
    CHECK(d.pi_value == 1.0);
    CHECK(d.hitting_crossing == 1.0);
    CHECK(d.hitting_visits == 1.0);
  }
}

TEST_CASE("invariant density: forms agree on random environments") {
  std::vector<double> pi, hit;
  for (std::uint64_t r = 0; r < 2000; ++r) {
    auto env = EnvWindow::replica(mild_env(), 3, r);
    const auto d = invariant_density(env);
    CHECK(std::abs(d.hitting_crossing - d.hitting_visits) <= 1e-8 * d.hitting_crossing);
    CHECK(d.pi_value >= 1.0);
    pi.push_back(d.pi_value);
    hit.push_back(d.hitting_crossing);
  }
  // E pi = E_P E_w T_1 although the two differ environment by environment.
  CHECK(std::abs(mean(pi) - mean(hit)) <= 3 * std::hypot(std_error(pi), std_error(hit)));
}

TEST_CASE("speed: constant and scalar environments") {
  LlnOptions opt;
  opt.pi_samples = 10;
  {
    const auto r = lln_check(constant_env({0.7, 0.2, 0.1}, 2), 1, 100000, 4, opt);
    CHECK(r.speed_theoretical == doctest::Approx(0.3).epsilon(1e-9));
    CHECK(std::abs(r.speed_empirical - 0.3) < 0.01);
    CHECK(r.speed_agrees);
    CHECK(r.transient_right);
  }
  {
    const auto r = lln_check(constant_env({0.75, 0.25}, 1), 1, 100000, 4, opt);
    CHECK(r.speed_theoretical == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(std::abs(r.speed_empirical - 0.5) < 0.01);
  }
  {
    const auto r = lln_check(always_up(2), 1, 1000, 2, opt);
    CHECK(r.speed_empirical == 1.0);
    CHECK(r.speed_theoretical == 1.0);
  }
}

TEST_CASE("speed: random environment and monotonicity") {
  LlnOptions opt;
  opt.pi_samples = 2000;
  const auto r = lln_check(mild_env(), 5, 20000, 32, opt);
  CHECK(r.speed_agrees);
  CHECK(r.checkpoints.back() == 2000);
  // More mass on the left jumps slows the walk.
  const auto slower = lln_check(two_point({0.65, 0.2, 0.15}, {0.55, 0.25, 0.2}, 2), 5, 20000, 32, opt);
  CHECK(slower.speed_theoretical < r.speed_theoretical);
  CHECK(slower.speed_empirical < r.speed_empirical);
}

TEST_CASE("speed: infinite mean is detected") {
  LlnOptions opt;
  opt.pi_samples = 20000;
  CHECK(error_kind([&] { lln_check(heavy_env(), 1, 100, 2, opt); }) == ErrorKind::InfiniteMeanSuspected);
}

TEST_CASE("drift identity") {
  {
    const auto d = drift_identity_check(constant_env({0.7, 0.2, 0.1}, 2), 1, 5);
    CHECK(std::abs(d.mean - 1.0) < 1e-10);
    CHECK(d.passes);
  }
  {
    const auto d = drift_identity_check(always_up(2), 1, 5);
    CHECK(d.mean == 1.0);
  }
  const auto d = drift_identity_check(mild_env(), 7, 4000);
  CHECK(std::abs(d.mean - 1.0) <= 3 * d.se);
  CHECK(d.passes);
}

TEST_CASE("tail exponent on synthetic samples") {
  rng::Stream s(3);
  std::vector<double> pareto(100000), expo(100000);
  for (auto& v : pareto) v = std::pow(s.uniform_open(), -1.0 / 0.7);
  for (auto& v : expo) v = s.exponential();
  const auto p = tail_exponent(pareto, 1000, 100, 1);
  CHECK(std::abs(p.hill.kappa - 0.7) < 0.05);
  CHECK_FALSE(p.not_power_law);
  CHECK(std::abs(p.rank_kappa - 0.7) < 0.1);
  const auto e = tail_exponent(expo, 1000, 100, 1);
  CHECK(e.not_power_law);
  // Deeper into an exponential tail the estimate keeps rising.
  for (std::size_t i = 1; i < e.hill_by_k.size(); ++i) CHECK(e.hill_by_k[i] < e.hill_by_k[i - 1]);
  CHECK(e.k_grid.front() < e.k_grid.back());
  CHECK(error_kind([] { tail_exponent(std::vector<double>(100, 1.0), 10); }) == ErrorKind::InsufficientTail);
}

TEST_CASE("directional scaling") {
  const LRowd e1 = unit_row<double>(1, 2);
  const double kappa = 0.834;
  DirectionOptions opt;
  const auto same = directional_scaling_check(heavy_env(), 2, e1, 2.0 * e1, 20000, kappa, opt);
  CHECK(same.ratio_target == doctest::Approx(std::pow(2.0, kappa)).epsilon(1e-12));
  for (std::size_t i = 0; i < same.x1_samples.size(); ++i) CHECK(same.x2_samples[i] == 2.0 * same.x1_samples[i]);
  CHECK(same.ratio_within_factor);
  const auto e2 = directional_scaling_check(heavy_env(), 2, e1, unit_row<double>(2, 2), 20000, kappa, opt);
  CHECK(e2.ratio_target == doctest::Approx(std::pow(2.0, kappa)).epsilon(1e-12));
  CHECK(directional_scaling_check(constant_env({0.7, 0.2, 0.1}, 2), 1, e1, unit_row<double>(2, 2), 100, 1.0, opt)
            .degenerate);
}

TEST_CASE("collapse: degenerate and unsupported regimes") {
  const auto r = collapse_check(always_up(2), 1, 5.0, 10, 40, 50);
  CHECK(r.regime == Regime::Degenerate);
  CHECK(r.ks_distance == 0.0);
  CHECK(error_kind([] { collapse_check(mild_env(), 1, 1.0, 10, 40, 50); }) == ErrorKind::Unsupported);
  CHECK(error_kind([] { collapse_check(mild_env(), 1, 2.05, 10, 40, 50); }) == ErrorKind::Unsupported);
}

TEST_CASE("collapse: walk and branching hitting times agree") {
  CollapseOptions walk, branch;
  walk.method = TimeMethod::Walk;
  const auto a = hitting_time_samples(mild_env(), 1, 200, 2000, walk);
  const auto b = hitting_time_samples(mild_env(), 2, 200, 2000, branch);
  CHECK(stats::ks_two_sample(a, b).p_value > 0.001);
}

TEST_CASE("collapse: normalization by regime") {
  // rho in {2, 1/4}: kappa solves 2^k + 4^-k = 2, about 0.695.
  const double kappa = bisect([](double k) { return std::pow(2.0, k) + std::pow(0.25, k) - 2.0; }, 0.1, 3.0);
  const auto spec = scalar_rho(2.0, 0.25);
  const auto r = collapse_check(spec, 3, kappa, 50, 200, 400);
  CHECK(r.regime == Regime::Below1);
  const auto raw = hitting_time_samples(spec, rng::derive_key(3, rng::Domain::Replica, 1), 200, 400);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    CHECK(r.large_normalized[i] == doctest::Approx(raw[i] / std::pow(200.0, 1.0 / kappa)).epsilon(1e-14));
  }
  const auto mid = collapse_check(mild_env(), 3, 1.5, 50, 200, 400);
  CHECK(mid.regime == Regime::Between1And2);
  const auto clt = collapse_check(mild_env(), 3, 4.7, 50, 200, 400);
  CHECK(clt.regime == Regime::Above2);
  CHECK(stats::mean_se(clt.large_normalized).mean == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(stats::mean_se(clt.large_normalized).sd == doctest::Approx(1.0).epsilon(1e-9));
}
