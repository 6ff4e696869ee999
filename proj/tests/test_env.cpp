#include <doctest.h>

#include "helpers.hpp"
#include "rwre/stats.hpp"

using namespace rwre;
using namespace rwre::testing;

TEST_CASE("jump law validation") {
  CHECK(error_kind([] { law({0.5, 0.6}, 1); }) == ErrorKind::InvalidSpec);
  CHECK(error_kind([] { law({0.0, 1.0}, 1); }) == ErrorKind::InvalidSpec);
  CHECK(error_kind([] { law({1.2, -0.2}, 1); }) == ErrorKind::InvalidSpec);
  const auto w = law({0.7, 0.2, 0.1}, 2);
  CHECK(w.L() == 2);
  CHECK(w.prob(1) == 0.7);
  CHECK(w.prob(-2) == 0.1);
  CHECK(w.prob(-3) == 0.0);
  CHECK(w.prob(0) == 0.0);
  CHECK(w.rho() == doctest::Approx(3.0 / 7.0).epsilon(1e-15));
  CHECK(w.drift() == doctest::Approx(0.3).epsilon(1e-15));
}

TEST_CASE("jump sampling frequencies") {
  const auto w = law({0.5, 0.3, 0.2}, 2);
  rng::Stream s(1, rng::Domain::Synthetic, 0);
  std::vector<double> observed(3, 0.0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const int z = w.sample_jump(s);
    observed[z == 1 ? 0 : static_cast<std::size_t>(-z)] += 1;
  }
  const std::vector<double> expected{0.5 * n, 0.3 * n, 0.2 * n};
  CHECK(stats::chi_square_gof(observed, expected).p_value > 0.01);
}

TEST_CASE("constant environment returns the atom everywhere") {
  const auto spec = constant_env({0.7, 0.2, 0.1}, 2);
  EnvWindow env(spec, 1);
  for (std::int64_t x : {0LL, 1LL, -1LL, 17LL, -1000000LL}) CHECK(env.site_law(x) == spec.atoms[0].law);
}

TEST_CASE("ellipticity violation") {
  const auto kind = error_kind([] { EnvSpec::constant(law({0.5, 0.5}, 2), 0.1).validate(); });
  CHECK(kind == ErrorKind::EllipticityViolation);
  CHECK_FALSE(error_kind([] { EnvSpec::constant(law({0.5, 0.3, 0.2}, 2), 0.1).validate(); }));
  CHECK(error_kind([] { EnvSpec::finite({Atom{law({0.5, 0.5}, 1), -1.0}}).validate(); }) == ErrorKind::InvalidSpec);
}

TEST_CASE("finite support: atom frequency and independence") {
  const auto spec = two_point({0.6, 0.4}, {0.45, 0.55}, 1);
  EnvWindow env(spec, 7);
  const int n = 100000;
  int first = 0, pairs_same = 0;
  bool prev = false;
  for (int x = 0; x < n; ++x) {
    const bool a = env.site_law(x) == spec.atoms[0].law;
    first += a;
    if (x > 0) pairs_same += a == prev;
    prev = a;
  }
  const double sigma = std::sqrt(0.25 / n);
  CHECK(std::abs(first / double(n) - 0.5) < 3 * sigma);
  // Neighbouring sites agree half the time when independent.
  CHECK(std::abs(pairs_same / double(n - 1) - 0.5) < 3 * std::sqrt(0.25 / (n - 1)));
}

TEST_CASE("finite support: chi-square fit to weights") {
  const auto spec = EnvSpec::finite({Atom{law({0.6, 0.4}, 1), 0.2}, Atom{law({0.5, 0.5}, 1), 0.3},
                                     Atom{law({0.8, 0.2}, 1), 0.5}});
  EnvWindow env(spec, 3);
  std::vector<double> observed(3, 0.0);
  const int n = 10001;
  for (int x = 0; x < n; ++x) {
    for (std::size_t a = 0; a < 3; ++a) observed[a] += env.site_law(x) == spec.atoms[a].law;
  }
  const std::vector<double> expected{0.2 * n, 0.3 * n, 0.5 * n};
  CHECK(stats::chi_square_gof(observed, expected).p_value > 0.01);
}

TEST_CASE("windows are reproducible and order independent") {
  const auto spec = EnvSpec::dirichlet((JumpProbs(3) << 2.0, 1.0, 1.0).finished(), 1e-3);
  EnvWindow a(spec, 42), b(spec, 42), c(spec, 43);
  std::vector<JumpLaw> forward;
  for (int x = -50; x <= 50; ++x) forward.push_back(a.site_law(x));
  bool differs = false;
  for (int x = 50; x >= -50; --x) {
    CHECK(b.site_law(x) == forward[static_cast<std::size_t>(x + 50)]);
    CHECK(b.draw_site(x) == b.site_law(x));
    differs = differs || !(c.site_law(x) == b.site_law(x));
  }
  CHECK(differs);
  CHECK(a.site_law(3) == a.site_law(3));
  for (int x = -50; x <= 50; ++x) CHECK(a.site_law(x).elliptic(1e-3));
}

TEST_CASE("replica windows are distinct") {
  const auto spec = two_point({0.6, 0.4}, {0.45, 0.55}, 1);
  auto a = EnvWindow::replica(spec, 9, 0);
  auto b = EnvWindow::replica(spec, 9, 1);
  int same = 0;
  for (int x = 0; x < 200; ++x) same += a.site_law(x) == b.site_law(x);
  CHECK(same < 150);
  CHECK(a.seed() != b.seed());
}

TEST_CASE("condition report examples") {
  {
    const EnvWindow env(constant_env({0.7, 0.2, 0.1}, 2), 1);
    const auto r = condition_report(env, 100, 3.0);
    for (double rho : r.rho_samples) CHECK(rho == doctest::Approx(3.0 / 7.0).epsilon(1e-15));
    CHECK(r.p_rho_gt_1 == 0.0);
    CHECK_FALSE(r.c2_holds);
  }
  {
    const EnvWindow env(two_point({1.0 / 3.0, 2.0 / 3.0}, {2.0 / 3.0, 1.0 / 3.0}, 1), 5);
    const int n = 20000;
    const auto r = condition_report(env, n, 3.0);
    for (double rho : r.rho_samples) CHECK((std::abs(rho - 2.0) < 1e-12 || std::abs(rho - 0.5) < 1e-12));
    CHECK(std::abs(r.p_rho_gt_1 - 0.5) < 3 * std::sqrt(0.25 / n));
    // E rho^3 = (8 + 1/8) / 2.
    CHECK(r.kappa0_check == doctest::Approx(65.0 / 16.0).epsilon(0.05));
    CHECK(r.mkp_holds);
  }
  {
    const EnvWindow env(constant_env({0.5, 0.5}, 1), 1);
    const auto r = condition_report(env, 10, 3.0);
    for (double rho : r.rho_samples) CHECK(rho == 1.0);
    CHECK(r.p_rho_gt_1 == 0.0);
  }
}
