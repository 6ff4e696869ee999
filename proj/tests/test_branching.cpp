#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "rwre/branching.hpp"

using namespace rwre;
using namespace rwre::testing;

namespace {

// Componentwise |mean - oracle| <= 3 se over `draws`.
void check_mean(const std::vector<Counts>& draws, const LRowd& oracle) {
  for (Eigen::Index l = 0; l < oracle.size(); ++l) {
    std::vector<double> x;
    for (const auto& d : draws) x.push_back(static_cast<double>(d(l)));
    CHECK(std::abs(mean(x) - oracle(l)) <= 3 * std_error(x) + 1e-12);
  }
}

Counts unit(int l, int L) { return unit_row<std::int64_t>(l, L); }

}  // namespace

TEST_CASE("offspring of one particle") {
  const auto w = law({0.5, 0.3, 0.2}, 2);
  const LMatrixd m = build_M(w);
  rng::Stream s(1, rng::Domain::Synthetic, 0);
  for (int type = 1; type <= 2; ++type) {
    std::vector<Counts> draws;
    int empty = 0;
    for (int i = 0; i < 40000; ++i) {
      draws.push_back(sample_offspring(w, type, s));
      empty += draws.back().sum() == 0;
    }
    check_mean(draws, m.row(type - 1));
    if (type == 1) CHECK(std::abs(empty / 40000.0 - 0.5) <= 3 * std::sqrt(0.25 / 40000));
  }
  const auto up = law({1.0}, 3);
  CHECK(sample_offspring(up, 1, s) == Counts::Zero(3));
  CHECK(sample_offspring(up, 3, s) == unit(2, 3));
}

TEST_CASE("generation means under both samplers") {
  const auto w = law({0.55, 0.25, 0.2}, 2);
  const LMatrixd m = build_M(w);
  rng::Stream s(2, rng::Domain::Synthetic, 0);
  Counts parents(2);
  parents << 3, 2;
  const LRowd oracle = parents.cast<double>() * m;
  for (auto sampler : {Sampler::Particle, Sampler::Aggregate}) {
    std::vector<Counts> draws;
    for (int i = 0; i < 20000; ++i) draws.push_back(reproduce(w, parents, s, sampler));
    check_mean(draws, oracle);
  }
  CHECK(reproduce(w, Counts::Zero(2), s, Sampler::Aggregate) == Counts::Zero(2));
}

TEST_CASE("aggregate and particle samplers agree in law") {
  const auto w = law({0.6, 0.25, 0.15}, 2);
  rng::Stream a(3, rng::Domain::Synthetic, 0), b(3, rng::Domain::Synthetic, 1);
  Counts parents(2);
  parents << 4, 1;
  std::vector<double> xa, xb, ya, yb;
  for (int i = 0; i < 5000; ++i) {
    const Counts p = reproduce(w, parents, a, Sampler::Particle);
    const Counts q = reproduce(w, parents, b, Sampler::Aggregate);
    xa.push_back(static_cast<double>(p(0)));
    xb.push_back(static_cast<double>(q(0)));
    ya.push_back(static_cast<double>(p(1)));
    yb.push_back(static_cast<double>(q(1)));
  }
  CHECK(stats::ks_two_sample(xa, xb).p_value > 0.001);
  CHECK(stats::ks_two_sample(ya, yb).p_value > 0.001);
}

TEST_CASE("first generation in a constant environment") {
  EnvWindow env(constant_env({0.7, 0.2, 0.1}, 2), 1);
  std::vector<Counts> z1;
  for (std::uint64_t r = 0; r < 20000; ++r) {
    rng::Stream s(4, rng::Domain::Branch, r);
    const auto t = simulate_Z(env, 1, s);
    CHECK(t.generations[0] == Counts::Zero(2));
    z1.push_back(t.generations[1]);
  }
  LRowd oracle(2);
  oracle << 2.0 / 7.0, 1.0 / 7.0;
  check_mean(z1, oracle);
}

TEST_CASE("quenched mean of generation five and lineage sums") {
  EnvWindow env(two_point({0.7, 0.2, 0.1}, {0.55, 0.25, 0.2}, 2), 6);
  LRowd oracle = LRowd::Zero(2);
  for (int t = 1; t <= 5; ++t) oracle = (oracle + unit_row<double>(1, 2)) * build_M(env.site_law(-(t - 1)));
  // Same quantity from the closed sum over immigrants.
  LRowd direct = LRowd::Zero(2);
  for (int k = 0; k <= 4; ++k) {
    LRowd v = unit_row<double>(1, 2);
    for (int j = k; j <= 4; ++j) v = v * build_M(env.site_law(-j));
    direct += v;
  }
  CHECK((oracle - direct).cwiseAbs().maxCoeff() < 1e-12);
  BranchOptions opt;
  opt.track_lineages = true;
  std::vector<Counts> z5;
  for (std::uint64_t r = 0; r < 20000; ++r) {
    rng::Stream s(5, rng::Domain::Branch, r);
    const auto t = simulate_Z(env, 8, s, opt);
    z5.push_back(t.generations[5]);
    for (std::size_t g = 0; g < t.generations.size(); ++g) {
      Counts sum = Counts::Zero(2);
      for (std::size_t k = 0; k < t.lineages.size(); ++k) {
        if (g <= k) CHECK(t.lineages[k][g] == Counts::Zero(2));
        sum += t.lineages[k][g];
      }
      CHECK(sum == t.generations[g]);
    }
  }
  check_mean(z5, oracle);
}

TEST_CASE("one-step conditional mean") {
  EnvWindow env(two_point({0.7, 0.2, 0.1}, {0.55, 0.25, 0.2}, 2), 8);
  // Given Z_{-t+1} = z, Z_{-t} has mean (z + e_1) M_{-t+1}; here t = 3.
  Counts z(2);
  z << 2, 1;
  const LRowd oracle = (z.cast<double>() + unit_row<double>(1, 2)) * build_M(env.site_law(-2));
  rng::Stream s(9, rng::Domain::Synthetic, 0);
  std::vector<Counts> draws;
  for (int i = 0; i < 20000; ++i) draws.push_back(reproduce(env.site_law(-2), z + unit(1, 2), s, Sampler::Particle));
  check_mean(draws, oracle);
}

TEST_CASE("total progeny of one immigrant") {
  const auto spec = two_point({0.7, 0.2, 0.1}, {0.55, 0.25, 0.2}, 2);
  EnvWindow env(spec, 10);
  const double oracle = tail_series_sample(env, unit_row<double>(1, 2), {}).value;
  BranchOptions opt;
  opt.immigrant_limit = 1;
  std::vector<double> y;
  for (std::uint64_t r = 0; r < 20000; ++r) {
    rng::Stream s(11, rng::Domain::Branch, r);
    const auto t = simulate_Z(env, 400, s, opt);
    CHECK(t.generations.back() == Counts::Zero(2));
    double total = 0.0;
    for (const auto& g : t.generations) total += static_cast<double>((g.cast<double>() * x0<double>(2))(0));
    y.push_back(total);
  }
  CHECK(std::abs(mean(y) - oracle) <= 3 * std_error(y));
}

TEST_CASE("population cap") {
  EnvWindow env(constant_env({0.3, 0.4, 0.3}, 2), 1);
  rng::Stream s(12);
  BranchOptions opt;
  opt.population_cap = 1000;
  opt.sampler = Sampler::Aggregate;
  CHECK(error_kind([&] { simulate_Z(env, 200, s, opt); }) == ErrorKind::PopulationExplosion);
}

TEST_CASE("hitting time through branching matches the walk") {
  const auto spec = two_point({0.7, 0.2, 0.1}, {0.55, 0.25, 0.2}, 2);
  std::vector<double> walk, branch;
  for (std::uint64_t r = 0; r < 3000; ++r) {
    auto a = EnvWindow::replica(spec, 13, r);
    auto b = EnvWindow::replica(spec, 14, r);
    walk.push_back(static_cast<double>(hitting_time(a, 20, r)));
    rng::Stream s(15, rng::Domain::Branch, r);
    branch.push_back(static_cast<double>(hitting_time_via_branching(b, 20, s)));
  }
  CHECK(stats::ks_two_sample(walk, branch).p_value > 0.001);
  EnvWindow up(always_up(2), 1);
  rng::Stream s(16);
  CHECK(hitting_time_via_branching(up, 37, s) == 37);
}

TEST_CASE("crossing counts against generations") {
  const auto r = u_vs_z_distribution_check(constant_env({0.7, 0.2, 0.1}, 2), 17, 2, 4000);
  CHECK(r.p_value.size() == 1);
  CHECK(r.min_p_value > 0.001);
  const auto up = u_vs_z_distribution_check(always_up(2), 1, 5, 100);
  CHECK(up.min_p_value == doctest::Approx(1.0));
  CHECK(up.total_ks_statistic == 0.0);
}

TEST_CASE("regeneration blocks") {
  {
    const auto r = regen_blocks(always_up(2), 1, 500);
    CHECK(r.blocks.size() == 500);
    for (const auto& b : r.blocks) {
      CHECK(b.gap == 1);
      CHECK(b.W == Counts::Zero(2));
    }
    CHECK(nu_tail_report(r.blocks).degenerate);
  }
  {
    const auto r = regen_blocks(constant_env({0.7, 0.2, 0.1}, 2), 2, 40000);
    CHECK(r.discarded == 0);
    double w = 0.0, gaps = 0.0;
    for (const auto& b : r.blocks) {
      w += static_cast<double>(b.w_dot_x0);
      gaps += static_cast<double>(b.gap);
      CHECK(b.w_dot_x0 == (b.W.cast<double>() * x0<double>(2))(0));
    }
    CHECK(std::abs((w + gaps) / gaps - 10.0 / 3.0) < 0.02 * 10.0 / 3.0);
  }
  for (const auto& spec : {two_point({0.7, 0.2, 0.1}, {0.55, 0.25, 0.2}, 2), constant_env({0.75, 0.25}, 1)}) {
    const auto r = regen_blocks(spec, 3, 10000);
    const auto tail = nu_tail_report(r.blocks);
    CHECK(tail.slope < 0.0);
    CHECK(tail.r2 > 0.95);
    std::vector<double> first, second;
    for (std::size_t i = 0; i < r.blocks.size(); ++i) {
      (i < r.blocks.size() / 2 ? first : second).push_back(static_cast<double>(r.blocks[i].gap));
    }
    CHECK(stats::ks_two_sample(first, second).p_value > 0.01);
    std::vector<double> stream0;
    for (const auto& b : r.blocks) {
      if (b.stream == 0) stream0.push_back(static_cast<double>(b.gap));
    }
    CHECK(std::abs(lag1_autocorrelation(stream0)) <= 3.0 / std::sqrt(static_cast<double>(stream0.size())));
  }
}

TEST_CASE("sigma stopping") {
  {
    EnvWindow env(always_up(2), 1);
    rng::Stream s(1);
    const auto t = simulate_Z(env, 5, s);
    const auto stop = sigma_stop(t, 0.0);
    CHECK_FALSE(stop.sigma.has_value());
    CHECK(stop.nu == 1);
    CHECK_FALSE(stop.reached_before_nu);
  }
  {
    EnvWindow env(two_point({0.7, 0.2, 0.1}, {0.55, 0.25, 0.2}, 2), 3);
    for (std::uint64_t r = 0; r < 200; ++r) {
      rng::Stream s(2, rng::Domain::Branch, r);
      const auto t = simulate_Z(env, 200, s);
      const auto stop = sigma_stop(t, 0.0);
      std::int64_t first = -1;
      for (std::size_t m = 1; m < t.generations.size() && first < 0; ++m) {
        if (t.generations[m].sum() != 0) first = static_cast<std::int64_t>(m);
      }
      // With A = 0 the first nonempty generation fires sigma unless an empty
      // generation (a regeneration) came first.
      if (first == 1) {
        CHECK(stop.sigma == 1);
        CHECK(stop.reached_before_nu);
      } else {
        CHECK_FALSE(stop.sigma.has_value());
        CHECK(stop.nu == 1);
      }
    }
  }
  const auto p = sigma_probabilities(two_point({0.7, 0.2, 0.1}, {0.55, 0.25, 0.2}, 2), 4, {0, 1, 2, 5, 10, 50}, 2000);
  for (std::size_t i = 1; i < p.size(); ++i) CHECK(p[i] <= p[i - 1]);
  CHECK(p.front() > p.back());
}
