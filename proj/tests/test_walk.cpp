#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "helpers.hpp"
#include "rwre/walk.hpp"

using namespace rwre;
using namespace rwre::testing;

namespace {

Counts counts(std::initializer_list<std::int64_t> v) {
  Counts c(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (auto x : v) c(i++) = x;
  return c;
}

// w(+1) |u|! / prod u_l! prod w(-l)^{u_l}, written out independently.
double geometric_pmf(const JumpLaw& w, const Counts& u) {
  double log_p = std::log(w.up());
  std::int64_t total = 0;
  for (int l = 1; l <= w.L(); ++l) {
    const auto k = u(l - 1);
    total += k;
    log_p += static_cast<double>(k) * std::log(w.down(l)) - std::lgamma(static_cast<double>(k) + 1);
  }
  return std::exp(log_p + std::lgamma(static_cast<double>(total) + 1));
}

}  // namespace

TEST_CASE("always-up environment") {
  EnvWindow env(always_up(2), 1);
  const auto path = simulate_to_level(env, 50, 3);
  CHECK(path.length() == 50);
  CHECK(std::all_of(path.steps.begin(), path.steps.end(), [](auto z) { return z == 1; }));
  for (std::int64_t k = 0; k <= 50; ++k) CHECK(path.hit_times[static_cast<std::size_t>(k)] == k);
  const auto table = step_table(path, 2);
  CHECK(table.U.empty());
  CHECK(table.weighted_total() == 0);
  auto pieces = table;
  decompose_pieces(path, pieces);
  CHECK(pieces.per_piece.empty());
  CHECK(pieces.piece(7, 7) == counts({1, 0}));
  CHECK(pieces.piece(7, 8) == counts({0, 0}));
}

TEST_CASE("hand-enumerated path") {
  const auto path = path_from_steps({1, -2, 1, 1, 1});
  CHECK(path.target() == 2);
  CHECK(path.hit_times == std::vector<std::int64_t>{0, 1, 5});
  CHECK(path.positions() == std::vector<std::int64_t>{0, 1, -1, 0, 1, 2});
  auto table = step_table(path, 2);
  CHECK(table.U.size() == 2);
  CHECK(table.row(0) == counts({0, 1}));
  CHECK(table.row(-1) == counts({1, 0}));
  CHECK(table.row(1) == counts({0, 0}));
  CHECK(table.min_site == -1);
  CHECK(table.weighted_total() == 3);
  CHECK(path.length() == 2 + table.weighted_total());
  CHECK(table.total_first() == 1);
  CHECK(table.total_abs() == 2);
  decompose_pieces(path, table);
  CHECK(table.piece(0, -1) == counts({0, 0}));
  CHECK(table.piece(1, 0) == counts({0, 1}));
  CHECK(table.piece(1, -1) == counts({1, 0}));
  CHECK(table.piece(1, 1) == counts({1, 0}));
  CHECK(recount_from_definition(path, 2) == table.U);
  CHECK(error_kind([] { path_from_steps({1, 0, 1}); }) == ErrorKind::InvalidSpec);
}

TEST_CASE("simulated paths: identity, recount, aggregation") {
  const std::vector<EnvSpec> specs{
      two_point({0.6, 0.4}, {0.45, 0.55}, 1),
      two_point({0.7, 0.2, 0.1}, {0.55, 0.25, 0.2}, 2),
      two_point({0.7, 0.15, 0.1, 0.05}, {0.6, 0.2, 0.1, 0.1}, 3),
  };
  for (const auto& spec : specs) {
    for (std::uint64_t r = 0; r < 200; ++r) {
      auto env = EnvWindow::replica(spec, 31, r);
      const auto path = simulate_to_level(env, 200, r);
      const auto pos = path.positions();
      CHECK(pos.back() == 200);
      CHECK(*std::max_element(pos.begin(), pos.end() - 1) <= 199);
      CHECK(hitting_time(env, 200, r) == path.length());
      CHECK(position_after(env, path.length(), r) == 200);
      auto table = step_table(path, spec.L);
      CHECK(path.length() - 200 - table.weighted_total() == 0);
      CHECK(recount_from_definition(path, spec.L) == table.U);
      const auto downs = std::count_if(path.steps.begin(), path.steps.end(), [](auto z) { return z < 0; });
      CHECK(table.total_first() == downs);
      decompose_pieces(path, table);
      for (const auto& [i, row] : table.U) {
        Counts sum = Counts::Zero(spec.L);
        for (std::int64_t k = std::max<std::int64_t>(i + 1, 0); k < 200; ++k) sum += table.piece(k, i);
        CHECK(sum == row);
      }
    }
  }
}

TEST_CASE("max steps guard") {
  // Drift to the left: the walk never reaches level 50.
  EnvWindow env(constant_env({0.3, 0.7}, 1), 1);
  const auto kind = error_kind([&] { simulate_to_level(env, 50, 1, 10000); });
  CHECK(kind == ErrorKind::MaxStepsExceeded);
}

TEST_CASE("hitting time grows like n times the mean of pi") {
  const auto spec = constant_env({0.7, 0.2, 0.1}, 2);
  std::vector<double> ratio;
  for (std::uint64_t r = 0; r < 10; ++r) {
    EnvWindow env(spec, 1);
    ratio.push_back(static_cast<double>(hitting_time(env, 10000, r)) / 10000.0);
  }
  CHECK(std::abs(mean(ratio) - 10.0 / 3.0) < 0.02 * 10.0 / 3.0);
}

TEST_CASE("offspring law of one particle") {
  const auto w = law({0.5, 0.3, 0.2}, 2);
  double total = 0.0;
  for (std::int64_t a = 0; a <= 60; ++a) {
    for (std::int64_t b = 0; a + b <= 60; ++b) {
      const double p = offspring_pmf(w, counts({a, b}));
      CHECK(p == doctest::Approx(geometric_pmf(w, counts({a, b}))).epsilon(1e-12));
      total += p;
    }
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(offspring_pmf(w, counts({0, 0})) == 0.5);
}

TEST_CASE("per-piece children follow the geometric law on a fixed environment") {
  EnvWindow env(two_point({0.7, 0.2, 0.1}, {0.55, 0.25, 0.2}, 2), 17);
  const auto check = offspring_law_check(env, 50, 1000, 5);
  CHECK(check.parents > 1000);
  CHECK(check.chi2.p_value > 0.01);
  double obs = 0.0, exp = 0.0;
  for (double o : check.observed) obs += o;
  for (double e : check.expected) exp += e;
  CHECK(obs == doctest::Approx(exp).epsilon(1e-9));
}

TEST_CASE("lowest visited site settles as n grows") {
  const auto spec = two_point({0.7, 0.2, 0.1}, {0.55, 0.25, 0.2}, 2);
  std::vector<double> low_small, low_large;
  for (std::uint64_t r = 0; r < 400; ++r) {
    auto a = EnvWindow::replica(spec, 41, r);
    auto b = EnvWindow::replica(spec, 42, r);
    low_small.push_back(static_cast<double>(step_table(simulate_to_level(a, 100, r), 2).min_site));
    low_large.push_back(static_cast<double>(step_table(simulate_to_level(b, 1000, r), 2).min_site));
  }
  CHECK(stats::ks_two_sample(low_small, low_large).p_value > 0.001);
}
