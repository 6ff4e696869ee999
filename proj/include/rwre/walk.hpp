#pragma once

#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "rwre/env.hpp"
#include "rwre/matrices.hpp"
#include "rwre/stats.hpp"

namespace rwre {

/// Nonnegative integer L-vector: crossing counts or offspring counts.
using Counts = LRow<std::int64_t>;

inline constexpr std::int64_t kDefaultMaxSteps = 1'000'000'000;

/// A walk started at 0 and stopped at its first visit to level n.
struct WalkPath {
  std::int64_t start = 0;
  std::vector<std::int8_t> steps;         // jumps in {-L, ..., -1, +1}
  std::vector<std::int64_t> hit_times;    // hit_times[k] = T_k, k = 0..n

  std::int64_t target() const { return static_cast<std::int64_t>(hit_times.size()) - 1; }
  std::int64_t length() const { return static_cast<std::int64_t>(steps.size()); }
  std::vector<std::int64_t> positions() const;
};

/// Builds a path from explicit jumps (hit times derived). Throws InvalidSpec if
/// a jump is not in {-kMaxL, ..., -1, +1}.
WalkPath path_from_steps(const std::vector<int>& steps);

/// Simulates until the first visit to n. Jumps at site x use env.site_law(x);
/// the jump stream is keyed by (walk_seed, env seed). Throws
/// MaxStepsExceeded with the final position when the guard trips.
WalkPath simulate_to_level(EnvWindow& env, std::int64_t n, std::uint64_t walk_seed,
                           std::int64_t max_steps = kDefaultMaxSteps);

/// T_n of the same walk simulate_to_level would produce, without storing it.
std::int64_t hitting_time(EnvWindow& env, std::int64_t n, std::uint64_t walk_seed,
                          std::int64_t max_steps = kDefaultMaxSteps);

/// X_t after t steps.
std::int64_t position_after(EnvWindow& env, std::int64_t t, std::uint64_t walk_seed);

/// Crossing counts of a path stopped at T_n. Row i holds U^n_{i,l}: steps
/// taken from above i that land at i - l + 1. Only nonzero rows are stored.
struct StepTable {
  std::int64_t n = 0;
  int L = 1;
  std::map<std::int64_t, Counts> U;
  // (k, i) -> U^n(k, i) for i < k: counts contributed by steps taken in
  // [T_k, T_{k+1}). Nonzero entries only.
  std::map<std::pair<std::int64_t, std::int64_t>, Counts> per_piece;
  std::int64_t min_site = 0;  // lowest i with a nonzero row (n when none)

  Counts row(std::int64_t i) const;
  /// Per-piece counts with U^n(k, k) = e_1 and U^n(k, i) = 0 for i > k.
  Counts piece(std::int64_t k, std::int64_t i) const;

  std::int64_t total_abs() const;       // sum_i |U_i|
  std::int64_t total_first() const;     // sum_i U_{i,1}
  std::int64_t weighted_total() const;  // sum_i U_i x0
};

/// Builds U from the path in one pass.
StepTable step_table(const WalkPath& path, int L);

/// Adds the per-piece counts to a table from step_table.
void decompose_pieces(const WalkPath& path, StepTable& table);

/// Brute-force recount of U^n_{i,l} = #{0 < m <= T_n : X_{m-1} > i, X_m = i - l + 1}
/// by scanning every level; used to cross-check step_table.
std::map<std::int64_t, Counts> recount_from_definition(const WalkPath& path, int L);

/// Probability that one type-1 particle on a site with law `law` has
/// offspring vector u (multivariate geometric).
double offspring_pmf(const JumpLaw& law, const Counts& u);

struct OffspringLawCheck {
  std::int64_t parents = 0;
  stats::ChiSquareResult chi2;
  std::vector<double> observed;  // one cell per offspring vector with |u| <= max_total, plus overflow
  std::vector<double> expected;
};

/// For walks on one fixed quenched window, collects every piece (k, i) with
/// U^n(k, i) = e_1 and tests the law of U^n(k, i - 1) against the
/// multivariate geometric law of site i.
OffspringLawCheck offspring_law_check(EnvWindow& env, std::int64_t n, int n_paths, std::uint64_t walk_seed,
                                      int max_total = 5);

}  // namespace rwre
