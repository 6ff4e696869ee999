#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "rwre/env.hpp"
#include "rwre/walk.hpp"

namespace rwre {

/// How a generation is reproduced.
enum class Sampler {
  // Every particle draws jumps from its site law until an up-jump.
  Particle,
  // The same law in aggregate: r parents on one site produce a negative
  // binomial number of left-jump draws, realized as a Gamma mixture of
  // independent Poisson counts per child type. Cost is independent of r.
  Aggregate,
};

inline constexpr std::int64_t kDefaultPopulationCap = 10'000'000;
inline constexpr std::int64_t kMaxOffspringDraws = 100'000'000;

/// Children of one type-`parent_type` particle: jumps are drawn from `law`
/// until an up-jump, each left jump of size l adds a type-l child; a type
/// l >= 2 parent also passes on one type-(l-1) child. Throws NonTermination
/// after kMaxOffspringDraws draws.
Counts sample_offspring(const JumpLaw& law, int parent_type, rng::Stream& stream);

/// Children of all `parents` (a count per type) on one site.
Counts reproduce(const JumpLaw& law, const Counts& parents, rng::Stream& stream, Sampler sampler);

struct BranchOptions {
  Sampler sampler = Sampler::Particle;
  std::int64_t population_cap = kDefaultPopulationCap;
  bool track_lineages = false;
  // Immigrants arrive at times 0, -1, ..., -(immigrant_limit - 1); negative
  // means one immigrant per generation without end.
  std::int64_t immigrant_limit = -1;
};

/// Z_0 = 0, Z_{-1}, Z_{-2}, ... generations[t] = Z_{-t}.
struct BranchTrajectory {
  std::vector<Counts> generations;
  // lineages[k][t] = Z(-k, -t), the descendants at time -t of the immigrant
  // that arrived at time -k (zero for t <= k).
  std::vector<std::vector<Counts>> lineages;
  std::uint64_t env_seed = 0;
};

/// Generation t is produced by reproducing every particle of generation t-1
/// plus the immigrant arriving at time -(t-1), all on site -(t-1). Throws
/// PopulationExplosion when a generation exceeds the cap.
BranchTrajectory simulate_Z(EnvWindow& env, std::int64_t horizon, rng::Stream& stream,
                            const BranchOptions& options = {});

/// One annealed sample of T_n through the branching representation:
/// n + sum_{t >= 1} Z_{-t} x0 with immigrants for the first n generations,
/// run until extinction after generation n.
std::int64_t hitting_time_via_branching(EnvWindow& env, std::int64_t n, rng::Stream& stream,
                                        const BranchOptions& options = {});

// ---------------------------------------------------------------------------
// Regeneration blocks of the process with one immigrant per generation.

struct RegenBlock {
  std::int64_t stream = 0;
  std::int64_t index = 0;
  std::int64_t gap = 0;  // nu_{k+1} - nu_k
  Counts W;              // sum of Z over [nu_k, nu_{k+1})
  std::int64_t w_dot_x0 = 0;
};

struct RegenOptions {
  int n_streams = 16;
  std::int64_t max_generations = 1'000'000;  // per block
  Sampler sampler = Sampler::Aggregate;
  std::int64_t population_cap = kDefaultPopulationCap;
  int workers = 1;
};

struct RegenResult {
  std::vector<RegenBlock> blocks;  // ordered by (stream, index)
  std::int64_t discarded = 0;      // blocks cut by the generation or population cap
};

/// n_blocks blocks split over independent streams keyed by (seed, stream id).
/// Each stream runs one trajectory on its own environment (sites -t drawn
/// from the stream's window) and cuts it at every generation with Z = 0.
/// A block that hits a cap is discarded (counted) and the process restarts
/// from Z = 0 on fresh sites.
RegenResult regen_blocks(const EnvSpec& spec, std::uint64_t seed, std::int64_t n_blocks,
                         const RegenOptions& options = {});

// ---------------------------------------------------------------------------

struct SigmaStop {
  double A = 0.0;
  std::optional<std::int64_t> sigma;  // empty: regeneration came first
  std::int64_t nu = 0;                // first m >= 1 with Z_{-m} = 0 (0 if not reached)
  bool reached_before_nu = false;
};

/// sigma(A) = inf{m : |Z_{-m}| > A} against the first regeneration time.
/// Throws Undetermined if neither happens within the trajectory.
SigmaStop sigma_stop(const BranchTrajectory& trajectory, double A);

/// Monte Carlo P(sigma(A) < nu) for each A on a grid, with one shared set of
/// trajectories (so the estimates are monotone in A by construction).
std::vector<double> sigma_probabilities(const EnvSpec& spec, std::uint64_t seed, const std::vector<double>& A_grid,
                                        int n_samples, std::int64_t max_generations = 1'000'000);

struct NuTailReport {
  bool degenerate = false;  // every gap equals 1
  double slope = 0.0;       // of log P(gap > t) against t
  double intercept = 0.0;
  double r2 = 0.0;
  int points = 0;
  std::vector<double> t;
  std::vector<double> log_survival;
};

/// Regression of the log empirical survival of the gaps on t over the range
/// with at least min_exceedances gaps above t. Throws InsufficientTail when
/// fewer than 5 points are usable (unless the gaps are degenerate).
NuTailReport nu_tail_report(const std::vector<RegenBlock>& blocks, int min_exceedances = 50);

/// Lag-1 sample autocorrelation of a sequence.
double lag1_autocorrelation(const std::vector<double>& x);

// ---------------------------------------------------------------------------

struct UzReport {
  std::int64_t n = 0;
  int n_samples = 0;
  // Index g - 1 for generation g = 1..n-1: |U^n_{n-1-g}| against |Z_{-g}|.
  std::vector<double> ks_statistic;
  std::vector<double> p_value;
  double min_p_value = 1.0;
  double total_ks_statistic = 0.0;  // sum_i U_i x0 against sum_t Z_{-t} x0
  double total_p_value = 1.0;
};

/// Annealed comparison of walk crossing counts with the branching process:
/// each sample uses a fresh environment on each side.
UzReport u_vs_z_distribution_check(const EnvSpec& spec, std::uint64_t seed, std::int64_t n, int n_samples,
                                   int workers = 1);

}  // namespace rwre
