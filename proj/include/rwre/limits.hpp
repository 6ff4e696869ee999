#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rwre/branching.hpp"
#include "rwre/matrices.hpp"
#include "rwre/stats.hpp"

namespace rwre {

/// Invariant density of the environment seen from the walk, and the quenched
/// mean hitting time of level 1 evaluated two ways.
struct InvariantDensity {
  // pi(w) = (1/w_0(+1)) (1 + sum_{i>=1} e_1 Mbar_i ... Mbar_1 e_1^T): the
  // density itself.
  double pi_value = 0.0;
  // 1 + sum_{i>=1} e_1 M_i ... M_1 x0: same mean as pi_value, different
  // random variable unless the environment is constant.
  double pi_alt = 0.0;
  // E_w T_1 as 1 + sum_{i>=1} e_1 M_0 ... M_{-i+1} x0 (crossing counts) and as
  // sum_{i>=0} (1/w_{-i}(+1)) e_1 Mbar_0 ... Mbar_{-i+1} e_1^T (visit counts).
  double hitting_crossing = 0.0;
  double hitting_visits = 0.0;
  std::int64_t truncation_n = 0;  // largest over the four series
  double tail_bound = 0.0;        // largest remainder bound over the four series
  bool refined = false;           // re-evaluated with stricter truncation after a mismatch
};

/// Evaluates all four series. When the two hitting-time forms (or, in a
/// constant environment, the two density forms) disagree beyond
/// 100 x tol x value plus the remainder bounds, everything is re-evaluated
/// once with patience x 10 and tol x 1e-3; a second disagreement throws
/// FormMismatch. Throws TruncationFailure when a series does not settle.
InvariantDensity invariant_density(EnvWindow& env, const SeriesOptions& options = {});

struct LlnOptions {
  int pi_samples = 1000;        // environments averaged for E pi
  double speed_tolerance = 0.0; // absolute slack added to the 3 SE band
  std::int64_t lyapunov_steps = 2000;
  int lyapunov_replicas = 8;
  SeriesOptions series;
  int workers = 1;
};

struct SpeedReport {
  std::int64_t n = 0;
  int replicas = 0;
  double speed_empirical = 0.0;  // mean of X_n / n
  double speed_empirical_se = 0.0;
  double mean_pi = 0.0;
  double mean_pi_se = 0.0;
  double speed_theoretical = 0.0;  // 1 / mean pi
  double speed_theoretical_se = 0.0;
  double gamma_hat = 0.0;
  double gamma_se = 0.0;
  std::vector<std::int64_t> checkpoints;  // running mean of pi at log-spaced counts
  std::vector<double> running_mean_pi;
  bool transient_right = false;  // gamma_hat < 0
  bool speed_agrees = false;
};

/// Empirical X_n / n over independent (environment, walk) replicas against
/// 1 / (Monte Carlo mean of pi). Throws InfiniteMeanSuspected when the pi
/// samples look like a tail with index <= 1.
SpeedReport lln_check(const EnvSpec& spec, std::uint64_t seed, std::int64_t n, int replicas,
                      const LlnOptions& options = {});

struct DriftReport {
  double mean = 0.0;  // of pi(w) (w_0(+1) - sum_l l w_0(-l))
  double se = 0.0;
  int samples = 0;
  bool passes = false;  // |mean - 1| <= 3 se (1e-10 for constant environments)
};

DriftReport drift_identity_check(const EnvSpec& spec, std::uint64_t seed, int samples,
                                 const SeriesOptions& options = {}, int workers = 1);

struct TailReport {
  stats::HillEstimate hill;
  double rank_kappa = 0.0;
  std::vector<int> k_grid;         // k_top / 4 ... 4 k_top where available
  std::vector<double> hill_by_k;
  bool not_power_law = false;      // Hill drifts monotonically by more than 30% across k_grid
};

/// Hill estimate with bootstrap interval, rank regression, and a drift
/// diagnostic over k. Throws InsufficientTail.
TailReport tail_exponent(const std::vector<double>& samples, int k_top, int n_boot = 200, std::uint64_t seed = 0);

struct DirectionReport {
  bool degenerate = false;
  std::vector<double> x1_samples;
  std::vector<double> x2_samples;
  std::vector<double> thresholds;
  std::vector<double> survival_ratios;  // P(x2 eta x0 > t) / P(x1 eta x0 > t)
  double ratio_empirical = 0.0;         // geometric mean over thresholds
  double ratio_target = 0.0;            // (|x2 B| / |x1 B|)^kappa
  bool ratio_within_factor = false;
  stats::HillEstimate hill_x1;
  stats::HillEstimate hill_x2;
  bool kappa_agrees = false;  // Hill intervals of the two directions overlap
};

struct DirectionOptions {
  double tail_fraction = 0.01;  // thresholds at the top 1%, 0.5%, 0.25% of the x1 sample
  double factor = 1.5;
  int n_boot = 200;
  SeriesOptions series;
  int workers = 1;
};

/// Tail survival of x eta_0 x0 for two directions on the same environments.
DirectionReport directional_scaling_check(const EnvSpec& spec, std::uint64_t seed, const LRowd& x1, const LRowd& x2,
                                          int n_samples, double kappa_hat, const DirectionOptions& options = {});

/// Samples of x eta_0 x0 over independent environments.
std::vector<double> tail_series_samples(const EnvSpec& spec, std::uint64_t seed, const LRowd& x, int n_samples,
                                        const SeriesOptions& options = {}, int workers = 1);

enum class Regime { Degenerate, Below1, Between1And2, Above2 };
const char* to_string(Regime r);

enum class TimeMethod { Walk, Branching };

struct CollapseOptions {
  TimeMethod method = TimeMethod::Branching;
  double boundary_width = 0.1;  // kappa within this of 1 or 2 is unsupported
  std::int64_t max_steps = kDefaultMaxSteps;
  std::int64_t population_cap = std::int64_t{1} << 50;
  int workers = 1;
};

struct CollapseReport {
  double kappa_used = 0.0;
  Regime regime = Regime::Degenerate;
  std::string normalization;
  std::int64_t n_small = 0;
  std::int64_t n_large = 0;
  int n_samples = 0;
  double ks_distance = 0.0;       // small vs large, normalized
  double ks_p_value = 1.0;
  double ks_normal = 0.0;         // above 2 only: normalized large sample vs N(0, 1)
  double ks_normal_p_value = 1.0;
  std::vector<double> small_normalized;
  std::vector<double> large_normalized;
};

/// Annealed samples of T_n.
std::vector<double> hitting_time_samples(const EnvSpec& spec, std::uint64_t seed, std::int64_t n, int n_samples,
                                         const CollapseOptions& options = {});

/// Normalizes T_{n_small} and T_{n_large} according to the regime of
/// kappa_hat and compares them. Throws Unsupported near kappa = 1 or 2.
CollapseReport collapse_check(const EnvSpec& spec, std::uint64_t seed, double kappa_hat, std::int64_t n_small,
                              std::int64_t n_large, int n_samples, const CollapseOptions& options = {});

}  // namespace rwre
