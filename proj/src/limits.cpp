#include "rwre/limits.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "rwre/parallel.hpp"

namespace rwre {

const char* to_string(Regime r) {
  switch (r) {
    case Regime::Degenerate: return "degenerate";
    case Regime::Below1: return "kappa<1";
    case Regime::Between1And2: return "1<kappa<2";
    case Regime::Above2: return "kappa>2";
  }
  return "unknown";
}

namespace {

bool close_enough(double a, double b, double tol, double bounds) {
  return std::abs(a - b) <= 100.0 * tol * std::max({1.0, std::abs(a), std::abs(b)}) + bounds;
}

InvariantDensity evaluate_density(EnvWindow& env, const SeriesOptions& options) {
  const int L = env.L();
  const LRowd e1 = unit_row<double>(1, L);
  const LCold e1t = e1.transpose();
  const double up0 = env.site_law(0).up();

  InvariantDensity out;
  const auto track = [&](const TailSeriesSample& s) {
    out.truncation_n = std::max(out.truncation_n, s.truncation_n);
    out.tail_bound = std::max(out.tail_bound, s.truncation_tail_bound);
  };

  const auto density = column_series(env, e1, e1t, Family::Mbar, 1, options);
  track(density);
  out.pi_value = (1.0 + density.value) / up0;

  const auto alt = column_series(env, e1, x0<double>(L), Family::M, 1, options);
  track(alt);
  out.pi_alt = 1.0 + alt.value;

  const auto crossing = product_series(env, e1, x0<double>(L), Family::M, 0, options);
  track(crossing);
  out.hitting_crossing = 1.0 + crossing.value;

  // Expected visits to site -i: expected arrivals there times 1/w_{-i}(+1).
  SeriesTruncation acc(options);
  LRowd v = e1;
  LRowd next(L);
  bool settled = false;
  for (std::int64_t i = 1; !acc.exhausted(); ++i) {
    next.noalias() = v * build_Mbar<double>(env.site_law(-(i - 1)));
    v = next;
    if (acc.add(v(0) / env.site_law(-i).up())) {
      settled = true;
      break;
    }
  }
  if (!settled) throw Error(ErrorKind::TruncationFailure, "visit-count series did not settle");
  out.truncation_n = std::max(out.truncation_n, acc.terms());
  out.tail_bound = std::max(out.tail_bound, acc.tail_bound());
  out.hitting_visits = 1.0 / up0 + acc.sum();

  const double bounds = crossing.truncation_tail_bound + acc.tail_bound();
  if (!close_enough(out.hitting_crossing, out.hitting_visits, options.tol, bounds)) {
    throw Error(ErrorKind::FormMismatch, "hitting-time forms differ: " + std::to_string(out.hitting_crossing) +
                                             " vs " + std::to_string(out.hitting_visits));
  }
  if (env.spec().is_deterministic() &&
      !close_enough(out.pi_value, out.pi_alt, options.tol,
                    density.truncation_tail_bound / up0 + alt.truncation_tail_bound)) {
    throw Error(ErrorKind::FormMismatch, "density forms differ in a constant environment: " +
                                             std::to_string(out.pi_value) + " vs " + std::to_string(out.pi_alt));
  }
  return out;
}

}  // namespace

InvariantDensity invariant_density(EnvWindow& env, const SeriesOptions& options) {
  try {
    return evaluate_density(env, options);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::FormMismatch) throw;
  }
  // A product can grow again after `patience` negligible terms; one stricter
  // pass separates such early stops from a genuine disagreement.
  SeriesOptions strict = options;
  strict.patience = options.patience * 10;
  strict.tol = std::max(options.tol * 1e-3, 1e-15);
  strict.max_n = options.max_n * 10;
  InvariantDensity out = evaluate_density(env, strict);
  out.refined = true;
  return out;
}

SpeedReport lln_check(const EnvSpec& spec, std::uint64_t seed, std::int64_t n, int replicas,
                      const LlnOptions& options) {
  if (n < 1 || replicas < 1 || options.pi_samples < 1) {
    throw Error(ErrorKind::InvalidSpec, "lln_check needs n, replicas and pi_samples >= 1");
  }
  SpeedReport out;
  out.n = n;
  out.replicas = replicas;

  try {
    const auto gamma = lyapunov(spec, seed, options.lyapunov_steps, options.lyapunov_replicas, Norm::Row,
                                Side::Backward, Family::M, options.workers);
    out.gamma_hat = gamma.gamma_hat;
    out.gamma_se = gamma.std_err;
  } catch (const Error& e) {
    // Only non-elliptic laws (epsilon = 0) can annihilate a product; the
    // exponent is then minus infinity.
    if (e.kind() != ErrorKind::NumericalUnderflow || spec.epsilon > 0.0) throw;
    out.gamma_hat = -std::numeric_limits<double>::infinity();
  }
  out.transient_right = out.gamma_hat < 0.0;

  std::vector<double> pis(static_cast<std::size_t>(options.pi_samples));
  parallel_for(options.pi_samples, options.workers, [&](std::int64_t j) {
    EnvWindow env = EnvWindow::replica(spec, seed, 2 * static_cast<std::uint64_t>(j) + 1);
    pis[static_cast<std::size_t>(j)] = invariant_density(env, options.series).pi_value;
  });
  double running = 0.0;
  std::int64_t next_checkpoint = 10;
  for (std::size_t j = 0; j < pis.size(); ++j) {
    running += pis[j];
    const auto count = static_cast<std::int64_t>(j) + 1;
    if (count == next_checkpoint || j + 1 == pis.size()) {
      out.checkpoints.push_back(count);
      out.running_mean_pi.push_back(running / static_cast<double>(count));
      while (next_checkpoint <= count) next_checkpoint *= 10;
    }
  }
  if (pis.size() >= 1000) {
    try {
      const int k = static_cast<int>(pis.size() / 50);
      const double kappa = stats::hill(pis, k);
      if (kappa + 1.96 * kappa / std::sqrt(static_cast<double>(k)) < 1.0) {
        throw Error(ErrorKind::InfiniteMeanSuspected,
                    "tail index of pi samples estimated at " + std::to_string(kappa));
      }
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::InsufficientTail) throw;
    }
  }
  const auto pi_stats = stats::mean_se(pis);
  out.mean_pi = pi_stats.mean;
  out.mean_pi_se = pi_stats.se;
  out.speed_theoretical = 1.0 / pi_stats.mean;
  out.speed_theoretical_se = pi_stats.se / (pi_stats.mean * pi_stats.mean);

  std::vector<double> speeds(static_cast<std::size_t>(replicas));
  parallel_for(replicas, options.workers, [&](std::int64_t j) {
    EnvWindow env = EnvWindow::replica(spec, seed, 2 * static_cast<std::uint64_t>(j));
    const std::int64_t x = position_after(env, n, rng::derive_key(seed, rng::Domain::Walk, static_cast<std::uint64_t>(j)));
    speeds[static_cast<std::size_t>(j)] = static_cast<double>(x) / static_cast<double>(n);
  });
  const auto sp = stats::mean_se(speeds);
  out.speed_empirical = sp.mean;
  out.speed_empirical_se = sp.se;
  out.speed_agrees = std::abs(out.speed_empirical - out.speed_theoretical) <=
                     3.0 * std::hypot(out.speed_empirical_se, out.speed_theoretical_se) + options.speed_tolerance;
  return out;
}

DriftReport drift_identity_check(const EnvSpec& spec, std::uint64_t seed, int samples, const SeriesOptions& options,
                                 int workers) {
  if (samples < 1) throw Error(ErrorKind::InvalidSpec, "samples must be positive");
  std::vector<double> values(static_cast<std::size_t>(samples));
  parallel_for(samples, workers, [&](std::int64_t j) {
    EnvWindow env = EnvWindow::replica(spec, seed, static_cast<std::uint64_t>(j));
    const double pi = invariant_density(env, options).pi_value;
    values[static_cast<std::size_t>(j)] = pi * env.site_law(0).drift();
  });
  const auto ms = stats::mean_se(values);
  DriftReport out;
  out.mean = ms.mean;
  out.se = ms.se;
  out.samples = samples;
  const double band = spec.is_deterministic() ? 1e-10 : 3.0 * ms.se;
  out.passes = std::abs(ms.mean - 1.0) <= band;
  return out;
}

// ---------------------------------------------------------------------------

TailReport tail_exponent(const std::vector<double>& samples, int k_top, int n_boot, std::uint64_t seed) {
  TailReport out;
  out.hill = stats::hill_with_ci(samples, k_top, n_boot, seed);
  out.rank_kappa = stats::rank_regression_kappa(samples, k_top);
  const auto positives = std::count_if(samples.begin(), samples.end(), [](double v) { return v > 0.0; });
  for (int k : {k_top / 4, k_top / 2, k_top, 2 * k_top, 4 * k_top}) {
    if (k < 10 || k + 1 > positives) continue;
    try {
      const double kappa = stats::hill(samples, k);
      out.k_grid.push_back(k);
      out.hill_by_k.push_back(kappa);
    } catch (const Error&) {
      // Too few distinct values at this depth; the grid just gets shorter.
    }
  }
  if (out.hill_by_k.size() >= 3) {
    bool up = true, down = true;
    for (std::size_t i = 1; i < out.hill_by_k.size(); ++i) {
      up = up && out.hill_by_k[i] > out.hill_by_k[i - 1];
      down = down && out.hill_by_k[i] < out.hill_by_k[i - 1];
    }
    const auto [lo, hi] = std::minmax_element(out.hill_by_k.begin(), out.hill_by_k.end());
    out.not_power_law = (up || down) && *hi > 1.3 * *lo;
  }
  return out;
}

std::vector<double> tail_series_samples(const EnvSpec& spec, std::uint64_t seed, const LRowd& x, int n_samples,
                                        const SeriesOptions& options, int workers) {
  std::vector<double> out(static_cast<std::size_t>(std::max(n_samples, 0)));
  parallel_for(n_samples, workers, [&](std::int64_t j) {
    EnvWindow env = EnvWindow::replica(spec, seed, static_cast<std::uint64_t>(j));
    out[static_cast<std::size_t>(j)] = tail_series_sample(env, x, options).value;
  });
  return out;
}

DirectionReport directional_scaling_check(const EnvSpec& spec, std::uint64_t seed, const LRowd& x1, const LRowd& x2,
                                          int n_samples, double kappa_hat, const DirectionOptions& options) {
  if (n_samples < 100) throw Error(ErrorKind::InvalidSpec, "directional check needs at least 100 samples");
  DirectionReport out;
  const auto ns = static_cast<std::size_t>(n_samples);
  out.x1_samples.resize(ns);
  out.x2_samples.resize(ns);
  parallel_for(n_samples, options.workers, [&](std::int64_t j) {
    EnvWindow env = EnvWindow::replica(spec, seed, static_cast<std::uint64_t>(j));
    out.x1_samples[static_cast<std::size_t>(j)] = tail_series_sample(env, x1, options.series).value;
    out.x2_samples[static_cast<std::size_t>(j)] = tail_series_sample(env, x2, options.series).value;
  });
  const LMatrixd b = similarity_B<double>(spec.L);
  out.ratio_target = std::pow(l1(x2 * b) / l1(x1 * b), kappa_hat);

  const auto [mn, mx] = std::minmax_element(out.x1_samples.begin(), out.x1_samples.end());
  if (spec.is_deterministic() || *mn == *mx) {
    out.degenerate = true;
    return out;
  }

  std::vector<double> s1 = out.x1_samples;
  std::sort(s1.begin(), s1.end(), std::greater<>());
  double log_ratio = 0.0;
  for (double f : {options.tail_fraction, options.tail_fraction / 2, options.tail_fraction / 4}) {
    const auto r = std::max<std::size_t>(1, static_cast<std::size_t>(f * n_samples));
    if (r >= ns) continue;
    const double t = 0.5 * (s1[r - 1] + s1[r]);
    const auto above1 = std::count_if(out.x1_samples.begin(), out.x1_samples.end(), [&](double v) { return v > t; });
    const auto above2 = std::count_if(out.x2_samples.begin(), out.x2_samples.end(), [&](double v) { return v > t; });
    if (above1 == 0 || above2 == 0) continue;
    const double ratio = static_cast<double>(above2) / static_cast<double>(above1);
    out.thresholds.push_back(t);
    out.survival_ratios.push_back(ratio);
    log_ratio += std::log(ratio);
  }
  if (out.survival_ratios.empty()) throw Error(ErrorKind::InsufficientTail, "no usable thresholds");
  out.ratio_empirical = std::exp(log_ratio / static_cast<double>(out.survival_ratios.size()));
  const double rel = out.ratio_empirical / out.ratio_target;
  out.ratio_within_factor = rel <= options.factor && rel >= 1.0 / options.factor;

  const int k = std::max(10, static_cast<int>(options.tail_fraction * n_samples));
  out.hill_x1 = stats::hill_with_ci(out.x1_samples, k, options.n_boot, rng::derive_key(seed, rng::Domain::Bootstrap, 1));
  out.hill_x2 = stats::hill_with_ci(out.x2_samples, k, options.n_boot, rng::derive_key(seed, rng::Domain::Bootstrap, 2));
  out.kappa_agrees = out.hill_x1.ci_low <= out.hill_x2.ci_high && out.hill_x2.ci_low <= out.hill_x1.ci_high;
  return out;
}

// ---------------------------------------------------------------------------

std::vector<double> hitting_time_samples(const EnvSpec& spec, std::uint64_t seed, std::int64_t n, int n_samples,
                                         const CollapseOptions& options) {
  std::vector<double> out(static_cast<std::size_t>(std::max(n_samples, 0)));
  parallel_for(n_samples, options.workers, [&](std::int64_t j) {
    EnvWindow env = EnvWindow::replica(spec, seed, static_cast<std::uint64_t>(j));
    std::int64_t t;
    if (options.method == TimeMethod::Walk) {
      t = hitting_time(env, n, rng::derive_key(seed, rng::Domain::Walk, static_cast<std::uint64_t>(j)),
                       options.max_steps);
    } else {
      rng::Stream stream(seed, rng::Domain::Branch, static_cast<std::uint64_t>(j));
      BranchOptions bo;
      bo.sampler = Sampler::Aggregate;
      bo.population_cap = options.population_cap;
      t = hitting_time_via_branching(env, n, stream, bo);
    }
    out[static_cast<std::size_t>(j)] = static_cast<double>(t);
  });
  return out;
}

CollapseReport collapse_check(const EnvSpec& spec, std::uint64_t seed, double kappa_hat, std::int64_t n_small,
                              std::int64_t n_large, int n_samples, const CollapseOptions& options) {
  if (!(kappa_hat > 0.0)) throw Error(ErrorKind::InvalidSpec, "kappa must be positive");
  if (n_small < 1 || n_large < 1 || n_samples < 2) throw Error(ErrorKind::InvalidSpec, "bad collapse sizes");
  if (std::abs(kappa_hat - 1.0) < options.boundary_width || std::abs(kappa_hat - 2.0) < options.boundary_width) {
    throw Error(ErrorKind::Unsupported, "kappa = " + std::to_string(kappa_hat) +
                                            " is too close to 1 or 2; the centering is not computable");
  }
  CollapseReport out;
  out.kappa_used = kappa_hat;
  out.n_small = n_small;
  out.n_large = n_large;
  out.n_samples = n_samples;
  const auto small = hitting_time_samples(spec, rng::derive_key(seed, rng::Domain::Replica, 0), n_small, n_samples,
                                          options);
  const auto large = hitting_time_samples(spec, rng::derive_key(seed, rng::Domain::Replica, 1), n_large, n_samples,
                                          options);
  const auto ms_small = stats::mean_se(small);
  const auto ms_large = stats::mean_se(large);
  if (ms_small.sd == 0.0 && ms_large.sd == 0.0) {
    out.regime = Regime::Degenerate;
    out.normalization = "(T_n - mean) (zero variance)";
    out.small_normalized.assign(small.size(), 0.0);
    out.large_normalized.assign(large.size(), 0.0);
    return out;
  }
  const auto normalize = [&](const std::vector<double>& x, const stats::MeanSe& ms, std::int64_t n) {
    std::vector<double> y(x.size());
    const double scale = std::pow(static_cast<double>(n), 1.0 / kappa_hat);
    for (std::size_t i = 0; i < x.size(); ++i) {
      switch (out.regime) {
        case Regime::Below1: y[i] = x[i] / scale; break;
        case Regime::Between1And2: y[i] = (x[i] - ms.mean) / scale; break;
        default: y[i] = ms.sd > 0.0 ? (x[i] - ms.mean) / ms.sd : 0.0; break;
      }
    }
    return y;
  };
  if (kappa_hat < 1.0) {
    out.regime = Regime::Below1;
    out.normalization = "T_n / n^(1/kappa)";
  } else if (kappa_hat < 2.0) {
    out.regime = Regime::Between1And2;
    out.normalization = "(T_n - mean) / n^(1/kappa)";
  } else {
    out.regime = Regime::Above2;
    out.normalization = "(T_n - mean) / sd";
  }
  out.small_normalized = normalize(small, ms_small, n_small);
  out.large_normalized = normalize(large, ms_large, n_large);
  const auto ks = stats::ks_two_sample(out.small_normalized, out.large_normalized);
  out.ks_distance = ks.statistic;
  out.ks_p_value = ks.p_value;
  if (out.regime == Regime::Above2) {
    const auto kn = stats::ks_one_sample(out.large_normalized, stats::normal_cdf);
    out.ks_normal = kn.statistic;
    out.ks_normal_p_value = kn.p_value;
  }
  return out;
}

}  // namespace rwre
