#include "rwre/matrices.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>

#include "rwre/parallel.hpp"
#include "rwre/stats.hpp"

namespace rwre {

const char* to_string(Norm n) { return n == Norm::Row ? "row" : "column"; }
const char* to_string(Side s) { return s == Side::Forward ? "forward" : "backward"; }
const char* to_string(Family f) { return f == Family::M ? "M" : "Mbar"; }

bool verify_fixed_vectors(int L) {
  const LMatrix<long long> b = similarity_B<long long>(L);
  const LMatrix<long long> b_inv = similarity_B_inv<long long>(L);
  const LMatrix<long long> id = LMatrix<long long>::Identity(L, L);
  if ((b * b_inv) != id || (b_inv * b) != id) return false;
  return (b_inv * x0<long long>(L)) == xbar0<long long>(L) && (b * xbar0<long long>(L)) == x0<long long>(L);
}

// ---------------------------------------------------------------------------

double lyapunov_path(const EnvWindow& env, std::int64_t n_steps, Norm norm, Side side, Family family) {
  if (n_steps < 1) throw Error(ErrorKind::InvalidSpec, "lyapunov needs n_steps >= 1");
  const int L = env.L();
  LMatrixd product = LMatrixd::Identity(L, L);
  LMatrixd next(L, L);
  double log_norm = 0.0;
  for (std::int64_t k = 0; k < n_steps; ++k) {
    const std::int64_t site = side == Side::Forward ? k : -k;
    const LMatrixd m = build<double>(env.draw_site(site), family);
    if (side == Side::Forward) {
      next.noalias() = m * product;
    } else {
      next.noalias() = product * m;
    }
    const double s = matrix_norm(next, norm);
    if (!(s > 0.0) || !std::isfinite(s)) {
      throw Error(ErrorKind::NumericalUnderflow, "matrix product collapsed to zero at step " + std::to_string(k));
    }
    log_norm += std::log(s);
    product = next / s;
  }
  return log_norm / static_cast<double>(n_steps);
}

LyapunovEstimate lyapunov(const EnvSpec& spec, std::uint64_t seed, std::int64_t n_steps, int n_replicas, Norm norm,
                          Side side, Family family, int workers) {
  if (n_replicas < 1) throw Error(ErrorKind::InvalidSpec, "lyapunov needs at least one replica");
  LyapunovEstimate out;
  out.n_steps = n_steps;
  out.n_replicas = n_replicas;
  out.norm_used = norm;
  out.side = side;
  out.family = family;
  out.per_replica.assign(static_cast<std::size_t>(n_replicas), 0.0);
  parallel_for(n_replicas, workers, [&](std::int64_t r) {
    const EnvWindow env = EnvWindow::replica(spec, seed, static_cast<std::uint64_t>(r));
    out.per_replica[static_cast<std::size_t>(r)] = lyapunov_path(env, n_steps, norm, side, family);
  });
  const auto ms = stats::mean_se(out.per_replica);
  out.gamma_hat = ms.mean;
  out.std_err = ms.se;
  return out;
}

FourWayReport lyapunov_four_way(const EnvSpec& spec, std::uint64_t seed, std::int64_t n_steps, int n_replicas,
                                int workers) {
  FourWayReport out;
  out.estimates = {
      lyapunov(spec, seed, n_steps, n_replicas, Norm::Column, Side::Forward, Family::M, workers),
      lyapunov(spec, seed, n_steps, n_replicas, Norm::Column, Side::Forward, Family::Mbar, workers),
      lyapunov(spec, seed, n_steps, n_replicas, Norm::Row, Side::Backward, Family::M, workers),
      lyapunov(spec, seed, n_steps, n_replicas, Norm::Row, Side::Backward, Family::Mbar, workers),
  };
  out.consistent = true;
  for (std::size_t i = 0; i < out.estimates.size(); ++i) {
    for (std::size_t j = i + 1; j < out.estimates.size(); ++j) {
      const auto& a = out.estimates[i];
      const auto& b = out.estimates[j];
      const double gap = std::abs(a.gamma_hat - b.gamma_hat);
      const double se = std::hypot(a.std_err, b.std_err);
      out.max_pairwise_gap = std::max(out.max_pairwise_gap, gap);
      double z = 0.0;
      if (se > 0.0) {
        z = gap / se;
      } else if (gap > 1e-12) {
        z = std::numeric_limits<double>::infinity();
      }
      out.max_pairwise_z = std::max(out.max_pairwise_z, z);
      if (z > 3.0) out.consistent = false;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

struct PointStats {
  double lambda = 0.0;
  double se = 0.0;
  double ess_fraction = 1.0;
};

// Log norms of n-step backward products, one per replica window.
std::vector<double> backward_log_norms(const EnvSpec& spec, std::uint64_t seed, std::int64_t n_steps, int n_replicas,
                                       int workers) {
  std::vector<double> out(static_cast<std::size_t>(n_replicas));
  parallel_for(n_replicas, workers, [&](std::int64_t r) {
    const EnvWindow env = EnvWindow::replica(spec, rng::derive_key(seed, rng::Domain::Moment, 0),
                                             static_cast<std::uint64_t>(r));
    out[static_cast<std::size_t>(r)] =
        lyapunov_path(env, n_steps, Norm::Row, Side::Backward, Family::M) * static_cast<double>(n_steps);
  });
  return out;
}

PointStats direct_point(const std::vector<double>& log_norms, double alpha, std::int64_t n_steps) {
  double top = -std::numeric_limits<double>::infinity();
  for (double l : log_norms) top = std::max(top, alpha * l);
  double s1 = 0.0, s2 = 0.0;
  for (double l : log_norms) {
    const double w = std::exp(alpha * l - top);
    s1 += w;
    s2 += w * w;
  }
  const double r = static_cast<double>(log_norms.size());
  const double mean_w = s1 / r;
  PointStats out;
  out.lambda = (top + std::log(mean_w)) / static_cast<double>(n_steps);
  const double var_w = r > 1 ? std::max(0.0, (s2 - r * mean_w * mean_w) / (r - 1.0)) : 0.0;
  out.se = std::sqrt(var_w / r) / mean_w / static_cast<double>(n_steps);
  out.ess_fraction = (s1 * s1) / (r * s2);
  return out;
}

// One population of the cloning algorithm; returns (1/n) sum_t log mean weight
// and the average effective-sample fraction.
std::pair<double, double> cloning_run(const EnvSpec& spec, std::uint64_t seed, int replica, double alpha,
                                      std::int64_t n_steps, std::int64_t burn_in, int population) {
  const int L = spec.L;
  rng::Stream stream(seed, rng::Domain::Moment, static_cast<std::uint64_t>(replica) + 1);
  std::vector<LRowd> dirs(static_cast<std::size_t>(population), e0<double>(L));
  std::vector<LRowd> grown(static_cast<std::size_t>(population));
  std::vector<double> log_growth(static_cast<std::size_t>(population));
  std::vector<double> weights(static_cast<std::size_t>(population));
  double total = 0.0, ess_acc = 0.0;
  for (std::int64_t t = 0; t < burn_in + n_steps; ++t) {
    double top = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < population; ++j) {
      const auto ju = static_cast<std::size_t>(j);
      const LMatrixd m = build_M<double>(sample_law(spec, stream));
      grown[ju].noalias() = dirs[ju] * m;
      const double s = l1(grown[ju]);
      if (!(s > 0.0)) throw Error(ErrorKind::NumericalUnderflow, "direction annihilated by offspring matrix");
      grown[ju] /= s;
      log_growth[ju] = alpha * std::log(s);
      top = std::max(top, log_growth[ju]);
    }
    double s1 = 0.0, s2 = 0.0;
    for (int j = 0; j < population; ++j) {
      const auto ju = static_cast<std::size_t>(j);
      weights[ju] = std::exp(log_growth[ju] - top);
      s1 += weights[ju];
      s2 += weights[ju] * weights[ju];
    }
    if (t >= burn_in) {
      // log of the population mean, with the second-order correction for the
      // bias of a log of a sample mean.
      const double mean_w = s1 / population;
      const double var_w = std::max(0.0, s2 / population - mean_w * mean_w);
      total += top + std::log(mean_w) + var_w / (2.0 * population * mean_w * mean_w);
      ess_acc += (s1 * s1) / (population * s2);
    }
    // Systematic resampling.
    const double step = s1 / population;
    double u = stream.uniform() * step;
    double cum = weights[0];
    std::size_t src = 0;
    for (int j = 0; j < population; ++j) {
      while (u > cum && src + 1 < static_cast<std::size_t>(population)) {
        ++src;
        cum += weights[src];
      }
      dirs[static_cast<std::size_t>(j)] = grown[src];
      u += step;
    }
  }
  return {total / static_cast<double>(n_steps), ess_acc / static_cast<double>(n_steps)};
}

PointStats cloning_point(const EnvSpec& spec, std::uint64_t seed, double alpha, std::int64_t n_steps,
                         const MomentOptions& options) {
  std::vector<double> lam(static_cast<std::size_t>(options.n_replicas));
  std::vector<double> ess(static_cast<std::size_t>(options.n_replicas));
  parallel_for(options.n_replicas, options.workers, [&](std::int64_t r) {
    const auto [l, e] = cloning_run(spec, seed, static_cast<int>(r), alpha, n_steps, options.burn_in,
                                    options.population);
    lam[static_cast<std::size_t>(r)] = l;
    ess[static_cast<std::size_t>(r)] = e;
  });
  const auto ms = stats::mean_se(lam);
  PointStats out;
  out.lambda = ms.mean;
  out.se = ms.se;
  out.ess_fraction = *std::min_element(ess.begin(), ess.end());
  return out;
}

std::vector<PointStats> grid_points(const EnvSpec& spec, std::uint64_t seed, const std::vector<double>& grid,
                                    std::int64_t n_steps, const MomentOptions& options) {
  std::vector<PointStats> out;
  out.reserve(grid.size());
  if (options.estimator == MomentEstimator::Direct) {
    const auto logs = backward_log_norms(spec, seed, n_steps, options.n_replicas, options.workers);
    for (double a : grid) out.push_back(direct_point(logs, a, n_steps));
  } else {
    for (double a : grid) out.push_back(cloning_point(spec, seed, a, n_steps, options));
  }
  return out;
}

void validate_grid(const std::vector<double>& grid) {
  if (grid.empty()) throw Error(ErrorKind::InvalidSpec, "alpha grid is empty");
  for (double a : grid) {
    if (!(a > 0.0) || !std::isfinite(a)) throw Error(ErrorKind::InvalidSpec, "alpha grid must lie in (0, kappa0]");
  }
}

}  // namespace

MomentPoint moment_lyapunov_point(const EnvSpec& spec, std::uint64_t seed, double alpha, std::int64_t n_steps,
                                  const MomentOptions& options) {
  const auto p = grid_points(spec, seed, {alpha}, n_steps, options).front();
  return MomentPoint{alpha, p.lambda, p.se, p.ess_fraction};
}

MomentLyapunov moment_lyapunov(const EnvSpec& spec, std::uint64_t seed, const std::vector<double>& alpha_grid,
                               const MomentOptions& options) {
  validate_grid(alpha_grid);
  MomentLyapunov out;
  out.alpha_grid = alpha_grid;
  std::sort(out.alpha_grid.begin(), out.alpha_grid.end());

  std::int64_t n = options.n_steps;
  auto points = grid_points(spec, seed, out.alpha_grid, n, options);
  out.bias_check_passed = !options.bias_check;
  while (options.bias_check) {
    const auto doubled = grid_points(spec, seed, out.alpha_grid, 2 * n, options);
    bool agree = true;
    for (std::size_t i = 0; i < points.size(); ++i) {
      const double se = std::hypot(points[i].se, doubled[i].se);
      if (std::abs(points[i].lambda - doubled[i].lambda) > 2.0 * se + 1e-12) agree = false;
    }
    n *= 2;
    points = doubled;
    if (agree) {
      out.bias_check_passed = true;
      break;
    }
    if (2 * n > options.max_steps) break;
  }
  out.n_used = n;

  out.min_ess_fraction = 1.0;
  for (const auto& p : points) {
    out.lambda_hat.push_back(p.lambda);
    out.lambda_se.push_back(p.se);
    out.min_ess_fraction = std::min(out.min_ess_fraction, p.ess_fraction);
  }
  out.heavy_tail_warning = out.min_ess_fraction < options.ess_threshold;

  // Convexity with lambda(0) = 0 prepended.
  std::vector<double> xs{0.0}, ys{0.0}, ss{0.0};
  xs.insert(xs.end(), out.alpha_grid.begin(), out.alpha_grid.end());
  ys.insert(ys.end(), out.lambda_hat.begin(), out.lambda_hat.end());
  ss.insert(ss.end(), out.lambda_se.begin(), out.lambda_se.end());
  for (std::size_t i = 1; i + 1 < xs.size(); ++i) {
    const double w = (xs[i] - xs[i - 1]) / (xs[i + 1] - xs[i - 1]);
    const double interp = (1.0 - w) * ys[i - 1] + w * ys[i + 1];
    const double sigma = std::sqrt(ss[i] * ss[i] + (1 - w) * (1 - w) * ss[i - 1] * ss[i - 1] + w * w * ss[i + 1] * ss[i + 1]);
    if (ys[i] > interp + 3.0 * sigma + 1e-12) ++out.convexity_violations;
  }
  return out;
}

MomentLyapunov solve_kappa(const EnvSpec& spec, std::uint64_t seed, const KappaConfig& config) {
  if (!(config.kappa0 > 0.0)) throw Error(ErrorKind::InvalidSpec, "kappa0 must be positive");
  const auto gamma = lyapunov(spec, seed, config.lyapunov_steps, config.lyapunov_replicas, Norm::Row, Side::Backward,
                              Family::M, config.moment.workers);
  if (gamma.gamma_hat >= 0.0) {
    throw Error(ErrorKind::NotTransient, "estimated top Lyapunov exponent " + std::to_string(gamma.gamma_hat) +
                                             " is not negative");
  }
  std::vector<double> grid = config.alpha_grid;
  if (grid.empty()) {
    for (int i = 1; i <= 12; ++i) grid.push_back(config.kappa0 * i / 12.0);
  }
  if (std::find(grid.begin(), grid.end(), config.kappa0) == grid.end()) grid.push_back(config.kappa0);
  for (double a : grid) {
    if (a > config.kappa0) throw Error(ErrorKind::InvalidSpec, "alpha grid exceeds kappa0");
  }

  MomentLyapunov out = moment_lyapunov(spec, seed, grid, config.moment);
  out.gamma_hat = gamma.gamma_hat;
  out.gamma_se = gamma.std_err;
  if (out.lambda_hat.back() < 0.0) {
    throw Error(ErrorKind::NoRootInRange, "lambda(kappa0) = " + std::to_string(out.lambda_hat.back()) +
                                              " < 0: no root in (0, kappa0]");
  }

  // Fixed n from here on so the root is taken on one deterministic function.
  MomentOptions fixed = config.moment;
  const std::int64_t n = out.n_used;
  const auto eval = [&](double a) { return moment_lyapunov_point(spec, seed, a, n, fixed); };

  std::size_t first_pos = 0;
  while (first_pos < out.lambda_hat.size() && !(out.lambda_hat[first_pos] > 0.0)) ++first_pos;
  double hi = out.alpha_grid[first_pos];
  double f_hi = out.lambda_hat[first_pos];
  double lo, f_lo;
  if (first_pos > 0) {
    lo = out.alpha_grid[first_pos - 1];
    f_lo = out.lambda_hat[first_pos - 1];
  } else {
    lo = hi * 1e-3;
    f_lo = eval(lo).lambda_hat;
    if (f_lo > 0.0) {
      throw Error(ErrorKind::NoRootInRange, "lambda is positive at the smallest alpha probed");
    }
  }
  while (hi - lo > config.tolerance) {
    const double mid = 0.5 * (lo + hi);
    const double f_mid = eval(mid).lambda_hat;
    if (f_mid > 0.0) {
      hi = mid;
      f_hi = f_mid;
    } else {
      lo = mid;
      f_lo = f_mid;
    }
  }
  // Secant step inside the final bracket.
  double kappa = 0.5 * (lo + hi);
  if (f_hi - f_lo > 0.0) kappa = lo - f_lo * (hi - lo) / (f_hi - f_lo);
  kappa = std::clamp(kappa, lo, hi);

  // Delta method: se(kappa) = se(lambda(kappa)) / lambda'(kappa).
  const auto at = eval(kappa);
  const double h = std::max(0.05 * kappa, 10.0 * config.tolerance);
  const double slope = (eval(kappa + h).lambda_hat - eval(std::max(kappa - h, 0.5 * kappa)).lambda_hat) /
                       (kappa + h - std::max(kappa - h, 0.5 * kappa));
  out.kappa_hat = kappa;
  out.kappa_se = slope > 0.0 ? at.std_err / slope : std::numeric_limits<double>::infinity();
  out.kappa_ci_low = kappa - 1.96 * out.kappa_se;
  out.kappa_ci_high = kappa + 1.96 * out.kappa_se;
  return out;
}

// ---------------------------------------------------------------------------

SeriesTruncation::SeriesTruncation(const SeriesOptions& options)
    : options_(options), patience_(std::max(1, options.patience)),
      recent_(static_cast<std::size_t>(patience_) + 1, 0.0) {}

bool SeriesTruncation::add(double term) {
  sum_ += term;
  const std::int64_t k = terms_++;
  recent_[static_cast<std::size_t>(k % (patience_ + 1))] = std::abs(term);
  const double scale = std::max(options_.tol * std::abs(sum_), options_.abs_floor);
  quiet_ = std::abs(term) <= scale ? quiet_ + 1 : 0;
  if (quiet_ < patience_) return false;
  // Geometric extrapolation of the remainder from the last `patience` terms.
  const double oldest = recent_[static_cast<std::size_t>((k + 1) % (patience_ + 1))];
  double bound = 0.0;
  if (std::abs(term) > 0.0) {
    const double ratio = oldest > 0.0 ? std::pow(std::abs(term) / oldest, 1.0 / patience_) : 0.0;
    bound = ratio < 1.0 ? std::abs(term) * ratio / (1.0 - ratio) : std::numeric_limits<double>::infinity();
  }
  tail_bound_ = bound;
  return bound <= scale;
}

namespace {

TailSeriesSample finish(const SeriesTruncation& acc, const LRowd& x) {
  TailSeriesSample out;
  out.direction_x = x;
  out.value = acc.sum();
  out.truncation_n = acc.terms();
  out.truncation_tail_bound = acc.tail_bound();
  return out;
}

[[noreturn]] void truncation_failure(const SeriesOptions& options) {
  throw Error(ErrorKind::TruncationFailure,
              "series did not settle within " + std::to_string(options.max_n) + " terms");
}

}  // namespace

TailSeriesSample product_series(EnvWindow& env, const LRowd& x, const LCold& y, Family family,
                                std::int64_t start_site, const SeriesOptions& options) {
  SeriesTruncation acc(options);
  LRowd v = x;
  LRowd next(x.size());
  for (std::int64_t k = 0; !acc.exhausted(); ++k) {
    next.noalias() = v * build<double>(env.site_law(start_site - k), family);
    v = next;
    if (acc.add(v.dot(y))) return finish(acc, x);
  }
  truncation_failure(options);
}

TailSeriesSample column_series(EnvWindow& env, const LRowd& x, const LCold& y, Family family,
                               std::int64_t start_site, const SeriesOptions& options) {
  SeriesTruncation acc(options);
  LCold c = y;
  LCold next(y.size());
  for (std::int64_t k = 0; !acc.exhausted(); ++k) {
    next.noalias() = build<double>(env.site_law(start_site + k), family) * c;
    c = next;
    if (acc.add(x.dot(c))) return finish(acc, x);
  }
  truncation_failure(options);
}

TailSeriesSample tail_series_sample(EnvWindow& env, const LRowd& x, const SeriesOptions& options,
                                    std::int64_t start_site) {
  if ((x.array() < 0.0).any() || !(l1(x) > 0.0)) {
    throw Error(ErrorKind::InvalidSpec, "direction must be nonnegative and nonzero");
  }
  return product_series(env, x, x0<double>(env.L()), Family::M, start_site, options);
}

TranReport prop_tran_check(const EnvSpec& spec, std::uint64_t seed, int l, int n_samples,
                           const SeriesOptions& options, int workers) {
  if (l < 1 || l > spec.L) throw Error(ErrorKind::InvalidSpec, "l must lie in 1..L");
  if (n_samples < 1) throw Error(ErrorKind::InvalidSpec, "n_samples must be positive");
  const int L = spec.L;
  const LRowd el = unit_row<double>(l, L);
  const LRowd e1 = unit_row<double>(1, L);
  const double shift_bar = l == 2 ? 2.0 : 1.0;
  const bool has_bar = l >= 2;

  TranReport out;
  out.l = l;
  out.deterministic = spec.is_deterministic();
  const auto lhs_of = [&](EnvWindow& env) { return tail_series_sample(env, el, options).value; };
  const auto rhs_of = [&](EnvWindow& env) {
    return l == 1 ? tail_series_sample(env, e1, options).value
                  : l + l * tail_series_sample(env, e1, options).value;
  };
  const auto bar_lhs = [&](EnvWindow& env) {
    return product_series(env, el, xbar0<double>(L), Family::Mbar, 0, options).value;
  };
  const auto bar_rhs = [&](EnvWindow& env) {
    return shift_bar + product_series(env, e1, xbar0<double>(L), Family::Mbar, 0, options).value;
  };

  if (out.deterministic) {
    EnvWindow env(spec, seed);
    out.exact_lhs = lhs_of(env);
    out.exact_rhs = rhs_of(env);
    const bool equal = std::abs(out.exact_lhs - out.exact_rhs) <= 1e-10 * std::max(1.0, std::abs(out.exact_rhs));
    out.ks_statistic = equal ? 0.0 : 1.0;
    out.p_value = equal ? 1.0 : 0.0;
    if (has_bar) {
      const double a = bar_lhs(env), b = bar_rhs(env);
      const bool eq_bar = std::abs(a - b) <= 1e-10 * std::max(1.0, std::abs(b));
      out.ks_statistic_bar = eq_bar ? 0.0 : 1.0;
      out.p_value_bar = eq_bar ? 1.0 : 0.0;
    }
    return out;
  }

  const auto n = static_cast<std::size_t>(n_samples);
  out.lhs_samples.resize(n);
  out.rhs_samples.resize(n);
  std::vector<double> bar_a(has_bar ? n : 0), bar_b(has_bar ? n : 0), shifted_error(n);
  parallel_for(n_samples, workers, [&](std::int64_t j) {
    const auto ju = static_cast<std::size_t>(j);
    // Left and right sides use disjoint replica ids.
    EnvWindow left = EnvWindow::replica(spec, seed, 2 * static_cast<std::uint64_t>(j));
    EnvWindow right = EnvWindow::replica(spec, seed, 2 * static_cast<std::uint64_t>(j) + 1);
    out.lhs_samples[ju] = lhs_of(left);
    out.rhs_samples[ju] = rhs_of(right);
    double shifted = l;
    for (int k = 0; k < l; ++k) shifted += tail_series_sample(left, e1, options, -k).value;
    shifted_error[ju] = std::abs(out.lhs_samples[ju] - shifted) / std::max(1.0, std::abs(shifted));
    if (has_bar) {
      bar_a[ju] = bar_lhs(left);
      bar_b[ju] = bar_rhs(right);
    }
  });
  out.shifted_sum_max_error = *std::max_element(shifted_error.begin(), shifted_error.end());
  const auto ks = stats::ks_two_sample(out.lhs_samples, out.rhs_samples);
  out.ks_statistic = ks.statistic;
  out.p_value = ks.p_value;
  if (has_bar) {
    const auto ks_bar = stats::ks_two_sample(bar_a, bar_b);
    out.ks_statistic_bar = ks_bar.statistic;
    out.p_value_bar = ks_bar.p_value;
  }
  return out;
}

}  // namespace rwre
