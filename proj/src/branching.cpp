#include "rwre/branching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "rwre/parallel.hpp"

namespace rwre {

Counts sample_offspring(const JumpLaw& law, int parent_type, rng::Stream& stream) {
  const int L = law.L();
  if (parent_type < 1 || parent_type > L) throw Error(ErrorKind::InvalidSpec, "parent type out of range");
  Counts u = Counts::Zero(L);
  if (parent_type >= 2) ++u(parent_type - 2);
  for (std::int64_t draws = 0;; ++draws) {
    if (draws >= kMaxOffspringDraws) {
      throw Error(ErrorKind::NonTermination, "no up-jump within " + std::to_string(kMaxOffspringDraws) + " draws");
    }
    const int z = law.sample_jump(stream);
    if (z == 1) return u;
    ++u(-z - 1);
  }
}

Counts reproduce(const JumpLaw& law, const Counts& parents, rng::Stream& stream, Sampler sampler) {
  const int L = law.L();
  Counts children = Counts::Zero(L);
  if (sampler == Sampler::Particle) {
    for (int l = 1; l <= L; ++l) {
      for (std::int64_t c = 0; c < parents(l - 1); ++c) children += sample_offspring(law, l, stream);
    }
    return children;
  }
  for (int l = 2; l <= L; ++l) children(l - 2) += parents(l - 1);
  const std::int64_t r = parents.sum();
  if (r == 0 || !(law.up() < 1.0)) return children;
  // The number of left-jump draws before r up-jumps is negative binomial;
  // conditionally on g ~ Gamma(r) it is Poisson(g (1-p)/p) and splits into
  // independent Poisson counts per jump size.
  const double g = stream.gamma(static_cast<double>(r)) / law.up();
  for (int l = 1; l <= L; ++l) {
    if (law.down(l) > 0.0) children(l - 1) += stream.poisson(g * law.down(l));
  }
  return children;
}

namespace {

void check_cap(const Counts& z, std::int64_t cap, std::int64_t t) {
  if (z.sum() > cap) {
    throw Error(ErrorKind::PopulationExplosion, "generation " + std::to_string(t) + " has " +
                                                    std::to_string(z.sum()) + " particles (cap " +
                                                    std::to_string(cap) + ")");
  }
}

bool immigrant_at(std::int64_t time_index, std::int64_t limit) { return limit < 0 || time_index < limit; }

}  // namespace

BranchTrajectory simulate_Z(EnvWindow& env, std::int64_t horizon, rng::Stream& stream, const BranchOptions& options) {
  if (horizon < 1) throw Error(ErrorKind::InvalidSpec, "horizon must be at least 1");
  const int L = env.L();
  const Counts e1 = unit_row<std::int64_t>(1, L);
  BranchTrajectory out;
  out.env_seed = env.seed();
  out.generations.reserve(static_cast<std::size_t>(horizon) + 1);
  out.generations.push_back(Counts::Zero(L));
  for (std::int64_t t = 1; t <= horizon; ++t) {
    const std::int64_t k = t - 1;  // the immigrant arriving at time -k reproduces now
    const JumpLaw& law = env.site_law(-k);
    const bool immigrant = immigrant_at(k, options.immigrant_limit);
    if (!options.track_lineages) {
      Counts parents = out.generations.back();
      if (immigrant) parents += e1;
      out.generations.push_back(reproduce(law, parents, stream, options.sampler));
    } else {
      if (immigrant) out.lineages.emplace_back(static_cast<std::size_t>(t), Counts::Zero(L));
      Counts total = Counts::Zero(L);
      for (std::size_t j = 0; j < out.lineages.size(); ++j) {
        auto& lineage = out.lineages[j];
        Counts parents = lineage.back();
        if (static_cast<std::int64_t>(j) == k && immigrant) parents += e1;
        lineage.push_back(reproduce(law, parents, stream, options.sampler));
        total += lineage.back();
      }
      out.generations.push_back(total);
    }
    check_cap(out.generations.back(), options.population_cap, t);
  }
  return out;
}

std::int64_t hitting_time_via_branching(EnvWindow& env, std::int64_t n, rng::Stream& stream,
                                        const BranchOptions& options) {
  if (n < 1) throw Error(ErrorKind::InvalidSpec, "target level must be at least 1");
  const int L = env.L();
  const LCol<std::int64_t> w = x0<std::int64_t>(L);
  Counts z = Counts::Zero(L);
  std::int64_t total = n;
  for (std::int64_t t = 1;; ++t) {
    Counts parents = z;
    if (t <= n) ++parents(0);
    z = reproduce(env.site_law(-(t - 1)), parents, stream, options.sampler);
    check_cap(z, options.population_cap, t);
    total += z.dot(w);
    if (t >= n && z.sum() == 0) return total;
  }
}

// ---------------------------------------------------------------------------

RegenResult regen_blocks(const EnvSpec& spec, std::uint64_t seed, std::int64_t n_blocks, const RegenOptions& options) {
  if (n_blocks < 1) throw Error(ErrorKind::InvalidSpec, "n_blocks must be positive");
  if (options.n_streams < 1) throw Error(ErrorKind::InvalidSpec, "n_streams must be positive");
  const int L = spec.L;
  const LCol<std::int64_t> w = x0<std::int64_t>(L);
  const Counts e1 = unit_row<std::int64_t>(1, L);
  std::vector<std::vector<RegenBlock>> per_stream(static_cast<std::size_t>(options.n_streams));
  std::vector<std::int64_t> discards(static_cast<std::size_t>(options.n_streams), 0);

  parallel_for(options.n_streams, options.workers, [&](std::int64_t s) {
    const std::int64_t quota = n_blocks / options.n_streams + (s < n_blocks % options.n_streams ? 1 : 0);
    const EnvWindow env = EnvWindow::replica(spec, seed, static_cast<std::uint64_t>(s));
    rng::Stream stream(seed, rng::Domain::Branch, static_cast<std::uint64_t>(s));
    auto& out = per_stream[static_cast<std::size_t>(s)];
    auto& discarded = discards[static_cast<std::size_t>(s)];
    out.reserve(static_cast<std::size_t>(quota));
    std::int64_t t = 0;  // current generation; site -t reproduces next
    while (static_cast<std::int64_t>(out.size()) < quota) {
      if (discarded > n_blocks) {
        throw Error(ErrorKind::BlockTimeout, "more discarded blocks than requested blocks");
      }
      RegenBlock block;
      block.stream = s;
      block.index = static_cast<std::int64_t>(out.size());
      block.W = Counts::Zero(L);
      Counts z = Counts::Zero(L);
      bool cut = false;
      for (;;) {
        block.W += z;
        z = reproduce(env.draw_site(-t), z + e1, stream, options.sampler);
        ++t;
        ++block.gap;
        if (z.sum() == 0) break;
        if (block.gap >= options.max_generations || z.sum() > options.population_cap) {
          cut = true;
          break;
        }
      }
      if (cut) {
        ++discarded;
        continue;
      }
      block.w_dot_x0 = block.W.dot(w);
      out.push_back(block);
    }
  });

  RegenResult result;
  result.blocks.reserve(static_cast<std::size_t>(n_blocks));
  for (std::size_t s = 0; s < per_stream.size(); ++s) {
    result.blocks.insert(result.blocks.end(), per_stream[s].begin(), per_stream[s].end());
    result.discarded += discards[s];
  }
  return result;
}

// ---------------------------------------------------------------------------

SigmaStop sigma_stop(const BranchTrajectory& trajectory, double A) {
  SigmaStop out;
  out.A = A;
  const auto& z = trajectory.generations;
  for (std::size_t m = 1; m < z.size(); ++m) {
    const auto size = static_cast<double>(z[m].sum());
    if (!out.sigma && size > A) {
      out.sigma = static_cast<std::int64_t>(m);
      out.reached_before_nu = true;
    }
    if (z[m].sum() == 0) {
      out.nu = static_cast<std::int64_t>(m);
      return out;
    }
  }
  if (!out.sigma) throw Error(ErrorKind::Undetermined, "neither |Z| > A nor regeneration within the trajectory");
  return out;
}

std::vector<double> sigma_probabilities(const EnvSpec& spec, std::uint64_t seed, const std::vector<double>& A_grid,
                                        int n_samples, std::int64_t max_generations) {
  if (n_samples < 1) throw Error(ErrorKind::InvalidSpec, "n_samples must be positive");
  const int L = spec.L;
  const Counts e1 = unit_row<std::int64_t>(1, L);
  std::vector<double> peaks(static_cast<std::size_t>(n_samples));
  for (int j = 0; j < n_samples; ++j) {
    const EnvWindow env = EnvWindow::replica(spec, seed, static_cast<std::uint64_t>(j));
    rng::Stream stream(seed, rng::Domain::Branch, static_cast<std::uint64_t>(j));
    Counts z = Counts::Zero(L);
    double peak = std::numeric_limits<double>::infinity();
    double seen = 0.0;
    for (std::int64_t t = 0; t < max_generations; ++t) {
      z = reproduce(env.draw_site(-t), z + e1, stream, Sampler::Aggregate);
      if (z.sum() == 0) {
        peak = seen;
        break;
      }
      seen = std::max(seen, static_cast<double>(z.sum()));
    }
    peaks[static_cast<std::size_t>(j)] = peak;
  }
  std::vector<double> out;
  out.reserve(A_grid.size());
  for (double A : A_grid) {
    const auto hits = std::count_if(peaks.begin(), peaks.end(), [&](double p) { return p > A; });
    out.push_back(static_cast<double>(hits) / n_samples);
  }
  return out;
}

NuTailReport nu_tail_report(const std::vector<RegenBlock>& blocks, int min_exceedances) {
  if (blocks.empty()) throw Error(ErrorKind::EmptySample, "no regeneration blocks");
  NuTailReport out;
  std::int64_t max_gap = 0;
  for (const auto& b : blocks) max_gap = std::max(max_gap, b.gap);
  if (max_gap <= 1) {
    out.degenerate = true;
    return out;
  }
  std::vector<std::int64_t> counts(static_cast<std::size_t>(max_gap) + 1, 0);
  for (const auto& b : blocks) ++counts[static_cast<std::size_t>(b.gap)];
  const double n = static_cast<double>(blocks.size());
  std::int64_t above = static_cast<std::int64_t>(blocks.size());
  for (std::int64_t t = 1; t <= max_gap; ++t) {
    above -= counts[static_cast<std::size_t>(t)];
    if (above < min_exceedances) break;
    out.t.push_back(static_cast<double>(t));
    out.log_survival.push_back(std::log(static_cast<double>(above) / n));
  }
  out.points = static_cast<int>(out.t.size());
  if (out.points < 5) {
    throw Error(ErrorKind::InsufficientTail, "only " + std::to_string(out.points) + " survival points with >= " +
                                                 std::to_string(min_exceedances) + " exceedances");
  }
  const auto fit = stats::linear_fit(out.t, out.log_survival);
  out.slope = fit.slope;
  out.intercept = fit.intercept;
  out.r2 = fit.r2;
  return out;
}

double lag1_autocorrelation(const std::vector<double>& x) {
  if (x.size() < 3) return 0.0;
  const auto ms = stats::mean_se(x);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    den += (x[i] - ms.mean) * (x[i] - ms.mean);
    if (i + 1 < x.size()) num += (x[i] - ms.mean) * (x[i + 1] - ms.mean);
  }
  return den > 0.0 ? num / den : 0.0;
}

// ---------------------------------------------------------------------------

UzReport u_vs_z_distribution_check(const EnvSpec& spec, std::uint64_t seed, std::int64_t n, int n_samples,
                                   int workers) {
  if (n < 2) throw Error(ErrorKind::InvalidSpec, "n must be at least 2");
  if (n_samples < 1) throw Error(ErrorKind::InvalidSpec, "n_samples must be positive");
  const int L = spec.L;
  const auto gens = static_cast<std::size_t>(n - 1);
  const auto ns = static_cast<std::size_t>(n_samples);
  std::vector<std::vector<double>> u_side(gens, std::vector<double>(ns));
  std::vector<std::vector<double>> z_side(gens, std::vector<double>(ns));
  std::vector<double> u_total(ns), z_total(ns);
  const LCol<std::int64_t> w = x0<std::int64_t>(L);

  parallel_for(n_samples, workers, [&](std::int64_t j) {
    const auto ju = static_cast<std::size_t>(j);
    EnvWindow walk_env = EnvWindow::replica(spec, seed, 2 * static_cast<std::uint64_t>(j));
    const WalkPath path = simulate_to_level(walk_env, n, rng::derive_key(seed, rng::Domain::Walk,
                                                                        static_cast<std::uint64_t>(j)));
    const StepTable table = step_table(path, L);
    for (std::size_t g = 1; g <= gens; ++g) {
      u_side[g - 1][ju] = static_cast<double>(table.row(n - 1 - static_cast<std::int64_t>(g)).sum());
    }
    u_total[ju] = static_cast<double>(table.weighted_total());

    EnvWindow branch_env = EnvWindow::replica(spec, seed, 2 * static_cast<std::uint64_t>(j) + 1);
    rng::Stream stream(seed, rng::Domain::Branch, static_cast<std::uint64_t>(j));
    Counts z = Counts::Zero(L);
    std::int64_t total = 0;
    for (std::int64_t t = 1;; ++t) {
      Counts parents = z;
      if (t <= n) ++parents(0);
      z = reproduce(branch_env.site_law(-(t - 1)), parents, stream, Sampler::Particle);
      check_cap(z, kDefaultPopulationCap, t);
      if (t <= n - 1) z_side[static_cast<std::size_t>(t - 1)][ju] = static_cast<double>(z.sum());
      total += z.dot(w);
      if (t >= n && z.sum() == 0) break;
    }
    z_total[ju] = static_cast<double>(total);
  });

  UzReport out;
  out.n = n;
  out.n_samples = n_samples;
  for (std::size_t g = 0; g < gens; ++g) {
    const auto ks = stats::ks_two_sample(u_side[g], z_side[g]);
    out.ks_statistic.push_back(ks.statistic);
    out.p_value.push_back(ks.p_value);
    out.min_p_value = std::min(out.min_p_value, ks.p_value);
  }
  const auto ks = stats::ks_two_sample(u_total, z_total);
  out.total_ks_statistic = ks.statistic;
  out.total_p_value = ks.p_value;
  return out;
}

}  // namespace rwre
