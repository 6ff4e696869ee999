#include "rwre/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "rwre/branching.hpp"
#include "rwre/limits.hpp"
#include "rwre/matrices.hpp"
#include "rwre/parallel.hpp"
#include "rwre/walk.hpp"

#ifndef RWRE_VERSION
#define RWRE_VERSION "unknown"
#endif

namespace rwre {

const char* version() { return RWRE_VERSION; }

namespace {

using json = nlohmann::ordered_json;

[[noreturn]] void config_error(const std::string& what) { throw Error(ErrorKind::ConfigError, what); }

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<double> parse_reals(const std::string& key, const std::string& text) {
  std::vector<double> out;
  std::istringstream in(text);
  std::string token;
  while (in >> token) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(token, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != token.size() || !std::isfinite(v)) config_error(key + ": '" + token + "' is not a number");
    out.push_back(v);
  }
  return out;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration.

ExperimentConfig ExperimentConfig::parse(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) config_error("line " + std::to_string(line_no) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) config_error("line " + std::to_string(line_no) + ": empty key");
    auto& slot = cfg.values_[key];
    if (!slot.empty() && key != "env.atom") config_error("key '" + key + "' given twice");
    slot.push_back(value);
  }

  if (const auto* e = cfg.raw("experiment")) {
    cfg.experiment = *e;
    const auto& names = experiment_names();
    if (std::find(names.begin(), names.end(), cfg.experiment) == names.end()) {
      config_error("unknown experiment '" + cfg.experiment + "'");
    }
  }
  cfg.seed = static_cast<std::uint64_t>(cfg.get_int("seed", 1, 0, std::numeric_limits<std::int64_t>::max()));
  cfg.workers = static_cast<int>(cfg.get_int("workers", 1, 1, 256));

  const std::string kind = cfg.get_choice("env.kind", "", {"constant", "finite", "dirichlet"});
  const int L = static_cast<int>(cfg.get_int("env.L", 1, 1, kMaxL));
  const double eps = cfg.get_real("env.epsilon", 1e-3, 0.0, 1.0);
  if (kind == "constant") {
    const auto probs = cfg.get_reals("env.law", {});
    if (probs.empty()) config_error("env.law is required for a constant environment");
    cfg.env = EnvSpec::constant(JumpLaw::from_vector(probs, L), eps);
  } else if (kind == "finite") {
    const auto it = cfg.values_.find("env.atom");
    if (it == cfg.values_.end()) config_error("env.atom is required for a finite environment");
    cfg.used_.insert("env.atom");
    std::vector<Atom> atoms;
    for (const auto& text : it->second) {
      const auto colon = text.find(':');
      if (colon == std::string::npos) config_error("env.atom must read 'weight : w(+1) w(-1) ...'");
      const auto weight = parse_reals("env.atom", text.substr(0, colon));
      if (weight.size() != 1) config_error("env.atom needs exactly one weight before ':'");
      atoms.push_back(Atom{JumpLaw::from_vector(parse_reals("env.atom", text.substr(colon + 1)), L), weight[0]});
    }
    cfg.env = EnvSpec::finite(std::move(atoms), eps);
  } else if (kind == "dirichlet") {
    const auto conc = cfg.get_reals("env.concentration", {});
    if (static_cast<int>(conc.size()) != L + 1) config_error("env.concentration needs L + 1 entries");
    JumpProbs c(L + 1);
    for (int i = 0; i <= L; ++i) c(i) = conc[static_cast<std::size_t>(i)];
    cfg.env = EnvSpec::dirichlet(c, eps);
  } else {
    config_error("env.kind is required (constant, finite or dirichlet)");
  }
  cfg.env.L = L;
  cfg.env.kappa0 = cfg.get_real("env.kappa0", 3.0, 1e-6, 1e3);
  cfg.env.assume_c4 = cfg.get_bool("env.assume_c4", true);
  cfg.env.validate();
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) config_error("cannot read config file " + file.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse(text.str());
}

const std::string* ExperimentConfig::raw(const std::string& key) {
  const auto it = values_.find(key);
  if (it == values_.end()) return nullptr;
  used_.insert(key);
  return &it->second.front();
}

std::int64_t ExperimentConfig::get_int(const std::string& key, std::int64_t fallback, std::int64_t lo,
                                       std::int64_t hi) {
  const auto* v = raw(key);
  if (!v) return fallback;
  // Accept plain integers and exact reals such as 1e5.
  const auto reals = parse_reals(key, *v);
  if (reals.size() != 1 || reals[0] != std::floor(reals[0]) || std::abs(reals[0]) > 9.0e18) {
    config_error(key + " must be an integer");
  }
  const auto x = static_cast<std::int64_t>(reals[0]);
  if (x < lo || x > hi) config_error(key + " = " + *v + " outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
  return x;
}

double ExperimentConfig::get_real(const std::string& key, double fallback, double lo, double hi) {
  const auto* v = raw(key);
  if (!v) return fallback;
  const auto reals = parse_reals(key, *v);
  if (reals.size() != 1) config_error(key + " must be a single number");
  if (reals[0] < lo || reals[0] > hi) config_error(key + " = " + *v + " outside [" + fmt(lo) + ", " + fmt(hi) + "]");
  return reals[0];
}

bool ExperimentConfig::get_bool(const std::string& key, bool fallback) {
  const auto* v = raw(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes") return true;
  if (*v == "false" || *v == "0" || *v == "no") return false;
  config_error(key + " must be true or false");
}

std::string ExperimentConfig::get_choice(const std::string& key, const std::string& fallback,
                                         const std::vector<std::string>& choices) {
  const auto* v = raw(key);
  if (!v) return fallback;
  if (std::find(choices.begin(), choices.end(), *v) == choices.end()) {
    std::string all;
    for (const auto& c : choices) all += (all.empty() ? "" : ", ") + c;
    config_error(key + " must be one of: " + all);
  }
  return *v;
}

std::vector<double> ExperimentConfig::get_reals(const std::string& key, const std::vector<double>& fallback) {
  const auto* v = raw(key);
  if (!v) return fallback;
  return parse_reals(key, *v);
}

void ExperimentConfig::check_all_used() const {
  for (const auto& [key, v] : values_) {
    if (!used_.count(key)) config_error("unknown key '" + key + "' for experiment " + experiment);
  }
}

std::map<std::string, std::string> ExperimentConfig::echo() const {
  std::map<std::string, std::string> out;
  for (const auto& [key, v] : values_) {
    std::string joined;
    for (const auto& s : v) joined += (joined.empty() ? "" : "; ") + s;
    out[key] = joined;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Experiment plumbing.

namespace {

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header) : out_(path), path_(path) {
    if (!out_) throw Error(ErrorKind::ConfigError, "cannot write " + path.string());
    row(header);
  }
  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
    out_ << '\n';
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::ofstream out_;
  std::filesystem::path path_;
};

std::string cell(double v) { return fmt(v); }
std::string cell(std::int64_t v) { return std::to_string(v); }
std::string cell(const char* v) { return v; }

template <typename... Ts>
std::vector<std::string> cells(const Ts&... v) {
  return {cell(v)...};
}

struct Context {
  ExperimentConfig& cfg;
  std::filesystem::path out_dir;
  json results = json::object();
  json checks = json::array();
  std::vector<std::filesystem::path> files;

  void check(const std::string& name, bool passed, double value, double threshold, const std::string& rule) {
    checks.push_back({{"name", name}, {"passed", passed}, {"value", value}, {"threshold", threshold}, {"rule", rule}});
  }
  CsvWriter csv(const std::string& name, const std::vector<std::string>& header) {
    files.push_back(out_dir / name);
    return CsvWriter(out_dir / name, header);
  }
};

json hill_json(const stats::HillEstimate& h) {
  return {{"kappa", h.kappa}, {"std_err", h.std_err}, {"ci_low", h.ci_low}, {"ci_high", h.ci_high}, {"k_top", h.k_top}};
}

// ---- walk -----------------------------------------------------------------

void run_walk(Context& ctx) {
  auto& cfg = ctx.cfg;
  const std::int64_t n = cfg.get_int("n", 100, 1, 10'000'000);
  const int replicas = static_cast<int>(cfg.get_int("replicas", 100, 1, 10'000'000));
  const std::int64_t max_steps = cfg.get_int("max_steps", kDefaultMaxSteps, 1, std::numeric_limits<std::int64_t>::max());
  const bool recount = cfg.get_bool("recount", false);
  const bool dump = cfg.get_bool("dump_table", false);
  cfg.check_all_used();

  struct Row {
    std::int64_t t = 0, min_site = 0, abs_u = 0, first_u = 0, residual = 0;
    bool aggregation_ok = true, recount_ok = true, down_ok = true;
    std::vector<std::array<std::int64_t, 3>> table;
  };
  std::vector<Row> rows(static_cast<std::size_t>(replicas));
  parallel_for(replicas, cfg.workers, [&](std::int64_t r) {
    auto& row = rows[static_cast<std::size_t>(r)];
    EnvWindow env = EnvWindow::replica(cfg.env, cfg.seed, static_cast<std::uint64_t>(r));
    const WalkPath path = simulate_to_level(env, n, rng::derive_key(cfg.seed, rng::Domain::Walk,
                                                                   static_cast<std::uint64_t>(r)), max_steps);
    StepTable table = step_table(path, env.L());
    decompose_pieces(path, table);
    row.t = path.length();
    row.min_site = table.min_site;
    row.abs_u = table.total_abs();
    row.first_u = table.total_first();
    row.residual = row.t - n - table.weighted_total();
    std::map<std::int64_t, Counts> aggregated;
    for (const auto& [key, u] : table.per_piece) {
      auto it = aggregated.find(key.second);
      if (it == aggregated.end()) it = aggregated.emplace(key.second, Counts::Zero(env.L())).first;
      it->second += u;
    }
    row.aggregation_ok = aggregated == table.U;
    const auto downs = std::count_if(path.steps.begin(), path.steps.end(), [](auto z) { return z < 0; });
    row.down_ok = downs == row.first_u;
    if (recount) row.recount_ok = recount_from_definition(path, env.L()) == table.U;
    if (dump) {
      for (const auto& [i, u] : table.U) {
        for (int l = 1; l <= env.L(); ++l) row.table.push_back({i, l, u(l - 1)});
      }
    }
  });

  auto csv = ctx.csv("walk.csv", {"replica", "n", "T_n", "min_site", "sum_abs_U", "sum_U1", "identity_residual"});
  std::int64_t bad_identity = 0, bad_aggregation = 0, bad_recount = 0, bad_down = 0;
  std::vector<double> ratio;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& row = rows[r];
    csv.row(cells(static_cast<std::int64_t>(r), n, row.t, row.min_site, row.abs_u, row.first_u, row.residual));
    bad_identity += row.residual != 0;
    bad_aggregation += !row.aggregation_ok;
    bad_recount += !row.recount_ok;
    bad_down += !row.down_ok;
    ratio.push_back(static_cast<double>(row.t) / static_cast<double>(n));
  }
  if (dump) {
    auto table = ctx.csv("walk_table.csv", {"replica", "i", "l", "count"});
    for (std::size_t r = 0; r < rows.size(); ++r) {
      for (const auto& e : rows[r].table) table.row(cells(static_cast<std::int64_t>(r), e[0], e[1], e[2]));
    }
  }
  const auto ms = stats::mean_se(ratio);
  ctx.results["mean_T_over_n"] = ms.mean;
  ctx.results["mean_T_over_n_se"] = ms.se;
  ctx.check("hitting_time_identity", bad_identity == 0, static_cast<double>(bad_identity), 0, "failing paths == 0");
  ctx.check("piece_aggregation", bad_aggregation == 0, static_cast<double>(bad_aggregation), 0, "failing paths == 0");
  ctx.check("reach_count_equals_down_jumps", bad_down == 0, static_cast<double>(bad_down), 0, "failing paths == 0");
  if (recount) ctx.check("definitional_recount", bad_recount == 0, static_cast<double>(bad_recount), 0, "failing paths == 0");
}

// ---- branching --------------------------------------------------------------

void run_branching(Context& ctx) {
  auto& cfg = ctx.cfg;
  const std::int64_t horizon = cfg.get_int("horizon", 20, 1, 1'000'000);
  const int replicas = static_cast<int>(cfg.get_int("replicas", 1000, 2, 10'000'000));
  const std::string sampler = cfg.get_choice("sampler", "particle", {"particle", "aggregate"});
  const bool track = cfg.get_bool("track_lineages", true);
  const std::int64_t check_gen = cfg.get_int("check_generation", std::min<std::int64_t>(5, horizon), 1, horizon);
  const std::int64_t cap = cfg.get_int("population_cap", kDefaultPopulationCap, 1, std::numeric_limits<std::int64_t>::max());
  cfg.check_all_used();

  BranchOptions opts;
  opts.sampler = sampler == "particle" ? Sampler::Particle : Sampler::Aggregate;
  opts.track_lineages = track;
  opts.population_cap = cap;
  // One quenched environment shared by all trajectories.
  EnvWindow env = EnvWindow::replica(cfg.env, cfg.seed, 0);
  for (std::int64_t t = 0; t < horizon; ++t) env.site_law(-t);

  std::vector<BranchTrajectory> trajs(static_cast<std::size_t>(replicas));
  std::vector<char> lineage_ok(static_cast<std::size_t>(replicas), 1);
  parallel_for(replicas, cfg.workers, [&](std::int64_t r) {
    EnvWindow local = env;
    rng::Stream stream(cfg.seed, rng::Domain::Branch, static_cast<std::uint64_t>(r));
    auto traj = simulate_Z(local, horizon, stream, opts);
    if (track) {
      for (std::size_t t = 0; t < traj.generations.size(); ++t) {
        Counts sum = Counts::Zero(env.L());
        for (const auto& lin : traj.lineages) {
          if (t < lin.size()) sum += lin[t];
        }
        if (sum != traj.generations[t]) lineage_ok[static_cast<std::size_t>(r)] = 0;
      }
      traj.lineages.clear();
    }
    trajs[static_cast<std::size_t>(r)] = std::move(traj);
  });

  std::vector<std::string> header{"replica", "generation"};
  for (int l = 1; l <= env.L(); ++l) header.push_back("Z_" + std::to_string(l));
  header.push_back("size");
  auto csv = ctx.csv("branching.csv", header);
  for (std::size_t r = 0; r < trajs.size(); ++r) {
    for (std::size_t t = 0; t < trajs[r].generations.size(); ++t) {
      const auto& z = trajs[r].generations[t];
      std::vector<std::string> row{cell(static_cast<std::int64_t>(r)), cell(static_cast<std::int64_t>(t))};
      for (Eigen::Index l = 0; l < z.size(); ++l) row.push_back(cell(static_cast<std::int64_t>(z(l))));
      row.push_back(cell(static_cast<std::int64_t>(z.sum())));
      csv.row(row);
    }
  }

  // Quenched mean of Z_{-g}: sum_{k<g} e_1 M_{-k} ... M_{-g+1}.
  LRowd oracle = LRowd::Zero(env.L());
  for (std::int64_t t = 1; t <= check_gen; ++t) {
    oracle = (oracle + unit_row<double>(1, env.L())) * build_M<double>(env.site_law(-(t - 1)));
  }
  double max_z = 0.0;
  json means = json::array();
  for (int l = 0; l < env.L(); ++l) {
    std::vector<double> xs;
    for (const auto& tr : trajs) xs.push_back(static_cast<double>(tr.generations[static_cast<std::size_t>(check_gen)](l)));
    const auto ms = stats::mean_se(xs);
    const double z = ms.se > 0 ? std::abs(ms.mean - oracle(l)) / ms.se : (std::abs(ms.mean - oracle(l)) < 1e-12 ? 0.0 : 1e300);
    max_z = std::max(max_z, z);
    means.push_back({{"type", l + 1}, {"mean", ms.mean}, {"se", ms.se}, {"oracle", oracle(l)}});
  }
  bool z0 = std::all_of(trajs.begin(), trajs.end(), [](const auto& tr) { return tr.generations.front().sum() == 0; });
  const auto lineage_bad = std::count(lineage_ok.begin(), lineage_ok.end(), 0);
  ctx.results["check_generation"] = check_gen;
  ctx.results["mean_vs_oracle"] = means;
  ctx.check("Z0_is_empty", z0, z0 ? 0.0 : 1.0, 0, "Z_0 == 0 on every trajectory");
  ctx.check("quenched_mean", max_z <= 3.0, max_z, 3.0, "max |mean - oracle| / se <= 3");
  if (track) ctx.check("lineage_sum", lineage_bad == 0, static_cast<double>(lineage_bad), 0, "failing trajectories == 0");
}

// ---- lyapunov ---------------------------------------------------------------

void run_lyapunov(Context& ctx) {
  auto& cfg = ctx.cfg;
  const std::int64_t n_steps = cfg.get_int("n_steps", 10000, 100, 1'000'000'000);
  const int replicas = static_cast<int>(cfg.get_int("replicas", 16, 2, 1'000'000));
  cfg.check_all_used();
  const auto report = lyapunov_four_way(cfg.env, cfg.seed, n_steps, replicas, cfg.workers);
  auto csv = ctx.csv("lyapunov.csv", {"family", "norm", "side", "replica", "n", "estimate"});
  json est = json::array();
  for (const auto& e : report.estimates) {
    for (std::size_t r = 0; r < e.per_replica.size(); ++r) {
      csv.row(cells(to_string(e.family), to_string(e.norm_used), to_string(e.side), static_cast<std::int64_t>(r),
                    n_steps, e.per_replica[r]));
    }
    est.push_back({{"family", to_string(e.family)}, {"norm", to_string(e.norm_used)}, {"side", to_string(e.side)},
                   {"gamma_hat", e.gamma_hat}, {"std_err", e.std_err}});
  }
  ctx.results["estimates"] = est;
  ctx.results["max_pairwise_gap"] = report.max_pairwise_gap;
  ctx.check("four_way_agreement", report.consistent, report.max_pairwise_z, 3.0, "max pairwise |diff| / se <= 3");
}

// ---- kappa ------------------------------------------------------------------

KappaConfig kappa_config(ExperimentConfig& cfg) {
  KappaConfig kc;
  kc.kappa0 = cfg.env.kappa0;
  kc.alpha_grid = cfg.get_reals("alpha_grid", {});
  kc.tolerance = cfg.get_real("tolerance", 1e-3, 1e-8, 1.0);
  kc.moment.estimator = cfg.get_choice("estimator", "cloning", {"cloning", "direct"}) == "cloning"
                            ? MomentEstimator::Cloning
                            : MomentEstimator::Direct;
  kc.moment.n_steps = cfg.get_int("moment_steps", 200, 10, 100'000'000);
  kc.moment.population = static_cast<int>(cfg.get_int("population", 2000, 10, 100'000'000));
  kc.moment.n_replicas = static_cast<int>(cfg.get_int("moment_replicas", 8, 2, 100'000'000));
  kc.moment.max_steps = cfg.get_int("moment_max_steps", 20000, 10, 1'000'000'000);
  kc.lyapunov_steps = cfg.get_int("lyapunov_steps", 20000, 100, 1'000'000'000);
  kc.lyapunov_replicas = static_cast<int>(cfg.get_int("lyapunov_replicas", 16, 2, 1'000'000));
  kc.moment.workers = cfg.workers;
  return kc;
}

json kappa_json(const MomentLyapunov& m) {
  return {{"kappa_hat", m.kappa_hat ? json(*m.kappa_hat) : json(nullptr)},
          {"kappa_se", m.kappa_se},
          {"kappa_ci", {m.kappa_ci_low, m.kappa_ci_high}},
          {"gamma_hat", m.gamma_hat},
          {"gamma_se", m.gamma_se},
          {"n_used", m.n_used},
          {"bias_check_passed", m.bias_check_passed},
          {"convexity_violations", m.convexity_violations},
          {"heavy_tail_warning", m.heavy_tail_warning},
          {"min_ess_fraction", m.min_ess_fraction}};
}

void run_kappa(Context& ctx) {
  auto& cfg = ctx.cfg;
  const KappaConfig kc = kappa_config(cfg);
  const std::int64_t rho_sites = cfg.get_int("rho_sites", 1'000'000, 1, 1'000'000'000);
  cfg.check_all_used();
  const auto m = solve_kappa(cfg.env, cfg.seed, kc);
  auto csv = ctx.csv("kappa.csv", {"alpha", "lambda_hat", "lambda_se"});
  for (std::size_t i = 0; i < m.alpha_grid.size(); ++i) csv.row(cells(m.alpha_grid[i], m.lambda_hat[i], m.lambda_se[i]));
  ctx.results = kappa_json(m);
  const EnvWindow env = EnvWindow::replica(cfg.env, cfg.seed, 1);
  const auto rho = condition_report(env, rho_sites, *m.kappa_hat);
  ctx.results["mean_rho_pow_kappa"] = rho.kappa0_check;
  ctx.check("bias_check", m.bias_check_passed, static_cast<double>(m.n_used), static_cast<double>(kc.moment.max_steps),
            "lambda at n and 2n agree within 2 se");
  ctx.check("convexity", m.convexity_violations == 0, m.convexity_violations, 0, "violations == 0");
}

// ---- pi ---------------------------------------------------------------------

SeriesOptions series_options(ExperimentConfig& cfg) {
  SeriesOptions s;
  s.tol = cfg.get_real("series_tol", 1e-10, 1e-16, 1e-2);
  s.patience = static_cast<int>(cfg.get_int("series_patience", 20, 1, 100000));
  s.max_n = cfg.get_int("series_max_n", 100000, 10, 1'000'000'000);
  return s;
}

void run_pi(Context& ctx) {
  auto& cfg = ctx.cfg;
  const int samples = static_cast<int>(cfg.get_int("samples", 100, 1, 100'000'000));
  const SeriesOptions so = series_options(cfg);
  cfg.check_all_used();
  std::vector<InvariantDensity> out(static_cast<std::size_t>(samples));
  parallel_for(samples, cfg.workers, [&](std::int64_t j) {
    EnvWindow env = EnvWindow::replica(cfg.env, cfg.seed, static_cast<std::uint64_t>(j));
    out[static_cast<std::size_t>(j)] = invariant_density(env, so);
  });
  auto csv = ctx.csv("pi.csv", {"replica", "pi", "pi_alt", "hitting_crossing", "hitting_visits", "truncation_n", "tail_bound"});
  std::vector<double> pis, hit;
  for (std::size_t j = 0; j < out.size(); ++j) {
    const auto& d = out[j];
    csv.row(cells(static_cast<std::int64_t>(j), d.pi_value, d.pi_alt, d.hitting_crossing, d.hitting_visits,
                  d.truncation_n, d.truncation_n ? d.tail_bound : 0.0));
    pis.push_back(d.pi_value);
    hit.push_back(d.hitting_crossing);
  }
  const auto ms = stats::mean_se(pis);
  const auto mh = stats::mean_se(hit);
  ctx.results["mean_pi"] = ms.mean;
  ctx.results["mean_pi_se"] = ms.se;
  ctx.results["mean_hitting_time"] = mh.mean;
  ctx.results["mean_hitting_time_se"] = mh.se;
  ctx.results["speed_theoretical"] = 1.0 / ms.mean;
  ctx.check("hitting_forms_agree", true, 0.0, so.tol, "both forms of E_w T_1 agree on every sample");
}

// ---- lln --------------------------------------------------------------------

void run_lln(Context& ctx) {
  auto& cfg = ctx.cfg;
  const std::int64_t n = cfg.get_int("n", 100000, 1, 10'000'000'000);
  const int replicas = static_cast<int>(cfg.get_int("replicas", 16, 1, 100'000'000));
  LlnOptions lo;
  lo.pi_samples = static_cast<int>(cfg.get_int("pi_samples", 1000, 1, 100'000'000));
  lo.speed_tolerance = cfg.get_real("speed_tolerance", 0.0, 0.0, 1.0);
  lo.lyapunov_steps = cfg.get_int("lyapunov_steps", 2000, 100, 1'000'000'000);
  lo.lyapunov_replicas = static_cast<int>(cfg.get_int("lyapunov_replicas", 8, 2, 1'000'000));
  lo.series = series_options(cfg);
  lo.workers = cfg.workers;
  cfg.check_all_used();
  const auto r = lln_check(cfg.env, cfg.seed, n, replicas, lo);
  // Per-replica positions are recomputed here for the CSV; position_after is
  // a pure function of (window, walk seed).
  std::vector<std::int64_t> xs(static_cast<std::size_t>(replicas));
  parallel_for(replicas, cfg.workers, [&](std::int64_t j) {
    EnvWindow env = EnvWindow::replica(cfg.env, cfg.seed, 2 * static_cast<std::uint64_t>(j));
    xs[static_cast<std::size_t>(j)] = position_after(env, n, rng::derive_key(cfg.seed, rng::Domain::Walk,
                                                                             static_cast<std::uint64_t>(j)));
  });
  auto csv = ctx.csv("lln.csv", {"replica", "n", "X_n", "speed"});
  for (std::size_t j = 0; j < xs.size(); ++j) {
    csv.row(cells(static_cast<std::int64_t>(j), n, xs[j], static_cast<double>(xs[j]) / static_cast<double>(n)));
  }
  ctx.results["speed_empirical"] = r.speed_empirical;
  ctx.results["speed_empirical_se"] = r.speed_empirical_se;
  ctx.results["speed_theoretical"] = r.speed_theoretical;
  ctx.results["speed_theoretical_se"] = r.speed_theoretical_se;
  ctx.results["mean_pi"] = r.mean_pi;
  ctx.results["mean_pi_se"] = r.mean_pi_se;
  ctx.results["gamma_hat"] = r.gamma_hat;
  ctx.results["gamma_se"] = r.gamma_se;
  ctx.results["pi_checkpoints"] = r.checkpoints;
  ctx.results["pi_running_mean"] = r.running_mean_pi;
  ctx.check("transient_right", r.transient_right, r.gamma_hat, 0.0, "gamma_hat < 0");
  const double band = 3.0 * std::hypot(r.speed_empirical_se, r.speed_theoretical_se) + lo.speed_tolerance;
  ctx.check("speed", r.speed_agrees, std::abs(r.speed_empirical - r.speed_theoretical), band,
            "|empirical - 1/mean pi| <= 3 se + speed_tolerance");
}

// ---- tails ------------------------------------------------------------------

double kappa_from_config(Context& ctx, const KappaConfig& kc, bool given, double kappa) {
  if (given) return kappa;
  const auto m = solve_kappa(ctx.cfg.env, ctx.cfg.seed, kc);
  ctx.results["kappa_solver"] = kappa_json(m);
  return *m.kappa_hat;
}

void run_tails(Context& ctx) {
  auto& cfg = ctx.cfg;
  const int samples = static_cast<int>(cfg.get_int("samples", 100000, 1000, 100'000'000));
  const std::int64_t blocks = cfg.get_int("blocks", 100000, 1000, 100'000'000);
  const double k_fraction = cfg.get_real("k_fraction", 0.01, 1e-4, 0.2);
  const double tolerance = cfg.get_real("kappa_tolerance", 0.15, 0.0, 10.0);
  const double factor = cfg.get_real("ratio_factor", 1.5, 1.0, 100.0);
  const int n_boot = static_cast<int>(cfg.get_int("n_boot", 200, 0, 100000));
  const bool kappa_given = cfg.has("kappa");
  const double kappa_in = cfg.get_real("kappa", 0.0, 1e-6, 1e3);
  const SeriesOptions so = series_options(cfg);
  const KappaConfig kc = kappa_config(cfg);
  RegenOptions ro;
  ro.n_streams = static_cast<int>(cfg.get_int("streams", 16, 1, 100000));
  ro.max_generations = cfg.get_int("max_generations", 1'000'000, 1, 1'000'000'000'000);
  ro.workers = cfg.workers;
  cfg.check_all_used();

  const double kappa = kappa_from_config(ctx, kc, kappa_given, kappa_in);
  const int L = cfg.env.L;
  const LRowd e1 = unit_row<double>(1, L);
  DirectionOptions dopt;
  dopt.tail_fraction = k_fraction;
  dopt.factor = factor;
  dopt.n_boot = n_boot;
  dopt.series = so;
  dopt.workers = cfg.workers;
  const LRowd x2 = L >= 2 ? unit_row<double>(2, L) : LRowd(2.0 * e1);
  const auto dir = directional_scaling_check(cfg.env, cfg.seed, e1, x2, samples, kappa, dopt);
  const auto regen = regen_blocks(cfg.env, cfg.seed, blocks, ro);
  std::vector<double> w;
  for (const auto& b : regen.blocks) w.push_back(static_cast<double>(b.w_dot_x0));

  auto csv = ctx.csv("tails.csv", {"source", "index", "value"});
  for (std::size_t j = 0; j < dir.x1_samples.size(); ++j) csv.row(cells("series_x1", static_cast<std::int64_t>(j), dir.x1_samples[j]));
  for (std::size_t j = 0; j < dir.x2_samples.size(); ++j) csv.row(cells("series_x2", static_cast<std::int64_t>(j), dir.x2_samples[j]));
  for (std::size_t j = 0; j < w.size(); ++j) csv.row(cells("W_dot_x0", static_cast<std::int64_t>(j), w[j]));

  ctx.results["kappa"] = kappa;
  ctx.results["blocks_discarded"] = regen.discarded;
  if (dir.degenerate) {
    ctx.results["degenerate"] = true;
    ctx.check("tails_degenerate", true, 0.0, 0.0, "constant environment: no tail to estimate");
    return;
  }
  const int k_series = std::max(10, static_cast<int>(k_fraction * samples));
  const int k_w = std::max(10, static_cast<int>(k_fraction * static_cast<double>(w.size())));
  const auto ts = tail_exponent(dir.x1_samples, k_series, n_boot, rng::derive_key(cfg.seed, rng::Domain::Bootstrap, 10));
  const auto tw = tail_exponent(w, k_w, n_boot, rng::derive_key(cfg.seed, rng::Domain::Bootstrap, 11));
  ctx.results["series_hill"] = hill_json(ts.hill);
  ctx.results["series_rank_kappa"] = ts.rank_kappa;
  ctx.results["series_not_power_law"] = ts.not_power_law;
  ctx.results["W_hill"] = hill_json(tw.hill);
  ctx.results["W_rank_kappa"] = tw.rank_kappa;
  ctx.results["W_not_power_law"] = tw.not_power_law;
  ctx.results["direction_ratio"] = dir.ratio_empirical;
  ctx.results["direction_ratio_target"] = dir.ratio_target;
  ctx.results["direction_thresholds"] = dir.thresholds;
  ctx.results["direction_survival_ratios"] = dir.survival_ratios;
  ctx.results["x2_hill"] = hill_json(dir.hill_x2);
  ctx.check("series_tail_index", std::abs(ts.hill.kappa - kappa) <= tolerance, std::abs(ts.hill.kappa - kappa),
            tolerance, "|hill(x1 eta x0) - kappa| <= tolerance");
  ctx.check("W_tail_index", std::abs(tw.hill.kappa - kappa) <= tolerance, std::abs(tw.hill.kappa - kappa), tolerance,
            "|hill(W x0) - kappa| <= tolerance");
  ctx.check("direction_ratio", dir.ratio_within_factor, dir.ratio_empirical / dir.ratio_target, factor,
            "ratio / target within [1/factor, factor]");
}

// ---- tran -------------------------------------------------------------------

void run_tran(Context& ctx) {
  auto& cfg = ctx.cfg;
  const int l = static_cast<int>(cfg.get_int("l", std::min(2, cfg.env.L), 1, kMaxL));
  const int samples = static_cast<int>(cfg.get_int("samples", 10000, 2, 100'000'000));
  const double alpha = cfg.get_real("alpha", 0.01, 0.0, 1.0);
  const SeriesOptions so = series_options(cfg);
  cfg.check_all_used();
  const auto r = prop_tran_check(cfg.env, cfg.seed, l, samples, so, cfg.workers);
  auto csv = ctx.csv("tran.csv", {"index", "lhs", "rhs"});
  if (r.deterministic) {
    csv.row(cells(std::int64_t{0}, r.exact_lhs, r.exact_rhs));
  } else {
    for (std::size_t j = 0; j < r.lhs_samples.size(); ++j) csv.row(cells(static_cast<std::int64_t>(j), r.lhs_samples[j], r.rhs_samples[j]));
  }
  ctx.results["l"] = l;
  ctx.results["deterministic"] = r.deterministic;
  ctx.results["ks_statistic"] = r.ks_statistic;
  ctx.results["p_value"] = r.p_value;
  if (r.deterministic) {
    ctx.results["exact_lhs"] = r.exact_lhs;
    ctx.results["exact_rhs"] = r.exact_rhs;
    ctx.check("exact_identity", r.p_value == 1.0, std::abs(r.exact_lhs - r.exact_rhs), 1e-10, "|lhs - rhs| <= 1e-10 relative");
    if (l >= 2) ctx.check("exact_identity_bar", r.p_value_bar == 1.0, r.ks_statistic_bar, 0.0, "Mbar identity exact");
    return;
  }
  ctx.results["shifted_sum_max_error"] = r.shifted_sum_max_error;
  ctx.check("shifted_sum_pathwise", r.shifted_sum_max_error <= 1e-8, r.shifted_sum_max_error, 1e-8,
            "|e_l eta x0 - (l + sum_{k<l} e_1 eta_{-k} x0)| relative <= 1e-8");
  ctx.check("equal_in_law", r.p_value > alpha, r.p_value, alpha, "KS p > alpha");
  if (l >= 2) {
    ctx.results["ks_statistic_bar"] = r.ks_statistic_bar;
    ctx.results["p_value_bar"] = r.p_value_bar;
    ctx.check("equal_in_law_bar", r.p_value_bar > alpha, r.p_value_bar, alpha, "KS p > alpha");
  }
}

// ---- collapse ---------------------------------------------------------------

void run_collapse(Context& ctx) {
  auto& cfg = ctx.cfg;
  const std::int64_t n_small = cfg.get_int("n_small", 2000, 1, 1'000'000'000);
  const std::int64_t n_large = cfg.get_int("n_large", 8000, 1, 1'000'000'000);
  const int samples = static_cast<int>(cfg.get_int("samples", 10000, 2, 100'000'000));
  const double threshold = cfg.get_real("ks_threshold", 0.05, 0.0, 1.0);
  CollapseOptions co;
  co.method = cfg.get_choice("method", "branching", {"branching", "walk"}) == "walk" ? TimeMethod::Walk : TimeMethod::Branching;
  co.boundary_width = cfg.get_real("boundary_width", 0.1, 0.0, 1.0);
  co.max_steps = cfg.get_int("max_steps", kDefaultMaxSteps, 1, std::numeric_limits<std::int64_t>::max());
  co.workers = cfg.workers;
  const bool kappa_given = cfg.has("kappa");
  const double kappa_in = cfg.get_real("kappa", 0.0, 1e-6, 1e3);
  const KappaConfig kc = kappa_config(cfg);
  cfg.check_all_used();

  const double kappa = kappa_from_config(ctx, kc, kappa_given, kappa_in);
  const auto r = collapse_check(cfg.env, cfg.seed, kappa, n_small, n_large, samples, co);
  auto csv = ctx.csv("collapse.csv", {"set", "index", "normalized"});
  for (std::size_t j = 0; j < r.small_normalized.size(); ++j) csv.row(cells("small", static_cast<std::int64_t>(j), r.small_normalized[j]));
  for (std::size_t j = 0; j < r.large_normalized.size(); ++j) csv.row(cells("large", static_cast<std::int64_t>(j), r.large_normalized[j]));
  ctx.results["kappa_used"] = r.kappa_used;
  ctx.results["regime"] = to_string(r.regime);
  ctx.results["normalization"] = r.normalization;
  ctx.results["ks_distance"] = r.ks_distance;
  ctx.results["ks_p_value"] = r.ks_p_value;
  if (r.regime == Regime::Above2) {
    ctx.results["ks_normal"] = r.ks_normal;
    ctx.results["ks_normal_p_value"] = r.ks_normal_p_value;
    ctx.check("normal_limit", r.ks_normal < threshold, r.ks_normal, threshold, "KS(normalized T_large, N(0,1)) < threshold");
  } else {
    ctx.check("self_collapse", r.ks_distance < threshold, r.ks_distance, threshold, "KS(small, large) < threshold");
  }
}

// ---- uz-check ---------------------------------------------------------------

void run_uz(Context& ctx) {
  auto& cfg = ctx.cfg;
  const std::int64_t n = cfg.get_int("n", 20, 2, 10000);
  const int samples = static_cast<int>(cfg.get_int("samples", 10000, 2, 100'000'000));
  const double alpha = cfg.get_real("alpha", 0.001, 0.0, 1.0);
  cfg.check_all_used();
  const auto r = u_vs_z_distribution_check(cfg.env, cfg.seed, n, samples, cfg.workers);
  auto csv = ctx.csv("uz.csv", {"generation", "ks_statistic", "p_value"});
  for (std::size_t g = 0; g < r.p_value.size(); ++g) csv.row(cells(static_cast<std::int64_t>(g + 1), r.ks_statistic[g], r.p_value[g]));
  csv.row(cells("total", r.total_ks_statistic, r.total_p_value));
  const double per_test = alpha / static_cast<double>(r.p_value.size());
  ctx.results["min_p_value"] = r.min_p_value;
  ctx.results["total_p_value"] = r.total_p_value;
  ctx.results["bonferroni_level"] = per_test;
  ctx.check("per_generation", r.min_p_value > per_test, r.min_p_value, per_test, "min p > alpha / (n - 1)");
  ctx.check("weighted_total", r.total_p_value > alpha, r.total_p_value, alpha, "KS p > alpha");
}

// ---- nu-tail ----------------------------------------------------------------

void run_nu_tail(Context& ctx) {
  auto& cfg = ctx.cfg;
  const std::int64_t blocks = cfg.get_int("blocks", 10000, 10, 1'000'000'000);
  const int min_exc = static_cast<int>(cfg.get_int("min_exceedances", 50, 1, 1'000'000));
  const double r2_min = cfg.get_real("r2_min", 0.95, 0.0, 1.0);
  const double alpha = cfg.get_real("alpha", 0.01, 0.0, 1.0);
  RegenOptions ro;
  ro.n_streams = static_cast<int>(cfg.get_int("streams", 16, 1, 100000));
  ro.max_generations = cfg.get_int("max_generations", 1'000'000, 1, 1'000'000'000'000);
  ro.sampler = cfg.get_choice("sampler", "aggregate", {"particle", "aggregate"}) == "particle" ? Sampler::Particle
                                                                                               : Sampler::Aggregate;
  ro.workers = cfg.workers;
  cfg.check_all_used();

  const auto regen = regen_blocks(cfg.env, cfg.seed, blocks, ro);
  const int L = cfg.env.L;
  std::vector<std::string> header{"stream", "block_index", "gap"};
  for (int l = 1; l <= L; ++l) header.push_back("W_" + std::to_string(l));
  header.push_back("W_dot_x0");
  auto csv = ctx.csv("blocks.csv", header);
  std::vector<double> gaps;
  for (const auto& b : regen.blocks) {
    std::vector<std::string> row{cell(b.stream), cell(b.index), cell(b.gap)};
    for (int l = 0; l < L; ++l) row.push_back(cell(static_cast<std::int64_t>(b.W(l))));
    row.push_back(cell(b.w_dot_x0));
    csv.row(row);
    gaps.push_back(static_cast<double>(b.gap));
  }
  ctx.results["blocks"] = static_cast<std::int64_t>(regen.blocks.size());
  ctx.results["discarded"] = regen.discarded;
  const auto tail = nu_tail_report(regen.blocks, min_exc);
  ctx.results["degenerate"] = tail.degenerate;
  if (tail.degenerate) {
    ctx.check("exponential_tail", true, 0.0, 0.0, "every gap equals 1");
    return;
  }
  ctx.results["slope"] = tail.slope;
  ctx.results["intercept"] = tail.intercept;
  ctx.results["r2"] = tail.r2;
  ctx.results["points"] = tail.points;
  ctx.check("negative_slope", tail.slope < 0.0, tail.slope, 0.0, "slope < 0");
  ctx.check("fit_quality", tail.r2 > r2_min, tail.r2, r2_min, "R^2 > r2_min");
  const std::size_t half = gaps.size() / 2;
  const auto ks = stats::ks_two_sample(std::span(gaps).first(half), std::span(gaps).subspan(half));
  ctx.results["halves_ks_p_value"] = ks.p_value;
  ctx.check("blocks_identically_distributed", ks.p_value > alpha, ks.p_value, alpha, "KS(first half, second half) p > alpha");
  // Lag-1 autocorrelation within each stream, pooled.
  double sum_r = 0.0;
  std::size_t pairs = 0;
  for (std::int64_t s = 0; s < ro.n_streams; ++s) {
    std::vector<double> g;
    for (const auto& b : regen.blocks) {
      if (b.stream == s) g.push_back(static_cast<double>(b.gap));
    }
    if (g.size() < 3) continue;
    sum_r += lag1_autocorrelation(g) * static_cast<double>(g.size() - 1);
    pairs += g.size() - 1;
  }
  const double rho1 = pairs ? sum_r / static_cast<double>(pairs) : 0.0;
  const double bound = pairs ? 3.0 / std::sqrt(static_cast<double>(pairs)) : 1.0;
  ctx.results["lag1_autocorrelation"] = rho1;
  ctx.check("blocks_uncorrelated", std::abs(rho1) <= bound, std::abs(rho1), bound, "|lag-1 autocorrelation| <= 3/sqrt(pairs)");
}

json env_json(const ExperimentConfig& cfg) {
  const EnvWindow env = EnvWindow::replica(cfg.env, cfg.seed, 0);
  const auto r = condition_report(env, 10000, cfg.env.kappa0);
  return {{"L", cfg.env.L},
          {"epsilon", cfg.env.epsilon},
          {"kappa0", r.kappa0},
          {"p_rho_gt_1", r.p_rho_gt_1},
          {"p_rho_gt_1_se", r.p_rho_gt_1_se},
          {"mean_log_plus_rho", r.mean_log_plus_rho},
          {"mean_log_rho", r.mean_log_rho},
          {"mean_rho_pow_kappa0", r.kappa0_check},
          {"mean_rho_pow_kappa0_log_plus_rho", r.kappa0_log_moment},
          {"moment_condition_holds", r.mkp_holds},
          {"rho_above_one_observed", r.c2_holds},
          {"non_arithmetic_assumed", r.c4_declared},
          {"sites_checked", 10000}};
}

}  // namespace

RunOutcome run(ExperimentConfig& config, const RunOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  std::filesystem::create_directories(options.out_dir);
  Context ctx{config, options.out_dir, json::object(), json::array(), {}};
  json summary = json::object();
  summary["experiment"] = config.experiment;
  summary["version"] = version();
  summary["seed"] = config.seed;
  summary["config"] = config.echo();
  RunOutcome outcome;

  static const std::map<std::string, std::function<void(Context&)>> table{
      {"walk", run_walk},   {"branching", run_branching}, {"lyapunov", run_lyapunov}, {"kappa", run_kappa},
      {"pi", run_pi},       {"lln", run_lln},             {"tails", run_tails},       {"tran", run_tran},
      {"collapse", run_collapse}, {"uz-check", run_uz},   {"nu-tail", run_nu_tail}};
  const auto it = table.find(config.experiment);
  if (it == table.end()) throw Error(ErrorKind::ConfigError, "unknown experiment '" + config.experiment + "'");
  try {
    summary["environment"] = env_json(config);
    it->second(ctx);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::ConfigError) throw;
    outcome.error = true;
    summary["error"] = {{"kind", std::string(to_string(e.kind()))}, {"message", e.what()}};
  }
  for (const auto& [key, value] : ctx.results.items()) summary[key] = value;
  summary["checks"] = ctx.checks;
  bool all = !outcome.error;
  for (const auto& c : ctx.checks) all = all && c["passed"].get<bool>();
  summary["all_passed"] = all;
  json files = json::array();
  for (const auto& f : ctx.files) files.push_back(f.filename().string());
  summary["files"] = files;
  // The only field that differs between identical runs.
  summary["wall_time_seconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  outcome.summary_file = options.out_dir / "summary.json";
  std::ofstream out(outcome.summary_file);
  out << summary.dump(2) << '\n';
  outcome.files = ctx.files;
  outcome.all_passed = all;
  return outcome;
}

}  // namespace rwre
