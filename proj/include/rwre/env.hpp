#pragma once

#include <cstdint>
#include <initializer_list>
#include <vector>

#include <Eigen/Core>

#include "rwre/error.hpp"
#include "rwre/rng.hpp"

namespace rwre {

// Largest supported left jump. Small fixed capacity keeps every per-site
// object on the stack.
inline constexpr int kMaxL = 8;

// Probabilities ordered as (w(+1), w(-1), w(-2), ..., w(-L)).
using JumpProbs = Eigen::Array<double, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxL + 1, 1>;

/// Transition probabilities of a single site over {-L, ..., -1, +1}.
class JumpLaw {
 public:
  JumpLaw() = default;

  /// Throws InvalidSpec unless the entries are nonnegative, sum to one within
  /// 1e-12 and the up-probability is positive.
  explicit JumpLaw(const JumpProbs& probs);

  /// `probs` lists w(+1), w(-1), ...; missing left jumps up to `L` are zero.
  static JumpLaw from_list(std::initializer_list<double> probs, int L);
  static JumpLaw from_vector(const std::vector<double>& probs, int L);

  int L() const { return static_cast<int>(probs_.size()) - 1; }
  double up() const { return probs_(0); }
  double down(int l) const { return probs_(l); }
  /// Probability of jump z, z in {-L, ..., -1, +1}; zero elsewhere.
  double prob(int z) const;
  double rho() const { return (1.0 - up()) / up(); }
  /// Local drift sum_z z w(z).
  double drift() const;
  const JumpProbs& probs() const { return probs_; }

  /// min_z w(z)/w(+1) >= eps.
  bool elliptic(double eps) const;

  /// Draws a jump z in {-L, ..., -1, +1}.
  int sample_jump(rng::Stream& rng) const {
    const double u = rng.uniform();
    for (int j = 0; j < L(); ++j) {
      if (u < cumulative_(j)) return j == 0 ? 1 : -j;
    }
    return L() == 0 ? 1 : -L();
  }

  friend bool operator==(const JumpLaw& a, const JumpLaw& b) {
    return a.probs_.size() == b.probs_.size() && (a.probs_ == b.probs_).all();
  }

 private:
  JumpProbs probs_;
  JumpProbs cumulative_;
};

struct Atom {
  JumpLaw law;
  double weight = 1.0;
};

/// Law of one site: a point mass, a finite mixture of atoms, or a Dirichlet
/// law over the simplex filtered by ellipticity.
struct EnvSpec {
  enum class Kind { Constant, FiniteSupport, Dirichlet };

  Kind kind = Kind::Constant;
  int L = 1;
  // Ellipticity bound w(z)/w(+1) >= epsilon; 0 admits degenerate laws such
  // as w(+1) = 1.
  double epsilon = 1e-3;
  std::vector<Atom> atoms;
  JumpProbs concentration;
  // Moment exponent used by the Condition C report.
  double kappa0 = 3.0;
  // Non-arithmeticity of log of the top eigenvalue; declared, never checked.
  bool assume_c4 = true;

  static EnvSpec constant(const JumpLaw& law, double epsilon = 1e-3);
  static EnvSpec finite(std::vector<Atom> atoms, double epsilon = 1e-3);
  static EnvSpec dirichlet(const JumpProbs& concentration, double epsilon = 1e-3);

  /// Throws InvalidSpec or EllipticityViolation.
  void validate() const;
  bool is_deterministic() const { return kind == Kind::Constant; }
};

/// Quenched environment on Z. The law at site x is a pure function of
/// (seed, x); the window caches a contiguous block of realized sites and
/// grows it on demand in both directions.
class EnvWindow {
 public:
  EnvWindow(EnvSpec spec, std::uint64_t seed);

  /// Independent window for replica `replica_id` of an experiment.
  static EnvWindow replica(const EnvSpec& spec, std::uint64_t master_seed, std::uint64_t replica_id);

  /// Cached lookup. The reference is valid until the next call that extends
  /// the window.
  const JumpLaw& site_law(std::int64_t x);

  /// Uncached draw of the same law site_law(x) returns.
  JumpLaw draw_site(std::int64_t x) const;

  const EnvSpec& spec() const { return spec_; }
  std::uint64_t seed() const { return seed_; }
  int L() const { return spec_.L; }

  /// Number of sites currently realized in the cache.
  std::size_t realized() const { return right_.size() + left_.size(); }

 private:
  void extend_to(std::int64_t x);

  EnvSpec spec_;
  std::uint64_t seed_;
  std::vector<JumpLaw> right_;  // x = 0, 1, 2, ...
  std::vector<JumpLaw> left_;   // x = -1, -2, ...
};

EnvWindow make_env(EnvSpec spec, std::uint64_t seed);

/// One draw from the site law of `spec` using `stream`. Annealed samplers
/// that need a fresh site per use (rather than a fixed window) call this.
JumpLaw sample_law(const EnvSpec& spec, rng::Stream& stream);

/// Empirical checks of Condition C over sites 0..n_sites-1.
struct RhoStats {
  std::vector<double> rho_samples;
  double p_rho_gt_1 = 0.0;
  double p_rho_gt_1_se = 0.0;
  double mean_log_plus_rho = 0.0;  // (C1)
  double mean_log_rho = 0.0;
  double kappa0 = 0.0;
  double kappa0_check = 0.0;       // empirical E rho^kappa0
  double kappa0_log_moment = 0.0;  // (C3): E rho^kappa0 log+ rho
  bool mkp_holds = false;          // E rho^kappa0 > 1
  bool c2_holds = false;           // P(rho > 1) > 0 empirically
  bool c4_declared = false;        // taken from the spec, never verified
};

RhoStats condition_report(const EnvWindow& env, std::int64_t n_sites, double kappa0);

}  // namespace rwre
