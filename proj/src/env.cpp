#include "rwre/env.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>

namespace rwre {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidSpec: return "InvalidSpec";
    case ErrorKind::EllipticityViolation: return "EllipticityViolation";
    case ErrorKind::NumericalUnderflow: return "NumericalUnderflow";
    case ErrorKind::NotTransient: return "NotTransient";
    case ErrorKind::NoRootInRange: return "NoRootInRange";
    case ErrorKind::TruncationFailure: return "TruncationFailure";
    case ErrorKind::MaxStepsExceeded: return "MaxStepsExceeded";
    case ErrorKind::NonTermination: return "NonTermination";
    case ErrorKind::PopulationExplosion: return "PopulationExplosion";
    case ErrorKind::BlockTimeout: return "BlockTimeout";
    case ErrorKind::Undetermined: return "Undetermined";
    case ErrorKind::InsufficientTail: return "InsufficientTail";
    case ErrorKind::FormMismatch: return "FormMismatch";
    case ErrorKind::InfiniteMeanSuspected: return "InfiniteMeanSuspected";
    case ErrorKind::Unsupported: return "Unsupported";
    case ErrorKind::EmptySample: return "EmptySample";
    case ErrorKind::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

namespace {

constexpr double kNormTol = 1e-12;

std::string describe(const JumpProbs& p) {
  std::ostringstream os;
  os << "(";
  for (Eigen::Index i = 0; i < p.size(); ++i) os << (i ? ", " : "") << p(i);
  os << ")";
  return os.str();
}

// Gamma variates normalized to the simplex, rejected until elliptic.
JumpLaw draw_dirichlet(const EnvSpec& spec, rng::Stream& stream) {
  const Eigen::Index n = spec.concentration.size();
  JumpProbs g(n);
  for (int attempt = 0; attempt < 1'000'000; ++attempt) {
    for (Eigen::Index i = 0; i < n; ++i) g(i) = stream.gamma(spec.concentration(i));
    const double total = g.sum();
    if (!(total > 0.0)) continue;
    JumpProbs p = g / total;
    if (p(0) <= 0.0) continue;
    JumpLaw law(p);
    if (law.elliptic(spec.epsilon)) return law;
  }
  throw Error(ErrorKind::InvalidSpec, "Dirichlet rejection sampling never met the ellipticity bound");
}

}  // namespace

JumpLaw::JumpLaw(const JumpProbs& probs) : probs_(probs), cumulative_(probs.size()) {
  if (probs.size() < 2 || probs.size() > kMaxL + 1) {
    throw Error(ErrorKind::InvalidSpec, "jump law must have between 1 and kMaxL left jumps");
  }
  if (!probs.allFinite() || (probs < 0.0).any()) {
    throw Error(ErrorKind::InvalidSpec, "negative or non-finite probability " + describe(probs));
  }
  if (std::abs(probs.sum() - 1.0) > kNormTol) {
    throw Error(ErrorKind::InvalidSpec, "probabilities do not sum to one " + describe(probs));
  }
  if (!(probs(0) > 0.0)) {
    throw Error(ErrorKind::InvalidSpec, "up-probability must be positive " + describe(probs));
  }
  double acc = 0.0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    acc += probs(i);
    cumulative_(i) = acc;
  }
}

JumpLaw JumpLaw::from_vector(const std::vector<double>& probs, int L) {
  if (L < 1 || L > kMaxL) throw Error(ErrorKind::InvalidSpec, "L out of range");
  if (probs.size() > static_cast<std::size_t>(L) + 1) {
    throw Error(ErrorKind::InvalidSpec, "more jump probabilities than L allows");
  }
  JumpProbs p = JumpProbs::Zero(L + 1);
  for (std::size_t i = 0; i < probs.size(); ++i) p(static_cast<Eigen::Index>(i)) = probs[i];
  return JumpLaw(p);
}

JumpLaw JumpLaw::from_list(std::initializer_list<double> probs, int L) {
  return from_vector(std::vector<double>(probs), L);
}

double JumpLaw::prob(int z) const {
  if (z == 1) return up();
  if (z < 0 && -z <= L()) return down(-z);
  return 0.0;
}

double JumpLaw::drift() const {
  double d = up();
  for (int l = 1; l <= L(); ++l) d -= l * down(l);
  return d;
}

bool JumpLaw::elliptic(double eps) const {
  for (int l = 1; l <= L(); ++l) {
    if (down(l) / up() < eps) return false;
  }
  return true;
}

EnvSpec EnvSpec::constant(const JumpLaw& law, double epsilon) {
  EnvSpec s;
  s.kind = Kind::Constant;
  s.L = law.L();
  s.epsilon = epsilon;
  s.atoms = {Atom{law, 1.0}};
  return s;
}

EnvSpec EnvSpec::finite(std::vector<Atom> atoms, double epsilon) {
  EnvSpec s;
  s.kind = Kind::FiniteSupport;
  s.L = atoms.empty() ? 1 : atoms.front().law.L();
  s.epsilon = epsilon;
  s.atoms = std::move(atoms);
  return s;
}

EnvSpec EnvSpec::dirichlet(const JumpProbs& concentration, double epsilon) {
  EnvSpec s;
  s.kind = Kind::Dirichlet;
  s.L = static_cast<int>(concentration.size()) - 1;
  s.epsilon = epsilon;
  s.concentration = concentration;
  return s;
}

void EnvSpec::validate() const {
  if (L < 1 || L > kMaxL) throw Error(ErrorKind::InvalidSpec, "L out of range");
  if (!(epsilon >= 0.0)) throw Error(ErrorKind::InvalidSpec, "epsilon must be nonnegative");
  switch (kind) {
    case Kind::Constant:
    case Kind::FiniteSupport: {
      if (atoms.empty()) throw Error(ErrorKind::InvalidSpec, "no atoms");
      if (kind == Kind::Constant && atoms.size() != 1) {
        throw Error(ErrorKind::InvalidSpec, "constant environment takes exactly one atom");
      }
      double total = 0.0;
      for (const Atom& a : atoms) {
        if (a.law.L() != L) throw Error(ErrorKind::InvalidSpec, "atom L differs from environment L");
        if (!(a.weight >= 0.0) || !std::isfinite(a.weight)) {
          throw Error(ErrorKind::InvalidSpec, "negative atom weight");
        }
        if (!a.law.elliptic(epsilon)) {
          throw Error(ErrorKind::EllipticityViolation,
                      "atom " + describe(a.law.probs()) + " has w(z)/w(+1) below epsilon");
        }
        total += a.weight;
      }
      if (std::abs(total - 1.0) > kNormTol) throw Error(ErrorKind::InvalidSpec, "weights do not sum to one");
      break;
    }
    case Kind::Dirichlet:
      if (concentration.size() != L + 1 || !(concentration > 0.0).all() || !concentration.allFinite()) {
        throw Error(ErrorKind::InvalidSpec, "Dirichlet concentration needs L+1 positive entries");
      }
      break;
  }
}

EnvWindow::EnvWindow(EnvSpec spec, std::uint64_t seed) : spec_(std::move(spec)), seed_(seed) {
  spec_.validate();
}

EnvWindow EnvWindow::replica(const EnvSpec& spec, std::uint64_t master_seed, std::uint64_t replica_id) {
  return EnvWindow(spec, rng::derive_key(master_seed, rng::Domain::Replica, replica_id));
}

JumpLaw sample_law(const EnvSpec& spec, rng::Stream& stream) {
  switch (spec.kind) {
    case EnvSpec::Kind::Constant:
      return spec.atoms.front().law;
    case EnvSpec::Kind::FiniteSupport: {
      double u = stream.uniform();
      for (const Atom& a : spec.atoms) {
        if (u < a.weight) return a.law;
        u -= a.weight;
      }
      return spec.atoms.back().law;
    }
    case EnvSpec::Kind::Dirichlet:
      return draw_dirichlet(spec, stream);
  }
  return spec.atoms.front().law;
}

JumpLaw EnvWindow::draw_site(std::int64_t x) const {
  if (spec_.kind == EnvSpec::Kind::Constant) return spec_.atoms.front().law;
  rng::Stream stream(seed_, rng::Domain::Site, static_cast<std::uint64_t>(x));
  return sample_law(spec_, stream);
}

void EnvWindow::extend_to(std::int64_t x) {
  if (x >= 0) {
    while (static_cast<std::int64_t>(right_.size()) <= x) {
      right_.push_back(draw_site(static_cast<std::int64_t>(right_.size())));
    }
  } else {
    const std::int64_t idx = -x - 1;
    while (static_cast<std::int64_t>(left_.size()) <= idx) {
      left_.push_back(draw_site(-static_cast<std::int64_t>(left_.size()) - 1));
    }
  }
}

const JumpLaw& EnvWindow::site_law(std::int64_t x) {
  if (spec_.kind == EnvSpec::Kind::Constant) return spec_.atoms.front().law;
  extend_to(x);
  return x >= 0 ? right_[static_cast<std::size_t>(x)] : left_[static_cast<std::size_t>(-x - 1)];
}

EnvWindow make_env(EnvSpec spec, std::uint64_t seed) { return EnvWindow(std::move(spec), seed); }

RhoStats condition_report(const EnvWindow& env, std::int64_t n_sites, double kappa0) {
  if (n_sites < 1) throw Error(ErrorKind::InvalidSpec, "condition_report needs n_sites >= 1");
  RhoStats out;
  out.kappa0 = kappa0;
  out.rho_samples.reserve(static_cast<std::size_t>(n_sites));
  std::int64_t above = 0;
  double log_plus = 0.0, log_sum = 0.0, moment = 0.0, log_moment = 0.0;
  for (std::int64_t x = 0; x < n_sites; ++x) {
    const double r = env.draw_site(x).rho();
    out.rho_samples.push_back(r);
    if (r > 1.0) ++above;
    const double lp = r > 1.0 ? std::log(r) : 0.0;
    log_plus += lp;
    log_sum += std::log(r);
    const double rk = std::pow(r, kappa0);
    moment += rk;
    log_moment += rk * lp;
  }
  const double n = static_cast<double>(n_sites);
  out.p_rho_gt_1 = above / n;
  out.p_rho_gt_1_se = std::sqrt(out.p_rho_gt_1 * (1.0 - out.p_rho_gt_1) / n);
  out.mean_log_plus_rho = log_plus / n;
  out.mean_log_rho = log_sum / n;
  out.kappa0_check = moment / n;
  out.kappa0_log_moment = log_moment / n;
  out.mkp_holds = out.kappa0_check > 1.0;
  out.c2_holds = above > 0;
  out.c4_declared = env.spec().assume_c4;
  return out;
}

}  // namespace rwre
