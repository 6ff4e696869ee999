#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "rwre/env.hpp"
#include "rwre/error.hpp"

namespace rwre::testing {

// Kind of the rwre::Error thrown by fn, if any.
inline std::optional<ErrorKind> error_kind(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  return std::nullopt;
}

inline JumpLaw law(std::initializer_list<double> probs, int L) { return JumpLaw::from_list(probs, L); }

inline EnvSpec constant_env(std::initializer_list<double> probs, int L) { return EnvSpec::constant(law(probs, L)); }

inline EnvSpec two_point(std::initializer_list<double> a, std::initializer_list<double> b, int L) {
  return EnvSpec::finite({Atom{law(a, L), 0.5}, Atom{law(b, L), 0.5}});
}

// Every site steps up with probability one.
inline EnvSpec always_up(int L) { return EnvSpec::constant(JumpLaw::from_list({1.0}, L), 0.0); }

// Scalar environment with rho taking the given values equally often.
inline EnvSpec scalar_rho(double rho_a, double rho_b) {
  return two_point({1.0 / (1.0 + rho_a), rho_a / (1.0 + rho_a)}, {1.0 / (1.0 + rho_b), rho_b / (1.0 + rho_b)}, 1);
}

// Root of f on [lo, hi] by plain bisection; f(lo) and f(hi) differ in sign.
inline double bisect(const std::function<double(double)>& f, double lo, double hi) {
  double flo = f(lo);
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    const double fm = f(mid);
    if ((fm < 0) == (flo < 0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

// Spectral radius by power iteration on a nonnegative matrix.
inline double power_iteration(const Eigen::MatrixXd& m) {
  Eigen::VectorXd v = Eigen::VectorXd::Ones(m.rows());
  double lambda = 0.0;
  for (int i = 0; i < 100000; ++i) {
    Eigen::VectorXd w = m * v;
    const double next = w.norm() / v.norm();
    v = w / w.norm();
    if (std::abs(next - lambda) < 1e-15 * next) return next;
    lambda = next;
  }
  return lambda;
}

// Sum over an i.i.d. sample.
inline double mean(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

inline double std_error(const std::vector<double>& x) {
  const double m = mean(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return std::sqrt(s / static_cast<double>(x.size() - 1) / static_cast<double>(x.size()));
}

}  // namespace rwre::testing
