#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "rwre/env.hpp"

namespace rwre {

// Dense L x L types with a compile-time capacity so products never allocate.
template <typename Scalar>
using LMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, kMaxL, kMaxL>;
template <typename Scalar>
using LRow = Eigen::Matrix<Scalar, 1, Eigen::Dynamic, Eigen::RowMajor, 1, kMaxL>;
template <typename Scalar>
using LCol = Eigen::Matrix<Scalar, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxL, 1>;

using LMatrixd = LMatrix<double>;
using LRowd = LRow<double>;
using LCold = LCol<double>;

// ---------------------------------------------------------------------------
// Offspring-mean matrices. Row index = parent type, column index = child type.

/// Row 1 is (b(1), ..., b(L)) with b(l) = w(-l)/w(+1); row l >= 2 is row 1
/// plus the unit vector e_{l-1}.
template <typename Scalar = double>
LMatrix<Scalar> build_M(const JumpLaw& law) {
  const int L = law.L();
  LMatrix<Scalar> m(L, L);
  for (int j = 0; j < L; ++j) m.col(j).setConstant(static_cast<Scalar>(law.down(j + 1)) / static_cast<Scalar>(law.up()));
  for (int l = 1; l < L; ++l) m(l, l - 1) += Scalar(1);
  return m;
}

/// Companion form: first row a(l) = (w(-l) + ... + w(-L))/w(+1), ones on the
/// subdiagonal.
template <typename Scalar = double>
LMatrix<Scalar> build_Mbar(const JumpLaw& law) {
  const int L = law.L();
  LMatrix<Scalar> m = LMatrix<Scalar>::Zero(L, L);
  Scalar tail(0);
  for (int l = L; l >= 1; --l) {
    tail += static_cast<Scalar>(law.down(l));
    m(0, l - 1) = tail / static_cast<Scalar>(law.up());
  }
  for (int l = 1; l < L; ++l) m(l, l - 1) = Scalar(1);
  return m;
}

// ---------------------------------------------------------------------------
// Fixed vectors and the similarity transform.

/// x0 = (2, 1, ..., 1)^T: converts crossing counts into time steps.
template <typename Scalar = double>
LCol<Scalar> x0(int L) {
  LCol<Scalar> v = LCol<Scalar>::Ones(L);
  v(0) = Scalar(2);
  return v;
}

/// xbar0 = (2, -1, 0, ..., 0)^T = B^{-1} x0.
template <typename Scalar = double>
LCol<Scalar> xbar0(int L) {
  LCol<Scalar> v = LCol<Scalar>::Zero(L);
  v(0) = Scalar(2);
  if (L > 1) v(1) = Scalar(-1);
  return v;
}

/// Unit row vector e_l, 1-based.
template <typename Scalar = double>
LRow<Scalar> unit_row(int l, int L) {
  LRow<Scalar> v = LRow<Scalar>::Zero(L);
  v(l - 1) = Scalar(1);
  return v;
}

template <typename Scalar = double>
LRow<Scalar> e0(int L) {
  return LRow<Scalar>::Constant(L, Scalar(1) / Scalar(L));
}

template <typename Scalar = double>
LRow<Scalar> ones_row(int L) {
  return LRow<Scalar>::Ones(L);
}

/// Lower-triangular all-ones matrix.
template <typename Scalar = double>
LMatrix<Scalar> similarity_B(int L) {
  LMatrix<Scalar> b = LMatrix<Scalar>::Zero(L, L);
  for (int i = 0; i < L; ++i) b.row(i).head(i + 1).setOnes();
  return b;
}

/// Inverse of similarity_B: ones on the diagonal, -1 on the subdiagonal.
template <typename Scalar = double>
LMatrix<Scalar> similarity_B_inv(int L) {
  LMatrix<Scalar> b = LMatrix<Scalar>::Identity(L, L);
  for (int i = 1; i < L; ++i) b(i, i - 1) = Scalar(-1);
  return b;
}

/// B B^{-1} = I and B^{-1} x0 = xbar0 in integer arithmetic. Checked once per
/// process by the CLI and by the unit tests.
bool verify_fixed_vectors(int L);

// ---------------------------------------------------------------------------
// Norms. |x| is the l1 norm; ||M|| = max_{|x|=1} |xM| over row vectors is the
// largest absolute row sum; ||M||_c = max_{|y|=1} |My| over column vectors is
// the largest absolute column sum.

template <typename Derived>
typename Derived::RealScalar l1(const Eigen::MatrixBase<Derived>& x) {
  return x.cwiseAbs().sum();
}

template <typename Derived>
typename Derived::RealScalar row_norm(const Eigen::MatrixBase<Derived>& m) {
  return m.cwiseAbs().rowwise().sum().maxCoeff();
}

template <typename Derived>
typename Derived::RealScalar column_norm(const Eigen::MatrixBase<Derived>& m) {
  return m.cwiseAbs().colwise().sum().maxCoeff();
}

enum class Norm { Row, Column };
enum class Side { Forward, Backward };
enum class Family { M, Mbar };

const char* to_string(Norm n);
const char* to_string(Side s);
const char* to_string(Family f);

template <typename Derived>
typename Derived::RealScalar matrix_norm(const Eigen::MatrixBase<Derived>& m, Norm norm) {
  return norm == Norm::Row ? row_norm(m) : column_norm(m);
}

template <typename Scalar = double>
LMatrix<Scalar> build(const JumpLaw& law, Family family) {
  return family == Family::M ? build_M<Scalar>(law) : build_Mbar<Scalar>(law);
}

// ---------------------------------------------------------------------------
// Top Lyapunov exponent.

struct LyapunovEstimate {
  double gamma_hat = 0.0;
  double std_err = 0.0;
  std::int64_t n_steps = 0;
  int n_replicas = 0;
  Norm norm_used = Norm::Column;
  Side side = Side::Forward;
  Family family = Family::M;
  std::vector<double> per_replica;
};

/// (1/n) log ||product|| for one quenched window. Forward multiplies
/// M_{n-1} ... M_0 over sites 0..n-1, backward M_0 M_{-1} ... M_{-n+1}.
/// The running product is renormalized after every multiplication.
double lyapunov_path(const EnvWindow& env, std::int64_t n_steps, Norm norm, Side side, Family family);

/// Mean and standard error over independent replica windows.
LyapunovEstimate lyapunov(const EnvSpec& spec, std::uint64_t seed, std::int64_t n_steps, int n_replicas,
                          Norm norm, Side side, Family family = Family::M, int workers = 1);

struct FourWayReport {
  // (M, column, forward), (Mbar, column, forward), (M, row, backward), (Mbar, row, backward)
  std::vector<LyapunovEstimate> estimates;
  double max_pairwise_z = 0.0;  // |difference| / combined standard error
  double max_pairwise_gap = 0.0;
  bool consistent = false;      // every pair within 3 combined standard errors
};

FourWayReport lyapunov_four_way(const EnvSpec& spec, std::uint64_t seed, std::int64_t n_steps, int n_replicas,
                                int workers = 1);

// ---------------------------------------------------------------------------
// Moment Lyapunov function log rho(alpha) = lim (1/n) log E ||M_0 ... M_{-n+1}||^alpha.

enum class MomentEstimator {
  // (1/n) log of the replica mean of ||product||^alpha, log-sum-exp stabilized.
  Direct,
  // Population dynamics: N directions are pushed through fresh matrices,
  // weighted by the alpha-th power of their growth and resampled.
  Cloning,
};

struct MomentOptions {
  MomentEstimator estimator = MomentEstimator::Cloning;
  std::int64_t n_steps = 200;
  std::int64_t burn_in = 20;      // cloning only
  int population = 2000;          // cloning only
  int n_replicas = 8;             // independent populations (cloning) or products (direct)
  bool bias_check = true;         // n vs 2n agreement within 2 sigma
  std::int64_t max_steps = 20000;
  double ess_threshold = 0.05;    // fraction of samples
  int workers = 1;
};

struct MomentPoint {
  double alpha = 0.0;
  double lambda_hat = 0.0;
  double std_err = 0.0;
  double ess_fraction = 1.0;
};

struct MomentLyapunov {
  std::vector<double> alpha_grid;
  std::vector<double> lambda_hat;
  std::vector<double> lambda_se;
  std::int64_t n_used = 0;
  bool bias_check_passed = true;
  int convexity_violations = 0;
  bool heavy_tail_warning = false;
  double min_ess_fraction = 1.0;
  double gamma_hat = 0.0;
  double gamma_se = 0.0;
  std::optional<double> kappa_hat;
  double kappa_se = 0.0;
  double kappa_ci_low = 0.0;
  double kappa_ci_high = 0.0;
};

/// One grid point at fixed n, common random numbers across alpha.
MomentPoint moment_lyapunov_point(const EnvSpec& spec, std::uint64_t seed, double alpha, std::int64_t n_steps,
                                  const MomentOptions& options);

MomentLyapunov moment_lyapunov(const EnvSpec& spec, std::uint64_t seed, const std::vector<double>& alpha_grid,
                               const MomentOptions& options);

struct KappaConfig {
  double kappa0 = 3.0;
  std::vector<double> alpha_grid;  // empty: 12 evenly spaced points in (0, kappa0]
  double tolerance = 1e-3;
  MomentOptions moment;
  std::int64_t lyapunov_steps = 20000;
  int lyapunov_replicas = 16;
};

/// Root of alpha -> lambda(alpha) in (0, kappa0]. Throws NotTransient when
/// the estimated top exponent is nonnegative and NoRootInRange when
/// lambda(kappa0) < 0.
MomentLyapunov solve_kappa(const EnvSpec& spec, std::uint64_t seed, const KappaConfig& config);

// ---------------------------------------------------------------------------
// Tail series x eta_{-k} x0 = sum_{m>k} x M_{-k} ... M_{-m+1} x0.

struct SeriesOptions {
  double tol = 1e-10;
  int patience = 20;
  std::int64_t max_n = 100000;
  double abs_floor = 1e-300;
};

/// Truncation rule for series of possibly mixed-sign terms: stop once
/// `patience` consecutive terms fall below tol x |running sum| (or abs_floor)
/// and the geometric remainder extrapolated from the last `patience` terms
/// is below the same scale.
class SeriesTruncation {
 public:
  explicit SeriesTruncation(const SeriesOptions& options);

  /// Adds the next term; returns true once the series may be truncated.
  bool add(double term);

  double sum() const { return sum_; }
  std::int64_t terms() const { return terms_; }
  double tail_bound() const { return tail_bound_; }
  /// True when max_n terms were used or the sum stopped being finite.
  bool exhausted() const { return terms_ >= options_.max_n || !std::isfinite(sum_); }

 private:
  SeriesOptions options_;
  int patience_;
  std::vector<double> recent_;
  double sum_ = 0.0;
  std::int64_t terms_ = 0;
  int quiet_ = 0;
  double tail_bound_ = 0.0;
};

struct TailSeriesSample {
  double value = 0.0;
  LRowd direction_x;
  std::int64_t truncation_n = 0;
  double truncation_tail_bound = 0.0;
};

/// Generic truncated series sum_{n>=1} x F_{start} F_{start-1} ... F_{start-n+1} y,
/// F = M or Mbar of the window's sites. Terms may have mixed sign.
TailSeriesSample product_series(EnvWindow& env, const LRowd& x, const LCold& y, Family family,
                                std::int64_t start_site, const SeriesOptions& options);

/// sum_{n>=1} x F_{start+n-1} ... F_{start+1} F_{start} y: products grow to
/// the left over increasing sites.
TailSeriesSample column_series(EnvWindow& env, const LRowd& x, const LCold& y, Family family,
                               std::int64_t start_site, const SeriesOptions& options);

/// Requires x >= 0, |x| > 0. Throws TruncationFailure if terms do not decay
/// within max_n.
TailSeriesSample tail_series_sample(EnvWindow& env, const LRowd& x, const SeriesOptions& options,
                                    std::int64_t start_site = 0);

struct TranReport {
  int l = 2;
  bool deterministic = false;
  double ks_statistic = 0.0;
  double p_value = 1.0;
  // Part (ii): e_l Mbar-series xbar0 against (l == 2 ? 2 : 1) + e_1 Mbar-series xbar0.
  double ks_statistic_bar = 0.0;
  double p_value_bar = 1.0;
  double exact_lhs = 0.0;  // deterministic environments only
  double exact_rhs = 0.0;
  // Pathwise form on the left-hand windows: e_l eta_0 x0 against
  // l + sum_{k<l} e_1 eta_{-k} x0 (largest relative error over samples).
  double shifted_sum_max_error = 0.0;
  std::vector<double> lhs_samples;
  std::vector<double> rhs_samples;
};

/// Compares e_l eta_0 x0 with l + l e_1 eta_0 x0 in law (independent windows
/// on each side). Deterministic environments are compared exactly.
TranReport prop_tran_check(const EnvSpec& spec, std::uint64_t seed, int l, int n_samples,
                           const SeriesOptions& options = {}, int workers = 1);

}  // namespace rwre
