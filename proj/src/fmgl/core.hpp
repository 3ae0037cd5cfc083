#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

#include "fmgl/errors.hpp"

namespace fmgl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
// K matrices of equal shape, no invariants beyond that.
using MatrixSet = std::vector<Matrix>;

inline constexpr double kDefaultPerturbation = 1e-8;

/// Off-diagonal or diagonal entry position, stored with i <= j.
struct IndexPair {
  int i = 0;
  int j = 0;
  friend bool operator==(const IndexPair&, const IndexPair&) = default;
  friend auto operator<=>(const IndexPair&, const IndexPair&) = default;
};

/// Regularization weights for the l1 term (lambda1) and the sequential fused
/// term (lambda2). Both must be strictly positive unless the object is built
/// through independent(), which pins lambda2 to zero.
class PenaltyParams {
 public:
  PenaltyParams(double lambda1, double lambda2);

  /// lambda2 = 0: the K graphs decouple into separate graphical lasso problems.
  static PenaltyParams independent(double lambda1);

  double lambda1() const noexcept { return lambda1_; }
  double lambda2() const noexcept { return lambda2_; }
  bool is_independent() const noexcept { return independent_; }

 private:
  PenaltyParams(double lambda1, double lambda2, bool independent);

  double lambda1_;
  double lambda2_;
  bool independent_;
};

/// K sample covariance matrices of common size p. The constructor enforces
/// exact symmetry, finiteness and a strictly positive diagonal; use
/// validate_covariances() to repair raw input first.
class CovarianceSet {
 public:
  explicit CovarianceSet(MatrixSet matrices,
                         std::optional<long> sample_count = std::nullopt);

  int dim() const noexcept { return dim_; }
  int count() const noexcept { return static_cast<int>(matrices_.size()); }
  const Matrix& operator[](int k) const { return matrices_[static_cast<std::size_t>(k)]; }
  const MatrixSet& matrices() const noexcept { return matrices_; }
  std::optional<long> sample_count() const noexcept { return sample_count_; }

 private:
  MatrixSet matrices_;
  int dim_ = 0;
  std::optional<long> sample_count_;
};

/// K symmetric positive definite precision matrices.
class PrecisionSet {
 public:
  explicit PrecisionSet(MatrixSet matrices);

  int dim() const noexcept { return dim_; }
  int count() const noexcept { return static_cast<int>(matrices_.size()); }
  const Matrix& operator[](int k) const { return matrices_[static_cast<std::size_t>(k)]; }
  const MatrixSet& matrices() const noexcept { return matrices_; }

 private:
  MatrixSet matrices_;
  int dim_ = 0;
};

struct SolveReport {
  std::string solver;
  int outer_iterations = 0;
  std::vector<double> objective_trace;  // F at the initial point, then after each step
  std::vector<long> free_set_sizes;     // free pairs (i <= j) per outer iteration
  std::vector<double> step_sizes;       // accepted line-search steps
  std::vector<int> inner_iterations;    // NSPG iterations per outer iteration
  double kkt_residual = 0.0;
  double wall_time = 0.0;  // seconds
  bool converged = false;
  int block_count = 1;
  std::vector<int> block_sizes;
  std::vector<double> block_times;
  std::vector<std::string> warnings;
  std::string error;  // set when a solve aborted; the trace is then partial

  double final_objective() const {
    return objective_trace.empty() ? 0.0 : objective_trace.back();
  }
};

/// Symmetrizes each matrix, checks shapes and finiteness, and lifts any
/// non-positive diagonal entry by repeated additions of `perturbation`.
CovarianceSet validate_covariances(MatrixSet raw,
                                   double perturbation = kDefaultPerturbation,
                                   std::optional<long> sample_count = std::nullopt);

/// log det of an SPD matrix via its Cholesky factor; throws NotPositiveDefinite.
double log_det_spd(const Matrix& a);

/// -log det(theta) + tr(s theta).
double neg_log_likelihood(const Matrix& theta, const Matrix& s);

/// lambda1 sum_k sum_{i!=j} |theta_ij| + lambda2 sum_k sum_{i!=j} |theta^k_ij - theta^{k+1}_ij|
double penalty(const MatrixSet& theta, const PenaltyParams& params);
double penalty(const PrecisionSet& theta, const PenaltyParams& params);

double objective(const PrecisionSet& theta, const CovarianceSet& s,
                 const PenaltyParams& params);

/// Largest distance from zero to the subdifferential of the objective at theta,
/// taken entrywise over (i, j, k). Off-diagonal entries minimize over the
/// subgradient selections of the l1 and fused terms exactly.
double kkt_residual(const PrecisionSet& theta, const CovarianceSet& s,
                    const PenaltyParams& params);

/// Per-entry view of kkt_residual for one off-diagonal position.
double kkt_entry_residual(const PrecisionSet& theta, const CovarianceSet& s,
                          const MatrixSet& inverses, const PenaltyParams& params,
                          int i, int j);

/// Inverses of each theta^(k) via Cholesky.
MatrixSet spd_inverses(const PrecisionSet& theta);

void check_compatible(const PrecisionSet& theta, const CovarianceSet& s);

}  // namespace fmgl
