#pragma once

#include <optional>

#include "fmgl/core.hpp"
#include "fmgl/newton.hpp"

namespace fmgl {

struct AdmmConfig {
  double rho = 1.0;
  int max_iters = 2000;
  /// Stop as soon as F(Z) <= target (comparison protocol against a Newton run).
  /// When set, the residual tolerances below are not used.
  std::optional<double> target_objective;
  double primal_tol = 1e-6;  // ||Theta - Z||_F over all k
  double dual_tol = 1e-6;    // rho ||Z_r - Z_{r-1}||_F over all k

  void validate() const;
};

/// (lambda + sqrt(lambda^2 + 4 rho)) / (2 rho): eigenvalue map of the
/// log-det proximal step. Strictly positive for every finite lambda.
double logdet_prox_eigenvalue(double lambda, double rho);

/// argmin_Theta -log det Theta + tr(S Theta) + rho/2 ||Theta - (Z - U)||_F^2.
Matrix admm_theta_update(const Matrix& s, const Matrix& z_minus_u, double rho);

/// Standard two-block ADMM (Theta = Z). Returns Z, symmetrized; the report
/// trace holds F(Z) per iteration where Z is positive definite.
Solution admm_solve(const CovarianceSet& s, const PenaltyParams& params,
                    const AdmmConfig& config, SolveReport* partial = nullptr);

}  // namespace fmgl
