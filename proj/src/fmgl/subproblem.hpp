#pragma once

#include <vector>

#include "fmgl/core.hpp"

namespace fmgl {

struct NspgConfig {
  double tol = 1e-6;      // relative change max_k|dTheta|_max / max_k|Theta|_max
  int max_iters = 500;
  int history_len = 10;   // nonmonotone reference window
  double step_min = 1e-12;
  double step_max = 1e12;
  double sufficient_decrease = 1e-4;

  void validate() const;
};

/// Local model of the objective around theta_ref:
///   Q(Theta) = sum_k [ 1/2 tr(W D W D) + tr((S - W) D) + f_k(theta_ref) ] + P(Theta),
/// D = Theta - theta_ref, W = theta_ref^{-1}. The Hessian W (x) W is applied as
/// D -> W D W and never formed. Only entries in the free set may move; every
/// other entry stays at its theta_ref value.
class QuadraticModel {
 public:
  /// `s` must outlive the model. `free_set` holds pairs with i <= j.
  QuadraticModel(PrecisionSet theta_ref, MatrixSet w, const CovarianceSet& s,
                 PenaltyParams params, std::vector<IndexPair> free_set);

  const PrecisionSet& theta_ref() const noexcept { return theta_ref_; }
  const MatrixSet& w() const noexcept { return w_; }
  const CovarianceSet& s() const noexcept { return *s_; }
  const PenaltyParams& params() const noexcept { return params_; }
  const std::vector<IndexPair>& free_set() const noexcept { return free_set_; }
  /// S^(k) - W^(k), the gradient of the smooth part at theta_ref.
  const MatrixSet& base_gradient() const noexcept { return base_gradient_; }
  /// sum_k f_k(theta_ref).
  double smooth_value() const noexcept { return smooth_value_; }
  int dim() const noexcept { return theta_ref_.dim(); }
  int count() const noexcept { return theta_ref_.count(); }
  std::vector<char> free_mask() const;  // p*p, column major, symmetric

 private:
  PrecisionSet theta_ref_;
  MatrixSet w_;
  const CovarianceSet* s_;
  PenaltyParams params_;
  std::vector<IndexPair> free_set_;
  MatrixSet base_gradient_;
  double smooth_value_ = 0.0;
};

/// Q_t at theta (dense evaluation, includes the penalty).
double model_objective(const QuadraticModel& model, const MatrixSet& theta);

/// W (Theta - theta_ref) W + S - W, zeroed outside the free set.
MatrixSet smooth_gradient(const QuadraticModel& model, const MatrixSet& theta);

/// Proximal gradient map with step `step`: free off-diagonal entries go through
/// the fused prox with (step lambda1, step lambda2), free diagonal entries take
/// a plain gradient step, all other entries are returned unchanged.
MatrixSet prox_map(const MatrixSet& theta, const MatrixSet& grad, double step,
                   const QuadraticModel& model);

struct NspgResult {
  MatrixSet theta;  // symmetric, not necessarily positive definite
  int iterations = 0;
  bool converged = false;
  double model_value = 0.0;
};

/// Nonmonotone spectral proximal gradient on Q_t, started at theta_ref.
/// Barzilai-Borwein steps, acceptance against the max of the last
/// history_len model values.
NspgResult nspg_solve(const QuadraticModel& model, const NspgConfig& config);

}  // namespace fmgl
