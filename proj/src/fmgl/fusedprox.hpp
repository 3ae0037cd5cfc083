#pragma once

#include <span>
#include <vector>

namespace fmgl {

/// One fused lasso signal approximator instance:
///   min_theta 1/2 sum_k (theta_k - g_k)^2 + alpha1 sum_k |theta_k|
///             + alpha2 sum_{k<K} |theta_k - theta_{k+1}|
struct ProxProblem {
  std::vector<double> g;
  double alpha1 = 0.0;
  double alpha2 = 0.0;
};

inline double soft_threshold(double x, double t) {
  if (x > t) return x - t;
  if (x < -t) return x + t;
  return 0.0;
}

/// Exact 1-D total-variation prox, argmin 1/2||theta - g||^2 + alpha2 TV(theta).
/// `out` must not alias `g`.
void tv_prox(std::span<const double> g, double alpha2, std::span<double> out);
std::vector<double> tv_prox(std::span<const double> g, double alpha2);

/// Joint prox: soft_threshold(tv_prox(g, alpha2), alpha1). `out` must not alias `g`.
void flsa(std::span<const double> g, double alpha1, double alpha2,
          std::span<double> out);
std::vector<double> flsa(const ProxProblem& problem);

double flsa_objective(const ProxProblem& problem, std::span<const double> theta);

/// Subgradient optimality residual of theta for `problem`; zero at the minimizer.
double flsa_residual(const ProxProblem& problem, std::span<const double> theta);

/// Smallest eps for which subgradients gamma_k of |theta_k| and upsilon_k of
/// |theta_k - theta_{k+1}| exist with
///   |c_k + a1 gamma_k + a2 (upsilon_k - upsilon_{k-1})| <= eps   for all k
/// (upsilon_0 = upsilon_K = 0). The feasible set of each upsilon_k given eps is
/// an interval that can be propagated along the chain, so the check is exact
/// and eps is located by bisection to machine resolution.
double min_subgradient_residual(std::span<const double> theta,
                                std::span<const double> c, double a1, double a2);

}  // namespace fmgl
