#include "fmgl/fusedprox.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>

#include "fmgl/errors.hpp"

namespace fmgl {

// Condat's direct algorithm for 1-D TV denoising. It scans left to right,
// maintaining the range [vmin, vmax] of admissible values for the current
// segment together with the partial dual bounds umin/umax, and emits a constant
// run whenever the tube constraint breaks on one side.
void tv_prox(std::span<const double> g, double alpha2, std::span<double> out) {
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(g.size());
  if (out.size() != g.size()) throw StructuralError("tv_prox: output size mismatch");
  if (n == 0) return;
  if (alpha2 <= 0.0) {
    std::copy(g.begin(), g.end(), out.begin());
    return;
  }
  const double lambda = alpha2;
  const double twolambda = 2.0 * lambda;
  const double minlambda = -lambda;

  std::ptrdiff_t k = 0, k0 = 0, kplus = 0, kminus = 0;
  double umin = lambda, umax = minlambda;
  double vmin = g[0] - lambda, vmax = g[0] + lambda;

  for (;;) {
    while (k == n - 1) {
      if (umin < 0.0) {
        do out[k0++] = vmin; while (k0 <= kminus);
        k = kminus = k0;
        vmin = g[k];
        umin = lambda;
        umax = vmin + umin - vmax;
      } else if (umax > 0.0) {
        do out[k0++] = vmax; while (k0 <= kplus);
        k = kplus = k0;
        vmax = g[k];
        umax = minlambda;
        umin = vmax + umax - vmin;
      } else {
        vmin += umin / static_cast<double>(k - k0 + 1);
        do out[k0++] = vmin; while (k0 <= k);
        return;
      }
    }
    if ((umin += g[k + 1] - vmin) < minlambda) {
      do out[k0++] = vmin; while (k0 <= kminus);
      k = kplus = kminus = k0;
      vmin = g[k];
      vmax = vmin + twolambda;
      umin = lambda;
      umax = minlambda;
    } else if ((umax += g[k + 1] - vmax) > lambda) {
      do out[k0++] = vmax; while (k0 <= kplus);
      k = kplus = kminus = k0;
      vmax = g[k];
      vmin = vmax - twolambda;
      umin = lambda;
      umax = minlambda;
    } else {
      ++k;
      if (umin >= lambda) {
        kminus = k;
        vmin += (umin - lambda) / static_cast<double>(kminus - k0 + 1);
        umin = lambda;
      }
      if (umax <= minlambda) {
        kplus = k;
        vmax += (umax + lambda) / static_cast<double>(kplus - k0 + 1);
        umax = minlambda;
      }
    }
  }
}

std::vector<double> tv_prox(std::span<const double> g, double alpha2) {
  std::vector<double> out(g.size());
  tv_prox(g, alpha2, out);
  return out;
}

void flsa(std::span<const double> g, double alpha1, double alpha2,
          std::span<double> out) {
  tv_prox(g, alpha2, out);
  for (double& v : out) v = soft_threshold(v, alpha1);
}

std::vector<double> flsa(const ProxProblem& problem) {
  if (problem.g.empty()) throw StructuralError("flsa: empty problem");
  if (!(problem.alpha1 >= 0.0) || !(problem.alpha2 >= 0.0))
    throw ParameterError("flsa: alphas must be nonnegative");
  std::vector<double> out(problem.g.size());
  flsa(problem.g, problem.alpha1, problem.alpha2, out);
  return out;
}

double flsa_objective(const ProxProblem& problem, std::span<const double> theta) {
  double value = 0.0;
  const std::size_t n = problem.g.size();
  for (std::size_t k = 0; k < n; ++k) {
    const double r = theta[k] - problem.g[k];
    value += 0.5 * r * r + problem.alpha1 * std::abs(theta[k]);
    if (k + 1 < n) value += problem.alpha2 * std::abs(theta[k] - theta[k + 1]);
  }
  return value;
}

namespace {

struct Interval {
  double lo;
  double hi;
};

// Subdifferential of |x| scaled by `scale`.
Interval scaled_sign_set(double x, double scale) {
  if (x > 0.0) return {scale, scale};
  if (x < 0.0) return {-scale, -scale};
  return {-scale, scale};
}

// v_k = a2 * upsilon_k. Constraint per k:
//   c_k + a1 gamma_k + v_k - v_{k-1} in [-eps, eps].
bool residual_feasible(std::span<const double> theta, std::span<const double> c,
                       double a1, double a2, double eps) {
  const std::size_t n = theta.size();
  Interval prev{0.0, 0.0};
  for (std::size_t k = 0; k < n; ++k) {
    const Interval gamma = scaled_sign_set(theta[k], a1);
    Interval reach{prev.lo - eps - c[k] - gamma.hi, prev.hi + eps - c[k] - gamma.lo};
    Interval allowed{0.0, 0.0};
    if (k + 1 < n) allowed = scaled_sign_set(theta[k] - theta[k + 1], a2);
    prev = {std::max(reach.lo, allowed.lo), std::min(reach.hi, allowed.hi)};
    if (prev.lo > prev.hi) return false;
  }
  return true;
}

}  // namespace

double min_subgradient_residual(std::span<const double> theta,
                                std::span<const double> c, double a1, double a2) {
  if (theta.size() != c.size())
    throw StructuralError("min_subgradient_residual: length mismatch");
  if (theta.empty()) return 0.0;
  if (residual_feasible(theta, c, a1, a2, 0.0)) return 0.0;
  double hi = 0.0;
  for (double v : c) hi = std::max(hi, std::abs(v));
  hi += a1 + 2.0 * a2;
  hi = hi * (1.0 + 1e-12) + std::numeric_limits<double>::min();
  double lo = 0.0;
  while (hi - lo > std::numeric_limits<double>::epsilon() * hi) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (residual_feasible(theta, c, a1, a2, mid))
      hi = mid;
    else
      lo = mid;
  }
  return hi;
}

double flsa_residual(const ProxProblem& problem, std::span<const double> theta) {
  if (theta.size() != problem.g.size())
    throw StructuralError("flsa_residual: length mismatch");
  std::vector<double> c(theta.size());
  for (std::size_t k = 0; k < c.size(); ++k) c[k] = theta[k] - problem.g[k];
  return min_subgradient_residual(theta, c, problem.alpha1, problem.alpha2);
}

}  // namespace fmgl
