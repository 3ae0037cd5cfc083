#include "fmgl/admm.hpp"

#include <chrono>
#include <cmath>
#include <limits>

#include "fmgl/fusedprox.hpp"

namespace fmgl {

void AdmmConfig::validate() const {
  if (!(rho > 0.0) || !std::isfinite(rho)) throw ParameterError("admm: rho must be positive");
  if (max_iters < 1) throw ParameterError("admm: max_iters must be at least 1");
  if (!(primal_tol > 0.0) || !(dual_tol > 0.0))
    throw ParameterError("admm: tolerances must be positive");
}

double logdet_prox_eigenvalue(double lambda, double rho) {
  // For very negative lambda the textbook form cancels; use the conjugate.
  const double root = std::sqrt(lambda * lambda + 4.0 * rho);
  if (lambda >= 0.0) return (lambda + root) / (2.0 * rho);
  return 2.0 / (root - lambda);
}

Matrix admm_theta_update(const Matrix& s, const Matrix& z_minus_u, double rho) {
  const Matrix a = rho * z_minus_u - s;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(a);
  if (eig.info() != Eigen::Success) throw NumericalError("admm: eigendecomposition failed");
  Vector mapped = eig.eigenvalues();
  for (Eigen::Index i = 0; i < mapped.size(); ++i)
    mapped[i] = logdet_prox_eigenvalue(mapped[i], rho);
  const Matrix& q = eig.eigenvectors();
  Matrix theta = q * mapped.asDiagonal() * q.transpose();
  return 0.5 * (theta + theta.transpose());
}

namespace {

// F(Z) or +inf when some Z^(k) is not positive definite.
double objective_or_inf(const MatrixSet& z, const CovarianceSet& s, const PenaltyParams& params) {
  double value = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k) {
    Eigen::LLT<Matrix> llt(z[k]);
    if (llt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
    const Matrix& l = llt.matrixLLT();
    double log_det = 0.0;
    for (Eigen::Index i = 0; i < l.rows(); ++i) log_det += std::log(l(i, i));
    value += -2.0 * log_det + s[static_cast<int>(k)].cwiseProduct(z[k]).sum();
  }
  return value + penalty(z, params);
}

}  // namespace

Solution admm_solve(const CovarianceSet& s, const PenaltyParams& params,
                    const AdmmConfig& config, SolveReport* partial) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  const int p = s.dim();
  const int kk = s.count();
  const double rho = config.rho;
  SolveReport report;
  report.solver = "admm";
  report.block_sizes = {p};
  try {
    MatrixSet theta = diagonal_start(s);
    MatrixSet z = theta;
    MatrixSet u(static_cast<std::size_t>(kk), Matrix::Zero(p, p));
    MatrixSet best_z = z;
    double best_f = objective_or_inf(z, s, params);
    report.objective_trace.push_back(best_f);

    std::vector<double> in(static_cast<std::size_t>(kk)), out(static_cast<std::size_t>(kk));
    const double a1 = params.lambda1() / rho;
    const double a2 = params.lambda2() / rho;

    for (int it = 1; it <= config.max_iters; ++it) {
      for (int k = 0; k < kk; ++k) {
        const auto ku = static_cast<std::size_t>(k);
        theta[ku] = admm_theta_update(s[k], z[ku] - u[ku], rho);
      }
      MatrixSet z_prev = z;
      for (int j = 0; j < p; ++j) {
        for (int i = 0; i <= j; ++i) {
          if (i == j) {
            for (int k = 0; k < kk; ++k) {
              const auto ku = static_cast<std::size_t>(k);
              z[ku](i, i) = theta[ku](i, i) + u[ku](i, i);
            }
            continue;
          }
          for (int k = 0; k < kk; ++k) {
            const auto ku = static_cast<std::size_t>(k);
            in[ku] = theta[ku](i, j) + u[ku](i, j);
          }
          flsa(in, a1, a2, out);
          for (int k = 0; k < kk; ++k) {
            const auto ku = static_cast<std::size_t>(k);
            z[ku](i, j) = out[ku];
            z[ku](j, i) = out[ku];
          }
        }
      }
      double primal2 = 0.0, dual2 = 0.0;
      for (int k = 0; k < kk; ++k) {
        const auto ku = static_cast<std::size_t>(k);
        const Matrix r = theta[ku] - z[ku];
        u[ku] += r;
        // Keep the scaled dual exactly symmetric.
        u[ku] = 0.5 * (u[ku] + u[ku].transpose()).eval();
        primal2 += r.squaredNorm();
        dual2 += (z[ku] - z_prev[ku]).squaredNorm();
      }
      const double primal = std::sqrt(primal2);
      const double dual = rho * std::sqrt(dual2);

      const double f = objective_or_inf(z, s, params);
      if (f < best_f) {
        best_f = f;
        best_z = z;
      }
      report.objective_trace.push_back(best_f);
      report.outer_iterations = it;

      if (config.target_objective && best_f <= *config.target_objective) {
        report.converged = true;
        break;
      }
      // With a target the residual test is off: the run exists to reach it.
      if (!config.target_objective && primal <= config.primal_tol && dual <= config.dual_tol &&
          std::isfinite(f)) {
        report.converged = true;
        break;
      }
    }
    if (!report.converged) report.warnings.push_back("admm iteration limit reached");
    if (!std::isfinite(best_f))
      throw NumericalError("admm: no positive definite iterate was produced");
    PrecisionSet result(std::move(best_z));
    report.kkt_residual = kkt_residual(result, s, params);
    report.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (partial) *partial = report;
    return Solution{std::move(result), std::move(report)};
  } catch (const std::exception& e) {
    report.error = e.what();
    report.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (partial) *partial = report;
    throw;
  }
}

}  // namespace fmgl
