#include "fmgl/core.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "fmgl/fusedprox.hpp"

namespace fmgl {

PenaltyParams::PenaltyParams(double lambda1, double lambda2)
    : PenaltyParams(lambda1, lambda2, false) {}

PenaltyParams::PenaltyParams(double lambda1, double lambda2, bool independent)
    : lambda1_(lambda1), lambda2_(lambda2), independent_(independent) {
  if (!std::isfinite(lambda1) || !(lambda1 > 0.0))
    throw ParameterError("lambda1 must be a finite positive number");
  if (independent) return;
  if (!std::isfinite(lambda2) || !(lambda2 > 0.0))
    throw ParameterError(
        "lambda2 must be a finite positive number (use independent mode for lambda2 = 0)");
}

PenaltyParams PenaltyParams::independent(double lambda1) {
  return PenaltyParams(lambda1, 0.0, true);
}

namespace {

int check_square_set(const MatrixSet& matrices, const char* what) {
  if (matrices.empty()) throw StructuralError(std::string(what) + ": no matrices");
  const auto p = matrices.front().rows();
  if (p < 1) throw StructuralError(std::string(what) + ": empty matrix");
  for (std::size_t k = 0; k < matrices.size(); ++k) {
    const Matrix& m = matrices[k];
    if (m.rows() != p || m.cols() != p) {
      std::ostringstream os;
      os << what << ": matrix " << k + 1 << " is " << m.rows() << "x" << m.cols()
         << ", expected " << p << "x" << p;
      throw StructuralError(os.str());
    }
  }
  return static_cast<int>(p);
}

void check_finite(const Matrix& m, std::size_t k, const char* what) {
  if (!m.allFinite()) {
    std::ostringstream os;
    os << what << ": matrix " << k + 1 << " has non-finite entries";
    throw DataError(os.str());
  }
}

bool exactly_symmetric(const Matrix& m) {
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = j + 1; i < m.rows(); ++i)
      if (m(i, j) != m(j, i)) return false;
  return true;
}

}  // namespace

CovarianceSet::CovarianceSet(MatrixSet matrices, std::optional<long> sample_count)
    : matrices_(std::move(matrices)), sample_count_(sample_count) {
  dim_ = check_square_set(matrices_, "covariance set");
  for (std::size_t k = 0; k < matrices_.size(); ++k) {
    const Matrix& s = matrices_[k];
    check_finite(s, k, "covariance set");
    if (!exactly_symmetric(s))
      throw DataError("covariance set: matrix " + std::to_string(k + 1) +
                      " is not symmetric");
    if (!(s.diagonal().array() > 0.0).all())
      throw DataError("covariance set: matrix " + std::to_string(k + 1) +
                      " has a non-positive diagonal entry");
  }
  if (sample_count_ && *sample_count_ < 1)
    throw ParameterError("covariance set: sample count must be positive");
}

PrecisionSet::PrecisionSet(MatrixSet matrices) : matrices_(std::move(matrices)) {
  dim_ = check_square_set(matrices_, "precision set");
  for (std::size_t k = 0; k < matrices_.size(); ++k) {
    const Matrix& t = matrices_[k];
    check_finite(t, k, "precision set");
    if (!exactly_symmetric(t))
      throw DataError("precision set: matrix " + std::to_string(k + 1) +
                      " is not symmetric");
    Eigen::LLT<Matrix> llt(t);
    if (llt.info() != Eigen::Success)
      throw NotPositiveDefinite("precision set: matrix " + std::to_string(k + 1) +
                                " is not positive definite");
  }
}

CovarianceSet validate_covariances(MatrixSet raw, double perturbation,
                                   std::optional<long> sample_count) {
  if (!(perturbation > 0.0) || !std::isfinite(perturbation))
    throw ParameterError("perturbation must be a finite positive number");
  check_square_set(raw, "covariance set");
  for (std::size_t k = 0; k < raw.size(); ++k) {
    Matrix& s = raw[k];
    check_finite(s, k, "covariance set");
    const Matrix sym = 0.5 * (s + s.transpose());
    s = sym;
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
      double& d = s(i, i);
      // Only round-off sized negatives are repairable; a genuinely negative
      // variance means the input is not a covariance matrix.
      if (d < -1e4 * perturbation)
        throw DataError("covariance set: matrix " + std::to_string(k + 1) +
                        " has a negative diagonal entry at row " + std::to_string(i + 1));
      while (!(d > 0.0)) d += perturbation;
    }
  }
  return CovarianceSet(std::move(raw), sample_count);
}

double log_det_spd(const Matrix& a) {
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() != Eigen::Success)
    throw NotPositiveDefinite("log_det: matrix is not positive definite");
  const Matrix& l = llt.matrixLLT();
  double sum = 0.0;
  for (Eigen::Index i = 0; i < l.rows(); ++i) sum += std::log(l(i, i));
  return 2.0 * sum;
}

double neg_log_likelihood(const Matrix& theta, const Matrix& s) {
  if (theta.rows() != s.rows() || theta.cols() != s.cols())
    throw StructuralError("neg_log_likelihood: shape mismatch");
  // tr(S Theta) for symmetric arguments is the Frobenius inner product.
  return -log_det_spd(theta) + s.cwiseProduct(theta).sum();
}

double penalty(const MatrixSet& theta, const PenaltyParams& params) {
  if (theta.empty()) return 0.0;
  const Eigen::Index p = theta.front().rows();
  double l1 = 0.0;
  double fused = 0.0;
  for (std::size_t k = 0; k < theta.size(); ++k) {
    const Matrix& a = theta[k];
    const Matrix* next = k + 1 < theta.size() ? &theta[k + 1] : nullptr;
    for (Eigen::Index j = 0; j < p; ++j) {
      for (Eigen::Index i = 0; i < p; ++i) {
        if (i == j) continue;
        l1 += std::abs(a(i, j));
        if (next) fused += std::abs(a(i, j) - (*next)(i, j));
      }
    }
  }
  return params.lambda1() * l1 + params.lambda2() * fused;
}

double penalty(const PrecisionSet& theta, const PenaltyParams& params) {
  return penalty(theta.matrices(), params);
}

void check_compatible(const PrecisionSet& theta, const CovarianceSet& s) {
  if (theta.dim() != s.dim() || theta.count() != s.count()) {
    std::ostringstream os;
    os << "precision set (" << theta.count() << " x " << theta.dim()
       << ") does not match covariance set (" << s.count() << " x " << s.dim() << ")";
    throw StructuralError(os.str());
  }
}

double objective(const PrecisionSet& theta, const CovarianceSet& s,
                 const PenaltyParams& params) {
  check_compatible(theta, s);
  double value = 0.0;
  for (int k = 0; k < theta.count(); ++k) value += neg_log_likelihood(theta[k], s[k]);
  return value + penalty(theta, params);
}

MatrixSet spd_inverses(const PrecisionSet& theta) {
  MatrixSet out;
  out.reserve(static_cast<std::size_t>(theta.count()));
  for (int k = 0; k < theta.count(); ++k) {
    Eigen::LLT<Matrix> llt(theta[k]);
    if (llt.info() != Eigen::Success)
      throw NotPositiveDefinite("matrix " + std::to_string(k + 1) +
                                " is not positive definite");
    out.push_back(llt.solve(Matrix::Identity(theta.dim(), theta.dim())));
  }
  return out;
}

double kkt_entry_residual(const PrecisionSet& theta, const CovarianceSet& s,
                          const MatrixSet& inverses, const PenaltyParams& params,
                          int i, int j) {
  const int kk = theta.count();
  if (i == j) {
    double r = 0.0;
    for (int k = 0; k < kk; ++k) r = std::max(r, std::abs(s[k](i, i) - inverses[k](i, i)));
    return r;
  }
  std::vector<double> values(static_cast<std::size_t>(kk));
  std::vector<double> grad(static_cast<std::size_t>(kk));
  for (int k = 0; k < kk; ++k) {
    values[static_cast<std::size_t>(k)] = theta[k](i, j);
    grad[static_cast<std::size_t>(k)] = s[k](i, j) - inverses[k](i, j);
  }
  return min_subgradient_residual(values, grad, params.lambda1(), params.lambda2());
}

double kkt_residual(const PrecisionSet& theta, const CovarianceSet& s,
                    const PenaltyParams& params) {
  check_compatible(theta, s);
  const MatrixSet inverses = spd_inverses(theta);
  double worst = 0.0;
  for (int j = 0; j < theta.dim(); ++j)
    for (int i = 0; i <= j; ++i)
      worst = std::max(worst, kkt_entry_residual(theta, s, inverses, params, i, j));
  return worst;
}

}  // namespace fmgl
