#include "fmgl/subproblem.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include "fmgl/fusedprox.hpp"

namespace fmgl {

void NspgConfig::validate() const {
  if (!(tol > 0.0)) throw ParameterError("nspg: tol must be positive");
  if (max_iters < 1) throw ParameterError("nspg: max_iters must be at least 1");
  if (history_len < 1) throw ParameterError("nspg: history_len must be at least 1");
  if (!(step_min > 0.0) || !(step_max >= step_min))
    throw ParameterError("nspg: invalid step bounds");
  if (!(sufficient_decrease > 0.0) || !(sufficient_decrease < 1.0))
    throw ParameterError("nspg: sufficient_decrease must lie in (0, 1)");
}

QuadraticModel::QuadraticModel(PrecisionSet theta_ref, MatrixSet w,
                               const CovarianceSet& s, PenaltyParams params,
                               std::vector<IndexPair> free_set)
    : theta_ref_(std::move(theta_ref)),
      w_(std::move(w)),
      s_(&s),
      params_(params),
      free_set_(std::move(free_set)) {
  check_compatible(theta_ref_, s);
  const int p = theta_ref_.dim();
  if (static_cast<int>(w_.size()) != theta_ref_.count())
    throw StructuralError("quadratic model: inverse count mismatch");
  for (int k = 0; k < count(); ++k) {
    const Matrix& wk = w_[static_cast<std::size_t>(k)];
    if (wk.rows() != p || wk.cols() != p)
      throw StructuralError("quadratic model: inverse shape mismatch");
    const double err = (wk * theta_ref_[k] - Matrix::Identity(p, p)).cwiseAbs().maxCoeff();
    if (err > 1e-8 * std::max(1.0, wk.cwiseAbs().maxCoeff() * theta_ref_[k].cwiseAbs().maxCoeff()))
      throw NumericalError("quadratic model: W is not the inverse of theta_ref");
  }
  for (auto& e : free_set_) {
    if (e.i > e.j) std::swap(e.i, e.j);
    if (e.i < 0 || e.j >= p) throw StructuralError("quadratic model: free index out of range");
  }
  std::sort(free_set_.begin(), free_set_.end());
  free_set_.erase(std::unique(free_set_.begin(), free_set_.end()), free_set_.end());

  base_gradient_.reserve(w_.size());
  for (int k = 0; k < count(); ++k) {
    base_gradient_.push_back(s[k] - w_[static_cast<std::size_t>(k)]);
    smooth_value_ += neg_log_likelihood(theta_ref_[k], s[k]);
  }
}

std::vector<char> QuadraticModel::free_mask() const {
  const auto p = static_cast<std::size_t>(dim());
  std::vector<char> mask(p * p, 0);
  for (const auto& e : free_set_) {
    mask[static_cast<std::size_t>(e.i) + p * static_cast<std::size_t>(e.j)] = 1;
    mask[static_cast<std::size_t>(e.j) + p * static_cast<std::size_t>(e.i)] = 1;
  }
  return mask;
}

double model_objective(const QuadraticModel& model, const MatrixSet& theta) {
  if (static_cast<int>(theta.size()) != model.count())
    throw StructuralError("model_objective: count mismatch");
  double value = model.smooth_value();
  for (int k = 0; k < model.count(); ++k) {
    const auto ku = static_cast<std::size_t>(k);
    const Matrix d = theta[ku] - model.theta_ref()[k];
    const Matrix wd = model.w()[ku] * d;
    value += 0.5 * (wd * wd).trace() + model.base_gradient()[ku].cwiseProduct(d).sum();
  }
  return value + penalty(theta, model.params());
}

MatrixSet smooth_gradient(const QuadraticModel& model, const MatrixSet& theta) {
  if (static_cast<int>(theta.size()) != model.count())
    throw StructuralError("smooth_gradient: count mismatch");
  const std::vector<char> mask = model.free_mask();
  MatrixSet out;
  out.reserve(theta.size());
  for (int k = 0; k < model.count(); ++k) {
    const auto ku = static_cast<std::size_t>(k);
    const Matrix& w = model.w()[ku];
    Matrix g = w * (theta[ku] - model.theta_ref()[k]) * w + model.base_gradient()[ku];
    for (Eigen::Index idx = 0; idx < g.size(); ++idx)
      if (!mask[static_cast<std::size_t>(idx)]) g.data()[idx] = 0.0;
    out.push_back(std::move(g));
  }
  return out;
}

MatrixSet prox_map(const MatrixSet& theta, const MatrixSet& grad, double step,
                   const QuadraticModel& model) {
  if (!(step > 0.0)) throw ParameterError("prox_map: step must be positive");
  const int kk = model.count();
  MatrixSet out = theta;
  std::vector<double> in(static_cast<std::size_t>(kk)), res(static_cast<std::size_t>(kk));
  const double a1 = step * model.params().lambda1();
  const double a2 = step * model.params().lambda2();
  for (const auto& e : model.free_set()) {
    if (e.i == e.j) {
      for (int k = 0; k < kk; ++k) {
        const auto ku = static_cast<std::size_t>(k);
        out[ku](e.i, e.i) = theta[ku](e.i, e.i) - step * grad[ku](e.i, e.i);
      }
      continue;
    }
    for (int k = 0; k < kk; ++k) {
      const auto ku = static_cast<std::size_t>(k);
      in[ku] = theta[ku](e.i, e.j) - step * grad[ku](e.i, e.j);
    }
    flsa(in, a1, a2, res);
    for (int k = 0; k < kk; ++k) {
      const auto ku = static_cast<std::size_t>(k);
      out[ku](e.i, e.j) = res[ku];
      out[ku](e.j, e.i) = res[ku];
    }
  }
  return out;
}

namespace {

// Free entries packed per graph: values[k][e] is entry free_set[e] of graph k.
// Inner products weight off-diagonal entries twice so that they agree with the
// Frobenius inner product of the full symmetric matrices.
class PackedModel {
 public:
  explicit PackedModel(const QuadraticModel& model)
      : model_(model),
        p_(model.dim()),
        kk_(model.count()),
        pairs_(model.free_set()),
        r_(p_, p_),
        dense_(p_, p_) {
    const std::size_t m = pairs_.size();
    weight_.resize(static_cast<Eigen::Index>(m));
    for (std::size_t e = 0; e < m; ++e) {
      const bool diag = pairs_[e].i == pairs_[e].j;
      weight_[static_cast<Eigen::Index>(e)] = diag ? 1.0 : 2.0;
      (diag ? diag_ : off_).push_back(e);
    }
    ref_ = gather(model.theta_ref().matrices());
    base_ = gather(model.base_gradient());
    // Penalty of the entries that never move.
    fixed_penalty_ = penalty(model.theta_ref().matrices(), model.params()) - free_penalty(ref_);
    fixed_max_ = 0.0;
    const std::vector<char> mask = model.free_mask();
    for (int k = 0; k < kk_; ++k) {
      const Matrix& t = model.theta_ref()[k];
      for (Eigen::Index idx = 0; idx < t.size(); ++idx)
        if (!mask[static_cast<std::size_t>(idx)])
          fixed_max_ = std::max(fixed_max_, std::abs(t.data()[idx]));
    }
  }

  using Packed = std::vector<Vector>;

  const Packed& reference() const { return ref_; }

  Packed gather(const MatrixSet& mats) const {
    Packed out(static_cast<std::size_t>(kk_), Vector(static_cast<Eigen::Index>(pairs_.size())));
    for (int k = 0; k < kk_; ++k)
      for (std::size_t e = 0; e < pairs_.size(); ++e)
        out[static_cast<std::size_t>(k)][static_cast<Eigen::Index>(e)] =
            mats[static_cast<std::size_t>(k)](pairs_[e].i, pairs_[e].j);
    return out;
  }

  MatrixSet scatter(const Packed& x) const {
    MatrixSet out = model_.theta_ref().matrices();
    for (int k = 0; k < kk_; ++k) {
      Matrix& t = out[static_cast<std::size_t>(k)];
      for (std::size_t e = 0; e < pairs_.size(); ++e) {
        const double v = x[static_cast<std::size_t>(k)][static_cast<Eigen::Index>(e)];
        t(pairs_[e].i, pairs_[e].j) = v;
        t(pairs_[e].j, pairs_[e].i) = v;
      }
    }
    return out;
  }

  // out = (W D W) restricted to the free set, D given by packed values d.
  void hessian(int k, const Vector& d, Vector& out) {
    const Matrix& w = model_.w()[static_cast<std::size_t>(k)];
    long nnz = 0;
    for (Eigen::Index e = 0; e < d.size(); ++e) nnz += d[e] != 0.0;
    out.resize(d.size());
    if (nnz == 0) {
      out.setZero();
      return;
    }
    if (static_cast<double>(nnz) * 8.0 > static_cast<double>(p_) * p_) {
      dense_.setZero();
      for (std::size_t e = 0; e < pairs_.size(); ++e) {
        const double v = d[static_cast<Eigen::Index>(e)];
        dense_(pairs_[e].i, pairs_[e].j) = v;
        dense_(pairs_[e].j, pairs_[e].i) = v;
      }
      r_.noalias() = w * dense_;
    } else {
      // R = W D built column by column from the nonzeros of D.
      r_.setZero();
      for (std::size_t e = 0; e < pairs_.size(); ++e) {
        const double v = d[static_cast<Eigen::Index>(e)];
        if (v == 0.0) continue;
        const int a = pairs_[e].i, b = pairs_[e].j;
        r_.col(b) += v * w.col(a);
        if (a != b) r_.col(a) += v * w.col(b);
      }
    }
    rt_ = r_.transpose();
    // (R W)_ij = row i of R dotted with column j of W.
    for (std::size_t e = 0; e < pairs_.size(); ++e)
      out[static_cast<Eigen::Index>(e)] = rt_.col(pairs_[e].i).dot(w.col(pairs_[e].j));
  }

  double free_penalty(const Packed& x) const {
    const double l1 = model_.params().lambda1();
    const double l2 = model_.params().lambda2();
    double sum_abs = 0.0, sum_jump = 0.0;
    for (std::size_t e : off_) {
      const auto ei = static_cast<Eigen::Index>(e);
      for (int k = 0; k < kk_; ++k) {
        const double v = x[static_cast<std::size_t>(k)][ei];
        sum_abs += std::abs(v);
        if (k + 1 < kk_) sum_jump += std::abs(v - x[static_cast<std::size_t>(k) + 1][ei]);
      }
    }
    return 2.0 * (l1 * sum_abs + l2 * sum_jump);
  }

  // Q at x given the Hessian products hv of x - ref. Gradient is hv + base.
  double value(const Packed& x, const Packed& hv) const {
    double v = model_.smooth_value() + fixed_penalty_ + free_penalty(x);
    for (int k = 0; k < kk_; ++k) {
      const auto ku = static_cast<std::size_t>(k);
      const Vector d = x[ku] - ref_[ku];
      v += (weight_.array() * d.array() * (0.5 * hv[ku].array() + base_[ku].array())).sum();
    }
    return v;
  }

  void gradient(const Packed& hv, Packed& grad) const {
    grad.resize(static_cast<std::size_t>(kk_));
    for (int k = 0; k < kk_; ++k)
      grad[static_cast<std::size_t>(k)] = hv[static_cast<std::size_t>(k)] + base_[static_cast<std::size_t>(k)];
  }

  void prox_step(const Packed& x, const Packed& grad, double step, Packed& out) {
    out.resize(static_cast<std::size_t>(kk_));
    for (int k = 0; k < kk_; ++k)
      out[static_cast<std::size_t>(k)] = x[static_cast<std::size_t>(k)] - step * grad[static_cast<std::size_t>(k)];
    const double a1 = step * model_.params().lambda1();
    const double a2 = step * model_.params().lambda2();
    in_.resize(static_cast<std::size_t>(kk_));
    res_.resize(static_cast<std::size_t>(kk_));
    for (std::size_t e : off_) {
      const auto ei = static_cast<Eigen::Index>(e);
      for (int k = 0; k < kk_; ++k) in_[static_cast<std::size_t>(k)] = out[static_cast<std::size_t>(k)][ei];
      flsa(in_, a1, a2, res_);
      for (int k = 0; k < kk_; ++k) out[static_cast<std::size_t>(k)][ei] = res_[static_cast<std::size_t>(k)];
    }
  }

  double inner(const Packed& a, const Packed& b) const {
    double s = 0.0;
    for (int k = 0; k < kk_; ++k)
      s += (weight_.array() * a[static_cast<std::size_t>(k)].array() * b[static_cast<std::size_t>(k)].array()).sum();
    return s;
  }

  double max_abs(const Packed& x) const {
    double m = fixed_max_;
    for (const auto& v : x)
      if (v.size() > 0) m = std::max(m, v.cwiseAbs().maxCoeff());
    return m;
  }

 private:
  const QuadraticModel& model_;
  int p_;
  int kk_;
  const std::vector<IndexPair>& pairs_;
  Vector weight_;
  std::vector<std::size_t> off_;
  std::vector<std::size_t> diag_;
  Packed ref_;
  Packed base_;
  double fixed_penalty_ = 0.0;
  double fixed_max_ = 0.0;
  Matrix r_;
  Matrix rt_;
  Matrix dense_;
  std::vector<double> in_;
  std::vector<double> res_;
};

}  // namespace

NspgResult nspg_solve(const QuadraticModel& model, const NspgConfig& config) {
  config.validate();
  NspgResult result;
  if (model.free_set().empty()) {
    result.theta = model.theta_ref().matrices();
    result.converged = true;
    result.model_value = model_objective(model, result.theta);
    return result;
  }

  PackedModel packed(model);
  const int kk = model.count();
  using Packed = PackedModel::Packed;

  Packed x = packed.reference();
  Packed hv(static_cast<std::size_t>(kk), Vector::Zero(static_cast<Eigen::Index>(model.free_set().size())));
  Packed grad;
  packed.gradient(hv, grad);
  double q = packed.value(x, hv);

  std::deque<double> history{q};
  double step = 1.0;
  Packed x_new, hv_new(static_cast<std::size_t>(kk)), grad_new, dx(static_cast<std::size_t>(kk)),
      dg(static_cast<std::size_t>(kk));

  for (int it = 1; it <= config.max_iters; ++it) {
    result.iterations = it;
    const double q_ref = *std::max_element(history.begin(), history.end());
    double q_new = 0.0;
    double dx_norm2 = 0.0;
    bool stalled = false;
    for (;;) {
      packed.prox_step(x, grad, step, x_new);
      for (int k = 0; k < kk; ++k)
        dx[static_cast<std::size_t>(k)] = x_new[static_cast<std::size_t>(k)] - x[static_cast<std::size_t>(k)];
      dx_norm2 = packed.inner(dx, dx);
      if (dx_norm2 == 0.0) {
        stalled = true;  // x is a fixed point of the prox-gradient map
        break;
      }
      for (int k = 0; k < kk; ++k) {
        const auto ku = static_cast<std::size_t>(k);
        packed.hessian(k, x_new[ku] - packed.reference()[ku], hv_new[ku]);
      }
      q_new = packed.value(x_new, hv_new);
      if (q_new <= q_ref - 0.5 * config.sufficient_decrease / step * dx_norm2) break;
      if (step * 0.5 < config.step_min) {
        stalled = true;
        break;
      }
      step *= 0.5;
    }
    if (stalled) {
      result.converged = true;
      break;
    }

    packed.gradient(hv_new, grad_new);
    for (int k = 0; k < kk; ++k) {
      const auto ku = static_cast<std::size_t>(k);
      dg[ku] = grad_new[ku] - grad[ku];
    }
    const double x_scale = packed.max_abs(x);
    double change = 0.0;
    for (const auto& v : dx)
      if (v.size() > 0) change = std::max(change, v.cwiseAbs().maxCoeff());

    const double sy = packed.inner(dx, dg);
    step = sy > 0.0 ? dx_norm2 / sy : 1.0;
    step = std::clamp(step, config.step_min, config.step_max);

    std::swap(x, x_new);
    std::swap(hv, hv_new);
    std::swap(grad, grad_new);
    q = q_new;
    history.push_back(q);
    while (static_cast<int>(history.size()) > config.history_len) history.pop_front();

    if (change <= config.tol * std::max(x_scale, std::numeric_limits<double>::min())) {
      result.converged = true;
      break;
    }
  }
  result.theta = packed.scatter(x);
  result.model_value = q;
  return result;
}

}  // namespace fmgl
