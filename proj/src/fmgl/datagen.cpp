#include "fmgl/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include "fmgl/random.hpp"

namespace fmgl {

namespace {

// Draws `count` distinct items from `pool` (partial Fisher-Yates, in place).
template <typename T>
std::vector<T> draw_without_replacement(std::vector<T> pool, std::size_t count, Rng& rng) {
  count = std::min(count, pool.size());
  for (std::size_t a = 0; a < count; ++a) {
    const std::size_t b = a + static_cast<std::size_t>(rng.below(pool.size() - a));
    std::swap(pool[a], pool[b]);
  }
  pool.resize(count);
  return pool;
}

std::vector<EdgeSet> edge_sets_of(const MatrixSet& mats, double zero_tol) {
  std::vector<EdgeSet> out;
  out.reserve(mats.size());
  for (const auto& m : mats) out.push_back(edges_of(m, zero_tol));
  return out;
}

}  // namespace

GroundTruth gen_block_model(int p, int k, int l, std::uint64_t seed, double nnz_factor) {
  if (p < 1 || k < 1) throw ParameterError("block model: p and K must be positive");
  if (l < 1 || 2 * l > p) {
    std::ostringstream os;
    os << "block model: need at least two features per block (L = " << l << ", p = " << p << ")";
    throw ParameterError(os.str());
  }
  if (!(nnz_factor > 0.0)) throw ParameterError("block model: nnz_factor must be positive");

  std::vector<std::vector<int>> blocks;
  const int base = p / l;
  const int extra = p % l;
  int next = 0;
  for (int b = 0; b < l; ++b) {
    const int size = base + (b < extra ? 1 : 0);
    std::vector<int> idx(static_cast<std::size_t>(size));
    for (int& v : idx) v = next++;
    blocks.push_back(std::move(idx));
  }

  Rng rng(seed);
  const double block_budget = nnz_factor * static_cast<double>(p) / static_cast<double>(l);
  MatrixSet mats(static_cast<std::size_t>(k), Matrix::Zero(p, p));
  for (int g = 0; g < k; ++g) {
    Matrix& theta = mats[static_cast<std::size_t>(g)];
    for (const auto& block : blocks) {
      const auto b = static_cast<long>(block.size());
      const long max_edges = b * (b - 1) / 2;
      const long wanted = std::lround((block_budget - static_cast<double>(b)) / 2.0);
      const long n_edges = std::clamp(wanted, 0L, max_edges);
      std::vector<IndexPair> pool;
      pool.reserve(static_cast<std::size_t>(max_edges));
      for (std::size_t c = 0; c < block.size(); ++c)
        for (std::size_t r = 0; r < c; ++r) pool.push_back({block[r], block[c]});
      for (const auto& e : draw_without_replacement(std::move(pool), static_cast<std::size_t>(n_edges), rng)) {
        double v = 0.0;
        do v = rng.uniform(-1.0, 1.0); while (v == 0.0);
        theta(e.i, e.j) = v;
        theta(e.j, e.i) = v;
      }
      for (int i : block) theta(i, i) = theta.row(i).cwiseAbs().sum() + rng.uniform(0.1, 0.5);
    }
  }
  auto edges = edge_sets_of(mats, 0.0);
  return GroundTruth{PrecisionSet(std::move(mats)), std::move(edges),
                     BlockPartition(p, std::move(blocks))};
}

GroundTruth gen_drift_model(int p, int n_edges, int n_flips, int k, std::uint64_t seed) {
  if (p < 2) throw ParameterError("drift model: p must be at least 2");
  if (k < 1) throw ParameterError("drift model: K must be positive");
  const long total_pairs = static_cast<long>(p) * (p - 1) / 2;
  if (n_edges < 0 || n_edges > total_pairs)
    throw ParameterError("drift model: n_edges must lie in [0, p(p-1)/2]");
  if (n_flips < 0) throw ParameterError("drift model: n_flips must be non-negative");
  if (k > 1 && n_flips > n_edges)
    throw ParameterError("drift model: n_flips exceeds the current edge count");
  if (k > 1 && static_cast<long>(n_edges) + n_flips > total_pairs)
    throw ParameterError("drift model: not enough free pairs to add n_flips edges");

  Rng rng(seed);
  Matrix theta = 0.25 * Matrix::Identity(p, p);
  std::set<IndexPair> current;

  auto add_edge = [&](IndexPair e) {
    const double sigma = rng.uniform(0.1, 0.3);
    theta(e.i, e.i) += sigma;
    theta(e.j, e.j) += sigma;
    theta(e.i, e.j) -= sigma;
    theta(e.j, e.i) -= sigma;
    current.insert(e);
  };
  auto random_pair = [&]() {
    int i = static_cast<int>(rng.below(static_cast<std::uint64_t>(p)));
    int j = static_cast<int>(rng.below(static_cast<std::uint64_t>(p - 1)));
    if (j >= i) ++j;
    return IndexPair{std::min(i, j), std::max(i, j)};
  };

  while (static_cast<int>(current.size()) < n_edges) {
    const IndexPair e = random_pair();
    if (!current.count(e)) add_edge(e);
  }

  MatrixSet mats{theta};
  for (int g = 1; g < k; ++g) {
    const std::vector<IndexPair> existing(current.begin(), current.end());
    const auto removed = draw_without_replacement(existing, static_cast<std::size_t>(n_flips), rng);
    std::set<IndexPair> removed_set(removed.begin(), removed.end());
    for (const auto& e : removed) {
      const double sigma = std::abs(theta(e.i, e.j));
      theta(e.i, e.i) -= sigma;
      theta(e.j, e.j) -= sigma;
      theta(e.i, e.j) = 0.0;
      theta(e.j, e.i) = 0.0;
      current.erase(e);
    }
    int added = 0;
    while (added < n_flips) {
      const IndexPair e = random_pair();
      if (current.count(e) || removed_set.count(e)) continue;
      add_edge(e);
      ++added;
    }
    mats.push_back(theta);
  }
  auto edges = edge_sets_of(mats, 0.0);
  return GroundTruth{PrecisionSet(std::move(mats)), std::move(edges), std::nullopt};
}

Matrix sample_covariance(const Matrix& samples, bool center) {
  if (samples.rows() < 1) throw ParameterError("sample covariance: no samples");
  Matrix x = samples;
  if (center) x.rowwise() -= x.colwise().mean();
  const Eigen::Index p = x.cols();
  Matrix s = Matrix::Zero(p, p);
  s.selfadjointView<Eigen::Lower>().rankUpdate(x.transpose());
  s /= static_cast<double>(x.rows());
  s.triangularView<Eigen::StrictlyUpper>() = s.transpose();
  return s;
}

CovarianceSet sample_gaussian(const PrecisionSet& theta, long n, std::uint64_t seed) {
  if (n < 1) throw ParameterError("sample_gaussian: n must be at least 1");
  Rng rng(seed);
  const int p = theta.dim();
  MatrixSet out;
  for (int k = 0; k < theta.count(); ++k) {
    Eigen::LLT<Matrix> prec(theta[k]);
    if (prec.info() != Eigen::Success)
      throw NotPositiveDefinite("sample_gaussian: precision matrix is not positive definite");
    Matrix sigma = prec.solve(Matrix::Identity(p, p));
    sigma = 0.5 * (sigma + sigma.transpose()).eval();
    Eigen::LLT<Matrix> cov(sigma);
    if (cov.info() != Eigen::Success)
      throw NotPositiveDefinite("sample_gaussian: covariance is not positive definite");
    const Matrix lower = cov.matrixL();
    Matrix z(n, p);
    for (Eigen::Index r = 0; r < n; ++r)
      for (Eigen::Index c = 0; c < p; ++c) z(r, c) = rng.normal();
    out.push_back(sample_covariance(z * lower.transpose(), false));
  }
  return validate_covariances(std::move(out), kDefaultPerturbation, n);
}

EdgeSet edges_of(const Matrix& theta, double zero_tol) {
  EdgeSet out;
  for (Eigen::Index j = 0; j < theta.cols(); ++j)
    for (Eigen::Index i = 0; i < j; ++i)
      if (std::abs(theta(i, j)) > zero_tol)
        out.push_back({static_cast<int>(i), static_cast<int>(j)});
  std::sort(out.begin(), out.end());
  return out;
}

long count_nonzeros(const PrecisionSet& theta, double zero_tol) {
  long n = 0;
  for (const auto& m : theta.matrices()) n += (m.array().abs() > zero_tol).count();
  return n;
}

long count_edges(const PrecisionSet& theta, double zero_tol) {
  long n = 0;
  for (const auto& m : theta.matrices()) n += static_cast<long>(edges_of(m, zero_tol).size());
  return n;
}

double edge_accuracy(const PrecisionSet& estimate, const GroundTruth& truth, double zero_tol) {
  if (estimate.count() != truth.theta_true.count() || estimate.dim() != truth.theta_true.dim())
    throw StructuralError("edge_accuracy: estimate and truth differ in shape");
  long detected = 0, total = 0;
  for (int k = 0; k < estimate.count(); ++k) {
    for (const auto& e : truth.edge_sets[static_cast<std::size_t>(k)]) {
      ++total;
      if (std::abs(estimate[k](e.i, e.j)) > zero_tol) ++detected;
    }
  }
  // No true edges: nothing to miss.
  if (total == 0) return 1.0;
  return static_cast<double>(detected) / static_cast<double>(total);
}

std::vector<EdgeSet> stable_edges(const std::vector<PrecisionSet>& estimates,
                                  double threshold, double zero_tol) {
  if (estimates.empty()) throw ParameterError("stable_edges: no estimates");
  if (!(threshold > 0.0 && threshold <= 1.0))
    throw ParameterError("stable_edges: threshold must lie in (0, 1]");
  const int kk = estimates.front().count();
  const int p = estimates.front().dim();
  std::vector<Eigen::MatrixXi> hits(static_cast<std::size_t>(kk), Eigen::MatrixXi::Zero(p, p));
  for (const auto& est : estimates) {
    if (est.count() != kk || est.dim() != p)
      throw StructuralError("stable_edges: estimates differ in shape");
    for (int k = 0; k < kk; ++k)
      for (int j = 0; j < p; ++j)
        for (int i = 0; i < j; ++i)
          if (std::abs(est[k](i, j)) > zero_tol) ++hits[static_cast<std::size_t>(k)](i, j);
  }
  const double reps = static_cast<double>(estimates.size());
  std::vector<EdgeSet> out(static_cast<std::size_t>(kk));
  for (int k = 0; k < kk; ++k)
    for (int j = 0; j < p; ++j)
      for (int i = 0; i < j; ++i)
        if (static_cast<double>(hits[static_cast<std::size_t>(k)](i, j)) / reps > threshold)
          out[static_cast<std::size_t>(k)].push_back({i, j});
  for (auto& e : out) std::sort(e.begin(), e.end());
  return out;
}

LambdaTuning tune_lambda1(const CovarianceSet& s,
                          const std::function<PenaltyParams(double)>& make_params,
                          const std::function<long(const PrecisionSet&)>& count,
                          long target, const SolverConfig& config, double rel_tol,
                          int max_evals, std::optional<std::pair<double, double>> bracket) {
  if (target < 0) throw ParameterError("tune_lambda1: target must be non-negative");
  if (max_evals < 1) throw ParameterError("tune_lambda1: max_evals must be positive");
  double hi = 0.0;
  if (bracket) {
    hi = bracket->second;
  } else {
    // Above max |S_ij| every window condition holds, so the solution is diagonal.
    for (int k = 0; k < s.count(); ++k) {
      Matrix off = s[k];
      off.diagonal().setZero();
      hi = std::max(hi, off.cwiseAbs().maxCoeff());
    }
    hi = std::max(hi, std::numeric_limits<double>::min());
  }
  double lo = bracket ? bracket->first : hi * 1e-3;
  if (!(lo > 0.0 && hi > lo)) throw ParameterError("tune_lambda1: invalid bracket");

  LambdaTuning best;
  long best_gap = std::numeric_limits<long>::max();
  auto evaluate = [&](double lambda1) {
    Solution sol = solve(s, make_params(lambda1), config);
    const long c = count(sol.theta);
    ++best.evaluations;
    const long gap = std::abs(c - target);
    if (gap < best_gap) {
      best_gap = gap;
      best.lambda1 = lambda1;
      best.count = c;
      best.solution.emplace(std::move(sol));
    }
    return c;
  };
  const double tol = rel_tol * static_cast<double>(std::max(target, 1L));
  while (best.evaluations < max_evals) {
    const double mid = std::sqrt(lo * hi);
    const long c = evaluate(mid);
    if (static_cast<double>(std::abs(c - target)) <= tol) break;
    if (c > target)
      lo = mid;  // too dense: more regularization
    else
      hi = mid;
    if (hi / lo < 1.0 + 1e-9) break;
  }
  return best;
}

}  // namespace fmgl
