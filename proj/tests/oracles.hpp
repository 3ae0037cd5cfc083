#pragma once

// Reference computations for the unit and acceptance tests. Everything here
// is written from the definitions with plain loops and does not call into the
// library code paths it is used to check.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <random>
#include <vector>

namespace oracle {

using Matrix = Eigen::MatrixXd;

struct GridResult {
  double objective;
  std::vector<double> argmin;
};

// Exact minimum of the fused lasso signal objective over the grid
// {lo, lo + h, ..., hi}^K, by dynamic programming along the chain. The
// transition min_u f(u) + a2 |v - u| is an l1 distance transform (two sweeps).
inline GridResult flsa_grid(const std::vector<double>& g, double a1, double a2,
                            double lo = -5.0, double hi = 5.0, double h = 1e-4) {
  const std::size_t kk = g.size();
  const auto n = static_cast<std::size_t>(std::llround((hi - lo) / h)) + 1;
  auto value = [&](std::size_t idx) { return lo + h * static_cast<double>(idx); };
  std::vector<double> cost(n), prev(n);
  std::vector<std::vector<std::uint32_t>> from(kk, std::vector<std::uint32_t>(n));
  for (std::size_t v = 0; v < n; ++v) {
    const double x = value(v);
    cost[v] = 0.5 * (x - g[0]) * (x - g[0]) + a1 * std::abs(x);
    from[0][v] = static_cast<std::uint32_t>(v);
  }
  for (std::size_t k = 1; k < kk; ++k) {
    // Distance transform of cost with slope a2 per grid step h.
    std::vector<double> best = cost;
    std::vector<std::uint32_t> arg(n);
    for (std::size_t v = 0; v < n; ++v) arg[v] = static_cast<std::uint32_t>(v);
    const double step = a2 * h;
    for (std::size_t v = 1; v < n; ++v)
      if (best[v - 1] + step < best[v]) {
        best[v] = best[v - 1] + step;
        arg[v] = arg[v - 1];
      }
    for (std::size_t v = n - 1; v-- > 0;)
      if (best[v + 1] + step < best[v]) {
        best[v] = best[v + 1] + step;
        arg[v] = arg[v + 1];
      }
    for (std::size_t v = 0; v < n; ++v) {
      const double x = value(v);
      prev[v] = best[v] + 0.5 * (x - g[k]) * (x - g[k]) + a1 * std::abs(x);
      from[k][v] = arg[v];
    }
    cost.swap(prev);
  }
  std::size_t at = static_cast<std::size_t>(std::min_element(cost.begin(), cost.end()) - cost.begin());
  GridResult out{cost[at], std::vector<double>(kk)};
  for (std::size_t k = kk; k-- > 0;) {
    out.argmin[k] = value(at);
    at = from[k][at];
  }
  return out;
}

inline double flsa_objective(const std::vector<double>& g, double a1, double a2,
                             const std::vector<double>& x) {
  double f = 0.0;
  for (std::size_t k = 0; k < g.size(); ++k) {
    f += 0.5 * (x[k] - g[k]) * (x[k] - g[k]) + a1 * std::abs(x[k]);
    if (k + 1 < g.size()) f += a2 * std::abs(x[k] - x[k + 1]);
  }
  return f;
}

// Determinant by Gaussian elimination with partial pivoting, written out.
inline double determinant(Matrix a) {
  const Eigen::Index n = a.rows();
  double det = 1.0;
  for (Eigen::Index c = 0; c < n; ++c) {
    Eigen::Index piv = c;
    for (Eigen::Index r = c + 1; r < n; ++r)
      if (std::abs(a(r, c)) > std::abs(a(piv, c))) piv = r;
    if (a(piv, c) == 0.0) return 0.0;
    if (piv != c) {
      for (Eigen::Index j = 0; j < n; ++j) std::swap(a(c, j), a(piv, j));
      det = -det;
    }
    det *= a(c, c);
    for (Eigen::Index r = c + 1; r < n; ++r) {
      const double f = a(r, c) / a(c, c);
      for (Eigen::Index j = c; j < n; ++j) a(r, j) -= f * a(c, j);
    }
  }
  return det;
}

inline double trace_product(const Matrix& a, const Matrix& b) {
  double t = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) t += a(i, j) * b(j, i);
  return t;
}

inline double penalty(const std::vector<Matrix>& theta, double l1, double l2) {
  double total = 0.0;
  const Eigen::Index p = theta.front().rows();
  for (std::size_t k = 0; k < theta.size(); ++k)
    for (Eigen::Index i = 0; i < p; ++i)
      for (Eigen::Index j = 0; j < p; ++j) {
        if (i == j) continue;
        total += l1 * std::abs(theta[k](i, j));
        if (k + 1 < theta.size()) total += l2 * std::abs(theta[k](i, j) - theta[k + 1](i, j));
      }
  return total;
}

inline double objective(const std::vector<Matrix>& theta, const std::vector<Matrix>& s,
                        double l1, double l2) {
  double f = 0.0;
  for (std::size_t k = 0; k < theta.size(); ++k)
    f += -std::log(determinant(theta[k])) + trace_product(s[k], theta[k]);
  return f + penalty(theta, l1, l2);
}

// Connected components by breadth-first search from every unvisited vertex.
// Returns a label per vertex; labels number components by smallest member.
inline std::vector<int> bfs_components(const std::vector<std::vector<char>>& adj) {
  const std::size_t n = adj.size();
  std::vector<int> label(n, -1);
  int next = 0;
  for (std::size_t start = 0; start < n; ++start) {
    if (label[start] >= 0) continue;
    std::queue<std::size_t> q;
    q.push(start);
    label[start] = next;
    while (!q.empty()) {
      const std::size_t u = q.front();
      q.pop();
      for (std::size_t v = 0; v < n; ++v)
        if (adj[u][v] && label[v] < 0) {
          label[v] = next;
          q.push(v);
        }
    }
    ++next;
  }
  return label;
}

// q(D) = 1/2 vec(D)^T (W kron W) vec(D) + <G, D>, with the Kronecker product formed.
inline double kron_quadratic(const Matrix& w, const Matrix& d, const Matrix& g) {
  const Eigen::Index p = w.rows();
  Matrix h(p * p, p * p);
  for (Eigen::Index a = 0; a < p; ++a)
    for (Eigen::Index b = 0; b < p; ++b)
      h.block(a * p, b * p, p, p) = w(a, b) * w;
  Eigen::VectorXd v(p * p), gv(p * p);
  for (Eigen::Index j = 0; j < p; ++j)
    for (Eigen::Index i = 0; i < p; ++i) {
      v(j * p + i) = d(i, j);
      gv(j * p + i) = g(i, j);
    }
  return 0.5 * v.dot(h * v) + gv.dot(v);
}

inline Matrix random_spd(int p, std::mt19937_64& rng, double ridge = 0.5) {
  std::normal_distribution<double> normal;
  Matrix a(p, p);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) a(i, j) = normal(rng);
  Matrix s = a * a.transpose() / p + ridge * Matrix::Identity(p, p);
  return 0.5 * (s + s.transpose());
}

// Wishart-like sample covariance: n draws from N(0, sigma), exactly symmetric.
inline Matrix sample_cov(const Matrix& sigma, int n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  const Matrix l = Eigen::LLT<Matrix>(sigma).matrixL();
  Matrix x(n, sigma.rows());
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < sigma.rows(); ++c) x(r, c) = normal(rng);
  x = x * l.transpose();
  Matrix s = x.transpose() * x / n;
  return 0.5 * (s + s.transpose());
}

}  // namespace oracle
