#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "fmgl/core.hpp"
#include "fmgl/newton.hpp"
#include "fmgl/screening.hpp"

namespace fmgl {

inline constexpr double kZeroTol = 1e-8;

using EdgeSet = std::vector<IndexPair>;  // off-diagonal pairs, i < j, sorted

struct GroundTruth {
  PrecisionSet theta_true;
  std::vector<EdgeSet> edge_sets;          // per graph
  std::optional<BlockPartition> partition;  // block model only
};

/// K block-diagonal precision matrices with L blocks of near-equal size (the
/// first p mod L blocks get one extra feature). Each block of each graph gets
/// a random pattern of about nnz_factor * p / L nonzeros (diagonal included),
/// off-diagonal values uniform on [-1, 1], and diagonal entries equal to the
/// absolute row sum plus Uniform[0.1, 0.5]. Requires p >= 2L.
GroundTruth gen_block_model(int p, int k, int l, std::uint64_t seed, double nnz_factor = 10.0);

/// Graph 1 starts at 0.25 I and receives n_edges random edges; each edge (i, j)
/// adds sigma ~ U[0.1, 0.3] to theta_ii and theta_jj and subtracts it from
/// theta_ij. Each following graph deletes n_flips existing edges (reversing
/// their addition) and adds n_flips new ones that were not just deleted.
GroundTruth gen_drift_model(int p, int n_edges, int n_flips, int k, std::uint64_t seed);

/// n zero-mean draws per graph with covariance theta^{-1}; S = X^T X / n.
CovarianceSet sample_gaussian(const PrecisionSet& theta, long n, std::uint64_t seed);

/// Raw data path: S = X^T X / n for an n x p sample matrix, optionally centered.
Matrix sample_covariance(const Matrix& samples, bool center = false);

EdgeSet edges_of(const Matrix& theta, double zero_tol = kZeroTol);

/// All entries (diagonal included) with magnitude above zero_tol, summed over k.
long count_nonzeros(const PrecisionSet& theta, double zero_tol = kZeroTol);
/// Off-diagonal pairs i < j with magnitude above zero_tol, summed over k.
long count_edges(const PrecisionSet& theta, double zero_tol = kZeroTol);

/// Fraction of true edges (aggregated over graphs) recovered by the estimate.
double edge_accuracy(const PrecisionSet& estimate, const GroundTruth& truth,
                     double zero_tol = kZeroTol);

/// Edges present in strictly more than `threshold` of the replications.
std::vector<EdgeSet> stable_edges(const std::vector<PrecisionSet>& estimates,
                                  double threshold, double zero_tol = kZeroTol);

struct LambdaTuning {
  double lambda1 = 0.0;
  long count = 0;
  int evaluations = 0;
  std::optional<Solution> solution;
};

/// Bisection on log(lambda1) so that count(solution) approaches `target`.
/// `make_params` builds the penalty for a trial lambda1 (fixing lambda2 or the
/// independent mode); `count` must be non-increasing in lambda1 in practice.
/// Stops when |count - target| <= rel_tol * target or after max_evals solves.
LambdaTuning tune_lambda1(const CovarianceSet& s,
                          const std::function<PenaltyParams(double)>& make_params,
                          const std::function<long(const PrecisionSet&)>& count,
                          long target, const SolverConfig& config,
                          double rel_tol = 0.02, int max_evals = 30,
                          std::optional<std::pair<double, double>> bracket = std::nullopt);

}  // namespace fmgl
