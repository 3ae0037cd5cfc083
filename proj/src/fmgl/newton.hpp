#pragma once

#include <functional>
#include <vector>

#include "fmgl/core.hpp"
#include "fmgl/screening.hpp"
#include "fmgl/subproblem.hpp"

namespace fmgl {

struct NewtonState;
struct EntryPartition;
struct NewtonDirection;

/// Snapshot handed to SolverConfig::observer after every accepted step.
struct IterationRecord {
  const NewtonState& before;
  const EntryPartition& partition;
  const NewtonDirection& direction;
  double beta;
  double decrement;
  const NewtonState& after;
};

struct SolverConfig {
  double outer_tol = 1e-5;  // |F_t - F_{t+1}| / max(1, |F_t|)
  int max_newton_iters = 100;
  double armijo_sigma = 1e-3;
  int beta_floor_exponent = 30;  // smallest step tried is 2^-30
  NspgConfig inner;
  bool use_screening = false;
  int threads = 1;  // concurrent block solves under screening
  std::function<void(const IterationRecord&)> observer;

  void validate() const;
};

/// Iterate together with everything derived from it. All members are
/// refreshed at once by at() or by the line search.
struct NewtonState {
  MatrixSet theta;
  std::vector<Eigen::LLT<Matrix>> cholesky;
  MatrixSet w;         // theta^{-1}
  MatrixSet gradient;  // S - W
  double objective = 0.0;
  int iteration = 0;

  /// Throws NotPositiveDefinite if some theta^(k) has no Cholesky factor.
  static NewtonState at(MatrixSet theta, const CovarianceSet& s,
                        const PenaltyParams& params, int iteration = 0);
};

/// Free pairs (i <= j, all diagonals included) and fixed off-diagonal pairs.
struct EntryPartition {
  std::vector<IndexPair> free;
  std::vector<IndexPair> fixed;
};

struct NewtonDirection {
  MatrixSet d;       // target - theta_t, zero on fixed entries
  MatrixSet target;  // minimizer of the local model
  int inner_iterations = 0;
  bool inner_converged = false;

  bool is_zero() const;
  double max_abs() const;
};

struct LineSearchResult {
  double beta = 1.0;
  int backtracks = 0;
  NewtonState next;
};

/// Pair (i, j) is fixed iff theta^(k)_ij = 0 for every k and the gradient
/// vector over k satisfies the strict window conditions.
EntryPartition compute_fixed_set(const NewtonState& state, const PenaltyParams& params);

NewtonDirection newton_direction(const NewtonState& state, const EntryPartition& partition,
                                 const CovarianceSet& s, const PenaltyParams& params,
                                 const NspgConfig& inner);

/// delta = sum_k tr((S - W) D) + P(theta + D) - P(theta).
double line_search_decrement(const NewtonState& state, const MatrixSet& d,
                             const CovarianceSet& s, const PenaltyParams& params);

/// Armijo backtracking over beta in {1, 1/2, 1/4, ...}: the first beta for which
/// every theta + beta D has a Cholesky factor and
/// F(theta + beta D) <= F(theta) + sigma beta delta.
LineSearchResult line_search(const NewtonState& state, const NewtonDirection& direction,
                             double delta, const CovarianceSet& s,
                             const PenaltyParams& params, const SolverConfig& config);

struct Solution {
  PrecisionSet theta;
  SolveReport report;
};

/// Proximal Newton with shrinking on the full problem, started at diag(S)^{-1}.
/// When `partial` is given it receives the report even if the solve throws.
Solution solve_fmgl(const CovarianceSet& s, const PenaltyParams& params,
                    const SolverConfig& config, SolveReport* partial = nullptr);

/// Screens, solves every block independently (1x1 blocks in closed form) and
/// reassembles.
Solution solve_with_screening(const CovarianceSet& s, const PenaltyParams& params,
                              const SolverConfig& config, SolveReport* partial = nullptr);

/// Dispatches on config.use_screening.
Solution solve(const CovarianceSet& s, const PenaltyParams& params,
               const SolverConfig& config, SolveReport* partial = nullptr);

/// diag(S^(k))^{-1}.
MatrixSet diagonal_start(const CovarianceSet& s);

}  // namespace fmgl
