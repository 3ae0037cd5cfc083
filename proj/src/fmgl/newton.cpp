#include "fmgl/newton.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <optional>
#include <sstream>
#include <thread>

namespace fmgl {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

double smooth_part(const MatrixSet& theta, const std::vector<Eigen::LLT<Matrix>>& chol,
                   const CovarianceSet& s) {
  double value = 0.0;
  for (std::size_t k = 0; k < theta.size(); ++k) {
    const Matrix& l = chol[k].matrixLLT();
    double log_det = 0.0;
    for (Eigen::Index i = 0; i < l.rows(); ++i) log_det += std::log(l(i, i));
    value += -2.0 * log_det + s[static_cast<int>(k)].cwiseProduct(theta[k]).sum();
  }
  return value;
}

NewtonState make_state(MatrixSet theta, std::vector<Eigen::LLT<Matrix>> chol,
                       double objective, const CovarianceSet& s, int iteration) {
  NewtonState st;
  const int p = s.dim();
  st.w.reserve(theta.size());
  st.gradient.reserve(theta.size());
  for (std::size_t k = 0; k < theta.size(); ++k) {
    st.w.push_back(chol[k].solve(Matrix::Identity(p, p)));
    // Symmetrize away the round-off of the triangular solves.
    st.w.back() = 0.5 * (st.w.back() + st.w.back().transpose()).eval();
    st.gradient.push_back(s[static_cast<int>(k)] - st.w.back());
  }
  st.theta = std::move(theta);
  st.cholesky = std::move(chol);
  st.objective = objective;
  st.iteration = iteration;
  return st;
}

bool strictly_inside(std::span<const double> g, const PenaltyParams& params) {
  return pair_is_screenable(g, params, Comparison::strict);
}

}  // namespace

void SolverConfig::validate() const {
  if (!(outer_tol > 0.0)) throw ParameterError("outer_tol must be positive");
  if (max_newton_iters < 1) throw ParameterError("max_newton_iters must be at least 1");
  if (!(armijo_sigma > 0.0 && armijo_sigma < 1.0))
    throw ParameterError("armijo_sigma must lie in (0, 1)");
  if (beta_floor_exponent < 0 || beta_floor_exponent > 1000)
    throw ParameterError("beta_floor_exponent out of range");
  if (threads < 1) throw ParameterError("threads must be at least 1");
  inner.validate();
}

NewtonState NewtonState::at(MatrixSet theta, const CovarianceSet& s,
                            const PenaltyParams& params, int iteration) {
  if (static_cast<int>(theta.size()) != s.count())
    throw StructuralError("newton state: count mismatch");
  std::vector<Eigen::LLT<Matrix>> chol;
  chol.reserve(theta.size());
  for (std::size_t k = 0; k < theta.size(); ++k) {
    if (theta[k].rows() != s.dim() || theta[k].cols() != s.dim())
      throw StructuralError("newton state: shape mismatch");
    chol.emplace_back(theta[k]);
    if (chol.back().info() != Eigen::Success)
      throw NotPositiveDefinite("newton state: matrix " + std::to_string(k + 1) +
                                " is not positive definite");
  }
  const double f = smooth_part(theta, chol, s) + penalty(theta, params);
  return make_state(std::move(theta), std::move(chol), f, s, iteration);
}

bool NewtonDirection::is_zero() const { return max_abs() == 0.0; }

double NewtonDirection::max_abs() const {
  double m = 0.0;
  for (const auto& dk : d) m = std::max(m, dk.cwiseAbs().maxCoeff());
  return m;
}

MatrixSet diagonal_start(const CovarianceSet& s) {
  MatrixSet out;
  out.reserve(static_cast<std::size_t>(s.count()));
  for (int k = 0; k < s.count(); ++k)
    out.push_back(s[k].diagonal().cwiseInverse().asDiagonal());
  return out;
}

EntryPartition compute_fixed_set(const NewtonState& state, const PenaltyParams& params) {
  EntryPartition part;
  const auto kk = state.theta.size();
  if (kk == 0) return part;
  const int p = static_cast<int>(state.theta.front().rows());
  std::vector<double> g(kk);
  for (int j = 0; j < p; ++j) {
    for (int i = 0; i < j; ++i) {
      bool all_zero = true;
      for (std::size_t k = 0; k < kk; ++k) {
        if (state.theta[k](i, j) != 0.0) all_zero = false;
        g[k] = state.gradient[k](i, j);
      }
      if (all_zero && strictly_inside(g, params))
        part.fixed.push_back({i, j});
      else
        part.free.push_back({i, j});
    }
    part.free.push_back({j, j});
  }
  return part;
}

NewtonDirection newton_direction(const NewtonState& state, const EntryPartition& partition,
                                 const CovarianceSet& s, const PenaltyParams& params,
                                 const NspgConfig& inner) {
  QuadraticModel model(PrecisionSet(state.theta), state.w, s, params, partition.free);
  NspgResult res = nspg_solve(model, inner);
  NewtonDirection dir;
  dir.inner_iterations = res.iterations;
  dir.inner_converged = res.converged;
  dir.d.reserve(state.theta.size());
  for (std::size_t k = 0; k < state.theta.size(); ++k)
    dir.d.push_back(res.theta[k] - state.theta[k]);
  dir.target = std::move(res.theta);
  return dir;
}

double line_search_decrement(const NewtonState& state, const MatrixSet& d,
                             const CovarianceSet& s, const PenaltyParams& params) {
  if (d.size() != state.theta.size()) throw StructuralError("decrement: count mismatch");
  double linear = 0.0;
  MatrixSet moved;
  moved.reserve(d.size());
  for (std::size_t k = 0; k < d.size(); ++k) {
    linear += (s[static_cast<int>(k)] - state.w[k]).cwiseProduct(d[k]).sum();
    moved.push_back(state.theta[k] + d[k]);
  }
  return linear + penalty(moved, params) - penalty(state.theta, params);
}

LineSearchResult line_search(const NewtonState& state, const NewtonDirection& direction,
                             double delta, const CovarianceSet& s,
                             const PenaltyParams& params, const SolverConfig& config) {
  if (!(delta < 0.0)) throw NumericalError("line search called with a non-negative decrement");
  const auto kk = state.theta.size();
  double beta = 1.0;
  for (int backtracks = 0; backtracks <= config.beta_floor_exponent; ++backtracks, beta *= 0.5) {
    MatrixSet candidate;
    candidate.reserve(kk);
    // At beta = 1 take the model minimizer itself so that exact zeros and
    // exact fusions from the prox survive the update bit for bit.
    for (std::size_t k = 0; k < kk; ++k)
      candidate.push_back(backtracks == 0 ? direction.target[k]
                                          : Matrix(state.theta[k] + beta * direction.d[k]));
    std::vector<Eigen::LLT<Matrix>> chol;
    chol.reserve(kk);
    bool pd = true;
    for (std::size_t k = 0; k < kk && pd; ++k) {
      chol.emplace_back(candidate[k]);
      pd = chol.back().info() == Eigen::Success;
    }
    if (!pd) continue;
    const double f = smooth_part(candidate, chol, s) + penalty(candidate, params);
    if (!std::isfinite(f)) continue;
    if (f <= state.objective + config.armijo_sigma * beta * delta) {
      LineSearchResult out;
      out.beta = beta;
      out.backtracks = backtracks;
      out.next = make_state(std::move(candidate), std::move(chol), f, s, state.iteration + 1);
      return out;
    }
  }
  std::ostringstream os;
  os << "line search failed: no step >= 2^-" << config.beta_floor_exponent
     << " gives sufficient decrease (delta = " << delta << ")";
  throw LineSearchFailure(os.str());
}

Solution solve_fmgl(const CovarianceSet& s, const PenaltyParams& params,
                    const SolverConfig& config, SolveReport* partial) {
  config.validate();
  const auto start = Clock::now();
  SolveReport report;
  report.solver = "fmgl";
  report.block_count = 1;
  report.block_sizes = {s.dim()};
  try {
    NewtonState state = NewtonState::at(diagonal_start(s), s, params);
    report.objective_trace.push_back(state.objective);
    for (int t = 0; t < config.max_newton_iters; ++t) {
      const EntryPartition part = compute_fixed_set(state, params);
      report.free_set_sizes.push_back(static_cast<long>(part.free.size()));
      const NewtonDirection dir = newton_direction(state, part, s, params, config.inner);
      report.inner_iterations.push_back(dir.inner_iterations);
      if (!dir.inner_converged)
        report.warnings.push_back("inner solver hit max_iters at outer iteration " +
                                  std::to_string(t + 1));
      if (dir.is_zero()) {
        report.converged = true;
        break;
      }
      const double delta = line_search_decrement(state, dir.d, s, params);
      const double f_scale = std::max(1.0, std::abs(state.objective));
      if (delta > 1e-12 * f_scale) {
        double theta_scale = 0.0;
        for (const auto& m : state.theta) theta_scale = std::max(theta_scale, m.cwiseAbs().maxCoeff());
        if (dir.max_abs() > 10.0 * config.inner.tol * std::max(1.0, theta_scale)) {
          std::ostringstream os;
          os << "non-negative decrement " << delta << " for a direction of size "
             << dir.max_abs() << ": inner solve is inconsistent";
          throw NumericalError(os.str());
        }
        report.converged = true;
        break;
      }
      // The predicted change is below what the objective can resolve.
      if (-delta <= 1e-13 * f_scale) {
        report.converged = true;
        break;
      }
      LineSearchResult ls = line_search(state, dir, delta, s, params, config);
      const double rel = std::abs(state.objective - ls.next.objective) / f_scale;
      report.step_sizes.push_back(ls.beta);
      report.objective_trace.push_back(ls.next.objective);
      report.outer_iterations = t + 1;
      if (config.observer)
        config.observer(IterationRecord{state, part, dir, ls.beta, delta, ls.next});
      state = std::move(ls.next);
      if (rel <= config.outer_tol) {
        report.converged = true;
        break;
      }
    }
    if (!report.converged)
      report.warnings.push_back("outer iteration limit reached");
    PrecisionSet theta(std::move(state.theta));
    report.kkt_residual = kkt_residual(theta, s, params);
    report.wall_time = seconds_since(start);
    if (partial) *partial = report;
    return Solution{std::move(theta), std::move(report)};
  } catch (const std::exception& e) {
    report.error = e.what();
    report.wall_time = seconds_since(start);
    if (partial) *partial = report;
    throw;
  }
}

namespace {

struct BlockResult {
  std::optional<PrecisionSet> theta;
  SolveReport report;
  std::exception_ptr error;
};

BlockResult solve_block(const CovarianceSet& s, const std::vector<int>& block,
                        const PenaltyParams& params, const SolverConfig& config) {
  BlockResult out;
  const auto start = Clock::now();
  try {
    if (block.size() == 1) {
      // Unpenalized diagonal: stationarity gives theta = 1 / S_ii.
      const int i = block.front();
      MatrixSet mats;
      double f = 0.0;
      for (int k = 0; k < s.count(); ++k) {
        const double sii = s[k](i, i);
        mats.push_back(Matrix::Constant(1, 1, 1.0 / sii));
        f += std::log(sii) + 1.0;
      }
      out.theta.emplace(std::move(mats));
      out.report.solver = "closed-form";
      out.report.objective_trace = {f};
      out.report.free_set_sizes = {1};
      out.report.converged = true;
    } else {
      Solution sol = solve_fmgl(extract_block(s, block), params, config, &out.report);
      out.theta.emplace(std::move(sol.theta));
    }
  } catch (...) {
    out.error = std::current_exception();
  }
  out.report.wall_time = seconds_since(start);
  return out;
}

}  // namespace

Solution solve_with_screening(const CovarianceSet& s, const PenaltyParams& params,
                              const SolverConfig& config, SolveReport* partial) {
  config.validate();
  const auto start = Clock::now();
  SolveReport report;
  report.solver = "fmgl-screened";
  try {
    const BlockPartition partition = screen(s, params);
    const int nblocks = partition.size();
    std::vector<BlockResult> results(static_cast<std::size_t>(nblocks));

    const int workers = std::min(config.threads, nblocks);
    if (workers <= 1) {
      for (int l = 0; l < nblocks; ++l)
        results[static_cast<std::size_t>(l)] = solve_block(s, partition[l], params, config);
    } else {
      // Largest blocks first keeps the pool busy; results land by block index.
      std::vector<int> order(static_cast<std::size_t>(nblocks));
      for (int l = 0; l < nblocks; ++l) order[static_cast<std::size_t>(l)] = l;
      std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return partition[a].size() > partition[b].size();
      });
      std::atomic<int> next{0};
      std::vector<std::thread> pool;
      for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
          for (int idx = next++; idx < nblocks; idx = next++) {
            const int l = order[static_cast<std::size_t>(idx)];
            results[static_cast<std::size_t>(l)] = solve_block(s, partition[l], params, config);
          }
        });
      }
      for (auto& th : pool) th.join();
    }

    // Merge: totals per outer iteration, each block's last value carried
    // forward once it has stopped.
    std::size_t trace_len = 0, free_len = 0;
    for (const auto& r : results) {
      trace_len = std::max(trace_len, r.report.objective_trace.size());
      free_len = std::max(free_len, r.report.free_set_sizes.size());
    }
    report.objective_trace.assign(trace_len, 0.0);
    report.free_set_sizes.assign(free_len, 0);
    // Inner iterations add up over blocks; the step at iteration t is the
    // smallest step any block accepted there.
    for (const auto& r : results) {
      const auto& inner = r.report.inner_iterations;
      if (report.inner_iterations.size() < inner.size()) report.inner_iterations.resize(inner.size(), 0);
      for (std::size_t t = 0; t < inner.size(); ++t) report.inner_iterations[t] += inner[t];
      const auto& steps = r.report.step_sizes;
      if (report.step_sizes.size() < steps.size()) report.step_sizes.resize(steps.size(), 1.0);
      for (std::size_t t = 0; t < steps.size(); ++t)
        report.step_sizes[t] = std::min(report.step_sizes[t], steps[t]);
    }
    report.converged = true;
    report.block_count = nblocks;
    for (int l = 0; l < nblocks; ++l) {
      const auto& r = results[static_cast<std::size_t>(l)].report;
      for (std::size_t t = 0; t < trace_len && !r.objective_trace.empty(); ++t)
        report.objective_trace[t] += r.objective_trace[std::min(t, r.objective_trace.size() - 1)];
      for (std::size_t t = 0; t < free_len && !r.free_set_sizes.empty(); ++t)
        report.free_set_sizes[t] += r.free_set_sizes[std::min(t, r.free_set_sizes.size() - 1)];
      report.outer_iterations = std::max(report.outer_iterations, r.outer_iterations);
      report.converged = report.converged && r.converged;
      report.block_sizes.push_back(static_cast<int>(partition[l].size()));
      report.block_times.push_back(r.wall_time);
      for (const auto& w : r.warnings)
        report.warnings.push_back("block " + std::to_string(l) + ": " + w);
    }
    for (int l = 0; l < nblocks; ++l) {
      auto& r = results[static_cast<std::size_t>(l)];
      if (r.error) {
        report.error = "block " + std::to_string(l) + " failed";
        std::rethrow_exception(r.error);
      }
    }
    std::vector<PrecisionSet> blocks;
    blocks.reserve(results.size());
    for (auto& r : results) blocks.push_back(std::move(*r.theta));
    PrecisionSet theta = assemble_solution(blocks, partition);
    report.kkt_residual = kkt_residual(theta, s, params);
    report.wall_time = seconds_since(start);
    if (partial) *partial = report;
    return Solution{std::move(theta), std::move(report)};
  } catch (const std::exception& e) {
    if (report.error.empty()) report.error = e.what();
    else report.error += std::string(": ") + e.what();
    report.wall_time = seconds_since(start);
    if (partial) *partial = report;
    throw;
  }
}

Solution solve(const CovarianceSet& s, const PenaltyParams& params,
               const SolverConfig& config, SolveReport* partial) {
  return config.use_screening ? solve_with_screening(s, params, config, partial)
                              : solve_fmgl(s, params, config, partial);
}

}  // namespace fmgl
