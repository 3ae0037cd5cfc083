#include <doctest.h>

#include <mutex>
#include <random>

#include "fmgl/datagen.hpp"
#include "fmgl/newton.hpp"
#include "oracles.hpp"

using namespace fmgl;

namespace {

bool contains(const std::vector<IndexPair>& v, IndexPair e) {
  return std::find(v.begin(), v.end(), e) != v.end();
}

CovarianceSet block_instance(int p, int k, int l, std::uint64_t seed, long n) {
  const auto truth = gen_block_model(p, k, l, seed);
  return sample_gaussian(truth.theta_true, n, seed + 1);
}

SolverConfig tight() {
  SolverConfig cfg;
  cfg.outer_tol = 1e-10;
  cfg.inner.tol = 1e-10;
  cfg.inner.max_iters = 5000;
  return cfg;
}

}  // namespace

TEST_CASE("fixed set at the diagonal start") {
  Matrix a = Matrix::Identity(3, 3);
  a(0, 1) = a(1, 0) = 0.5;
  a(0, 2) = a(2, 0) = 0.01;
  const auto s = validate_covariances(MatrixSet{a, a});
  const auto state = NewtonState::at(diagonal_start(s), s, PenaltyParams(0.1, 0.1));
  const auto part = compute_fixed_set(state, PenaltyParams(0.1, 0.1));
  CHECK(contains(part.free, {0, 1}));
  CHECK(contains(part.fixed, {0, 2}));
  CHECK(contains(part.fixed, {1, 2}));
  for (int i = 0; i < 3; ++i) CHECK(contains(part.free, {i, i}));
  CHECK(part.free.size() + part.fixed.size() == 6);
}

TEST_CASE("fixed set uses strict comparison and requires zeros in every graph") {
  Matrix a = Matrix::Identity(2, 2);
  a(0, 1) = a(1, 0) = 0.25;
  const auto s = validate_covariances(MatrixSet{a, a});
  // Full sum 0.5 sits exactly at K lambda1 = 0.5.
  const PenaltyParams params(0.25, 0.5);
  const auto at_boundary = compute_fixed_set(NewtonState::at(diagonal_start(s), s, params), params);
  CHECK(contains(at_boundary.free, {0, 1}));

  const PenaltyParams loose(0.3, 0.5);
  CHECK(contains(compute_fixed_set(NewtonState::at(diagonal_start(s), s, loose), loose).fixed, {0, 1}));

  MatrixSet theta = diagonal_start(s);
  theta[1](0, 1) = theta[1](1, 0) = 1e-3;
  CHECK(contains(compute_fixed_set(NewtonState::at(theta, s, loose), loose).free, {0, 1}));
}

TEST_CASE("decrement hand case") {
  // theta = I, S_12 = 0.5, D_12 = -1, lambda1 = 0.25:
  // tr((S - W) D) = 2 * 0.5 * -1 = -1 and the penalty grows by 0.25 * 2 = 0.5.
  Matrix a = Matrix::Identity(2, 2);
  a(0, 1) = a(1, 0) = 0.5;
  const auto s = validate_covariances(MatrixSet{a});
  const PenaltyParams params(0.25, 0.1);
  const auto state = NewtonState::at(MatrixSet{Matrix::Identity(2, 2)}, s, params);
  Matrix d = Matrix::Zero(2, 2);
  d(0, 1) = d(1, 0) = -1.0;
  CHECK(line_search_decrement(state, MatrixSet{d}, s, params) == doctest::Approx(-0.5).epsilon(1e-14));
}

TEST_CASE("line search takes the first positive definite Armijo step") {
  // theta = I, S_12 = 0.5, D_12 = -1.5. At beta = 1 the candidate is indefinite,
  // at 1/2 the objective rises (2.2267 > 2), at 1/4 it falls to 1.8516.
  Matrix a = Matrix::Identity(2, 2);
  a(0, 1) = a(1, 0) = 0.5;
  const auto s = validate_covariances(MatrixSet{a});
  const PenaltyParams params(0.1, 0.1);
  const auto state = NewtonState::at(MatrixSet{Matrix::Identity(2, 2)}, s, params);
  NewtonDirection dir;
  Matrix d = Matrix::Zero(2, 2);
  d(0, 1) = d(1, 0) = -1.5;
  dir.d = {d};
  dir.target = {Matrix(Matrix::Identity(2, 2) + d)};
  const double delta = line_search_decrement(state, dir.d, s, params);
  CHECK(delta == doctest::Approx(-1.2));

  SolverConfig cfg;
  const auto ls = line_search(state, dir, delta, s, params, cfg);
  CHECK(ls.beta == 0.25);
  CHECK(ls.backtracks == 2);
  Matrix expected = Matrix::Identity(2, 2) + 0.25 * d;
  CHECK(ls.next.objective ==
        doctest::Approx(oracle::objective({expected}, {a}, 0.1, 0.1)).epsilon(1e-12));
  CHECK(ls.next.objective < state.objective);

  cfg.beta_floor_exponent = 1;
  CHECK_THROWS_AS(line_search(state, dir, delta, s, params, cfg), LineSearchFailure);
  CHECK_THROWS_AS(line_search(state, dir, 0.0, s, params, SolverConfig{}), NumericalError);
}

TEST_CASE("larger sigma never accepts a longer step") {
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 10; ++rep) {
    const auto s = validate_covariances(MatrixSet{oracle::random_spd(6, rng, 0.2), oracle::random_spd(6, rng, 0.2)});
    const PenaltyParams params(0.05, 0.05);
    const auto state = NewtonState::at(diagonal_start(s), s, params);
    const auto part = compute_fixed_set(state, params);
    const auto dir = newton_direction(state, part, s, params, NspgConfig{});
    const double delta = line_search_decrement(state, dir.d, s, params);
    REQUIRE(delta < 0.0);
    double prev = 2.0;
    for (double sigma : {1e-4, 1e-3, 0.1, 0.3, 0.49}) {
      SolverConfig cfg;
      cfg.armijo_sigma = sigma;
      const double beta = line_search(state, dir, delta, s, params, cfg).beta;
      CHECK(beta <= prev);
      prev = beta;
    }
  }
}

TEST_CASE("newton direction is a descent direction") {
  std::mt19937_64 rng(6);
  const auto s = validate_covariances(MatrixSet{oracle::random_spd(5, rng, 0.2), oracle::random_spd(5, rng, 0.2), oracle::random_spd(5, rng, 0.2)});
  const PenaltyParams params(0.05, 0.1);
  const auto state = NewtonState::at(diagonal_start(s), s, params);
  const auto part = compute_fixed_set(state, params);
  const auto dir = newton_direction(state, part, s, params, NspgConfig{});
  CHECK_FALSE(dir.is_zero());
  const double delta = line_search_decrement(state, dir.d, s, params);
  CHECK(delta < 0.0);
  for (const auto& e : part.fixed)
    for (const auto& dk : dir.d) CHECK(dk(e.i, e.j) == 0.0);
  MatrixSet small = state.theta;
  for (std::size_t k = 0; k < small.size(); ++k) small[k] += 1e-4 * dir.d[k];
  CHECK(objective(PrecisionSet(small), s, params) < state.objective);
}

TEST_CASE("identity covariances give the identity") {
  const auto s = validate_covariances(MatrixSet(2, Matrix::Identity(4, 4)));
  const auto sol = solve_fmgl(s, PenaltyParams(0.1, 0.1), SolverConfig{});
  CHECK(sol.theta[0] == Matrix::Identity(4, 4));
  CHECK(sol.theta[1] == Matrix::Identity(4, 4));
  CHECK(sol.report.converged);
  CHECK(sol.report.outer_iterations == 0);
  CHECK(sol.report.kkt_residual == 0.0);
}

TEST_CASE("solver trace is strictly decreasing and iterates stay positive definite") {
  const auto s = block_instance(30, 3, 3, 11, 150);
  const PenaltyParams params(0.05, 0.05);
  SolverConfig cfg;
  int calls = 0;
  cfg.observer = [&](const IterationRecord& rec) {
    ++calls;
    CHECK(rec.after.objective < rec.before.objective);
    CHECK(rec.decrement < 0.0);
    for (const auto& m : rec.after.theta) CHECK(Eigen::LLT<Matrix>(m).info() == Eigen::Success);
    for (const auto& e : rec.partition.fixed)
      for (const auto& m : rec.after.theta) CHECK(m(e.i, e.j) == 0.0);
  };
  const auto sol = solve_fmgl(s, params, cfg);
  CHECK(sol.report.converged);
  CHECK(calls == sol.report.outer_iterations);
  const auto& tr = sol.report.objective_trace;
  REQUIRE(tr.size() == static_cast<std::size_t>(sol.report.outer_iterations) + 1);
  for (std::size_t t = 1; t < tr.size(); ++t) CHECK(tr[t] < tr[t - 1]);
  CHECK(sol.report.final_objective() == doctest::Approx(objective(sol.theta, s, params)).epsilon(1e-12));
  // Sparse problem: the first free set is well below the full triangle.
  CHECK(sol.report.free_set_sizes.front() < 30 * 31 / 2);
}

TEST_CASE("kkt residual shrinks as tolerances tighten") {
  const auto s = block_instance(20, 2, 2, 21, 100);
  const PenaltyParams params(0.04, 0.06);
  double prev = std::numeric_limits<double>::infinity();
  for (double tol : {1e-2, 1e-5, 1e-9}) {
    SolverConfig cfg;
    cfg.outer_tol = tol;
    cfg.inner.tol = tol;
    cfg.inner.max_iters = 5000;
    const auto sol = solve_fmgl(s, params, cfg);
    CHECK(sol.report.kkt_residual <= prev * 1.0000001);
    prev = sol.report.kkt_residual;
  }
  CHECK(prev <= 1e-6);
}

TEST_CASE("screened and unscreened solutions agree") {
  std::mt19937_64 rng(31);
  for (int rep = 0; rep < 6; ++rep) {
    const int p = 12 + 2 * rep, k = 2 + rep % 3;
    const auto s = block_instance(p, k, 3, 100 + static_cast<std::uint64_t>(rep), 20 * p);
    const PenaltyParams params(0.08, 0.05);
    auto cfg = tight();
    const auto plain = solve_fmgl(s, params, cfg);
    cfg.use_screening = true;
    const auto screened = solve(s, params, cfg);
    for (int g = 0; g < k; ++g)
      CHECK((plain.theta[g] - screened.theta[g]).cwiseAbs().maxCoeff() <= 1e-6);
    CHECK(screened.report.final_objective() ==
          doctest::Approx(plain.report.final_objective()).epsilon(1e-9));

    // The unscreened optimum is block diagonal with respect to the partition.
    const auto labels = screen(s, params).labels();
    for (int g = 0; g < k; ++g)
      for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j)
          if (labels[static_cast<std::size_t>(i)] != labels[static_cast<std::size_t>(j)])
            CHECK(plain.theta[g](i, j) == 0.0);
  }
}

TEST_CASE("all singleton blocks give the inverse diagonal") {
  const auto s = block_instance(10, 3, 2, 41, 50);
  SolverConfig cfg;
  cfg.use_screening = true;
  const PenaltyParams params(100.0, 0.1);
  const auto sol = solve(s, params, cfg);
  CHECK(sol.report.block_count == 10);
  for (int k = 0; k < 3; ++k)
    for (int i = 0; i < 10; ++i)
      for (int j = 0; j < 10; ++j)
        CHECK(sol.theta[k](i, j) == (i == j ? 1.0 / s[k](i, i) : 0.0));
  const auto plain = solve_fmgl(s, params, SolverConfig{});
  CHECK(sol.report.final_objective() == doctest::Approx(plain.report.final_objective()).epsilon(1e-12));
}

TEST_CASE("threaded block solves match the sequential result") {
  const auto s = block_instance(40, 2, 4, 51, 400);
  const PenaltyParams params(0.06, 0.05);
  SolverConfig cfg;
  cfg.use_screening = true;
  const auto one = solve(s, params, cfg);
  REQUIRE(one.report.block_count > 1);
  cfg.threads = 4;
  std::mutex mu;
  int calls = 0;
  cfg.observer = [&](const IterationRecord&) {
    std::lock_guard<std::mutex> lock(mu);
    ++calls;
  };
  const auto many = solve(s, params, cfg);
  CHECK(calls > 0);
  for (int k = 0; k < 2; ++k) CHECK(one.theta[k] == many.theta[k]);
  CHECK(one.report.objective_trace == many.report.objective_trace);
}

TEST_CASE("independent mode equals separate single-graph solves") {
  const auto s = block_instance(15, 2, 3, 61, 60);
  const auto cfg = tight();
  const auto joint = solve_fmgl(s, PenaltyParams::independent(0.07), cfg);
  for (int k = 0; k < 2; ++k) {
    const CovarianceSet one(MatrixSet{s[k]});
    const auto alone = solve_fmgl(one, PenaltyParams(0.07, 1.0), cfg);
    CHECK((joint.theta[k] - alone.theta[0]).cwiseAbs().maxCoeff() <= 1e-6);
  }
}

TEST_CASE("fused penalty pulls graphs together") {
  const auto s = block_instance(12, 3, 2, 71, 40);
  const auto weak = solve_fmgl(s, PenaltyParams(0.05, 1e-4), tight());
  const auto strong = solve_fmgl(s, PenaltyParams(0.05, 10.0), tight());
  double spread = 0.0;
  for (int i = 0; i < 12; ++i)
    for (int j = 0; j < 12; ++j)
      if (i != j) spread = std::max(spread, std::abs(strong.theta[0](i, j) - strong.theta[2](i, j)));
  CHECK(spread <= 1e-8);
  double weak_spread = 0.0;
  for (int i = 0; i < 12; ++i)
    for (int j = 0; j < 12; ++j)
      if (i != j) weak_spread = std::max(weak_spread, std::abs(weak.theta[0](i, j) - weak.theta[2](i, j)));
  CHECK(weak_spread > 1e-3);
}

TEST_CASE("solver config validation and partial reports") {
  SolverConfig cfg;
  cfg.armijo_sigma = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ParameterError);
  cfg = SolverConfig{};
  cfg.threads = 0;
  CHECK_THROWS_AS(cfg.validate(), ParameterError);
  cfg = SolverConfig{};
  cfg.max_newton_iters = 0;
  CHECK_THROWS_AS(cfg.validate(), ParameterError);

  // An iteration cap leaves a warning and converged = false.
  const auto s = block_instance(20, 2, 2, 81, 40);
  cfg = SolverConfig{};
  cfg.max_newton_iters = 1;
  cfg.outer_tol = 1e-14;
  SolveReport partial;
  const auto sol = solve_fmgl(s, PenaltyParams(0.02, 0.02), cfg, &partial);
  CHECK_FALSE(sol.report.converged);
  CHECK_FALSE(sol.report.warnings.empty());
  CHECK(partial.objective_trace == sol.report.objective_trace);
}
