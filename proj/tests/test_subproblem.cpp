#include <doctest.h>

#include <random>

#include "fmgl/fusedprox.hpp"
#include "fmgl/subproblem.hpp"
#include "oracles.hpp"

using namespace fmgl;

namespace {

std::vector<IndexPair> all_pairs(int p) {
  std::vector<IndexPair> out;
  for (int i = 0; i < p; ++i)
    for (int j = i; j < p; ++j) out.push_back({i, j});
  return out;
}

std::vector<IndexPair> diagonal_pairs(int p) {
  std::vector<IndexPair> out;
  for (int i = 0; i < p; ++i) out.push_back({i, i});
  return out;
}

struct Fixture {
  CovarianceSet s;
  PrecisionSet theta_ref;
  MatrixSet w;

  static Fixture make(int p, int k, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    MatrixSet s_raw, theta, w;
    for (int g = 0; g < k; ++g) {
      s_raw.push_back(oracle::random_spd(p, rng));
      theta.push_back(oracle::random_spd(p, rng, 1.0));
      w.push_back(theta.back().inverse());
    }
    return Fixture{validate_covariances(s_raw), PrecisionSet(theta), w};
  }

  QuadraticModel model(const PenaltyParams& params, std::vector<IndexPair> free) const {
    return QuadraticModel(theta_ref, w, s, params, std::move(free));
  }
};

MatrixSet random_symmetric_offset(const PrecisionSet& base, double scale, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-scale, scale);
  MatrixSet out = base.matrices();
  for (auto& m : out)
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j <= i; ++j) {
        const double d = u(rng);
        m(i, j) += d;
        if (i != j) m(j, i) += d;
      }
  return out;
}

double smooth_part(const QuadraticModel& model, const MatrixSet& theta) {
  return model_objective(model, theta) - penalty(theta, model.params());
}

}  // namespace

TEST_CASE("smooth gradient matches central differences") {
  const auto fx = Fixture::make(4, 3, 31);
  const auto model = fx.model(PenaltyParams(0.1, 0.2), all_pairs(4));
  std::mt19937_64 rng(32);
  const MatrixSet theta = random_symmetric_offset(fx.theta_ref, 0.2, rng);
  const MatrixSet grad = smooth_gradient(model, theta);
  const double h = 1e-4;
  for (int k = 0; k < 3; ++k)
    for (int i = 0; i < 4; ++i)
      for (int j = i; j < 4; ++j) {
        MatrixSet up = theta, down = theta;
        up[static_cast<std::size_t>(k)](i, j) += h;
        down[static_cast<std::size_t>(k)](i, j) -= h;
        if (i != j) {
          up[static_cast<std::size_t>(k)](j, i) += h;
          down[static_cast<std::size_t>(k)](j, i) -= h;
        }
        const double fd = (smooth_part(model, up) - smooth_part(model, down)) / (2.0 * h);
        const double expected = (i == j ? 1.0 : 2.0) * grad[static_cast<std::size_t>(k)](i, j);
        CHECK(fd == doctest::Approx(expected).epsilon(1e-6));
      }
}

TEST_CASE("model quadratic equals the explicit Kronecker form") {
  const auto fx = Fixture::make(4, 2, 41);
  const auto model = fx.model(PenaltyParams(0.3, 0.4), all_pairs(4));
  std::mt19937_64 rng(42);
  for (int rep = 0; rep < 5; ++rep) {
    const MatrixSet theta = random_symmetric_offset(fx.theta_ref, 0.5, rng);
    double expected = model.smooth_value();
    for (int k = 0; k < 2; ++k) {
      const auto ku = static_cast<std::size_t>(k);
      expected += oracle::kron_quadratic(fx.w[ku], theta[ku] - fx.theta_ref[k], fx.s[k] - fx.w[ku]);
    }
    CHECK(smooth_part(model, theta) == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("identity reference gives gradient D + S - I") {
  std::mt19937_64 rng(51);
  const auto s = validate_covariances(MatrixSet{oracle::random_spd(5, rng), oracle::random_spd(5, rng)});
  const PrecisionSet ref(MatrixSet(2, Matrix::Identity(5, 5)));
  const QuadraticModel model(ref, MatrixSet(2, Matrix::Identity(5, 5)), s, PenaltyParams(0.1, 0.1), all_pairs(5));
  const MatrixSet theta = random_symmetric_offset(ref, 0.3, rng);
  const MatrixSet grad = smooth_gradient(model, theta);
  for (int k = 0; k < 2; ++k) {
    const auto ku = static_cast<std::size_t>(k);
    const Matrix expected = theta[ku] - 2.0 * Matrix::Identity(5, 5) + s[k];
    CHECK((grad[ku] - expected).cwiseAbs().maxCoeff() <= 1e-14);
  }
}

TEST_CASE("smooth gradient is zero outside the free set") {
  const auto fx = Fixture::make(4, 2, 61);
  const auto model = fx.model(PenaltyParams(0.1, 0.1), diagonal_pairs(4));
  const MatrixSet grad = smooth_gradient(model, fx.theta_ref.matrices());
  for (const auto& g : grad) {
    CHECK(g.diagonal().cwiseAbs().maxCoeff() > 0.0);
    CHECK((g - Matrix(g.diagonal().asDiagonal())).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("prox_map closed forms") {
  SUBCASE("single graph is a soft threshold per entry") {
    const auto fx = Fixture::make(4, 1, 71);
    const auto params = PenaltyParams::independent(0.3);
    const auto model = fx.model(params, all_pairs(4));
    std::mt19937_64 rng(72);
    const MatrixSet theta = random_symmetric_offset(fx.theta_ref, 0.3, rng);
    const MatrixSet grad = smooth_gradient(model, theta);
    const double t = 0.7;
    const MatrixSet out = prox_map(theta, grad, t, model);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) {
        const double moved = theta[0](i, j) - t * grad[0](i, j);
        const double expected = i == j ? moved : soft_threshold(moved, t * 0.3);
        CHECK(out[0](i, j) == doctest::Approx(expected).epsilon(1e-14));
      }
  }
  SUBCASE("a tiny step barely moves the iterate") {
    const auto fx = Fixture::make(5, 3, 73);
    const auto model = fx.model(PenaltyParams(0.2, 0.2), all_pairs(5));
    const MatrixSet grad = smooth_gradient(model, fx.theta_ref.matrices());
    const MatrixSet out = prox_map(fx.theta_ref.matrices(), grad, 1e-12, model);
    for (int k = 0; k < 3; ++k)
      CHECK((out[static_cast<std::size_t>(k)] - fx.theta_ref[k]).cwiseAbs().maxCoeff() <= 1e-10);
  }
  SUBCASE("fixed entries are returned unchanged") {
    const auto fx = Fixture::make(5, 2, 74);
    const auto model = fx.model(PenaltyParams(0.2, 0.2), diagonal_pairs(5));
    MatrixSet grad(2, Matrix::Constant(5, 5, 3.0));
    const MatrixSet out = prox_map(fx.theta_ref.matrices(), grad, 0.5, model);
    for (int k = 0; k < 2; ++k)
      for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j)
          if (i != j) CHECK(out[static_cast<std::size_t>(k)](i, j) == fx.theta_ref[k](i, j));
  }
  SUBCASE("step must be positive") {
    const auto fx = Fixture::make(3, 2, 75);
    const auto model = fx.model(PenaltyParams(0.2, 0.2), all_pairs(3));
    CHECK_THROWS_AS(prox_map(fx.theta_ref.matrices(), fx.theta_ref.matrices(), 0.0, model), ParameterError);
  }
}

TEST_CASE("quadratic model construction errors") {
  const auto fx = Fixture::make(3, 2, 81);
  MatrixSet bad_w = fx.w;
  bad_w[0] *= 2.0;
  CHECK_THROWS_AS(QuadraticModel(fx.theta_ref, bad_w, fx.s, PenaltyParams(0.1, 0.1), all_pairs(3)),
                  NumericalError);
  CHECK_THROWS_AS(QuadraticModel(fx.theta_ref, fx.w, fx.s, PenaltyParams(0.1, 0.1), {{0, 3}}),
                  StructuralError);
  CHECK_THROWS_AS(QuadraticModel(fx.theta_ref, MatrixSet{fx.w[0]}, fx.s, PenaltyParams(0.1, 0.1), {}),
                  StructuralError);
  // Reversed pairs are normalized.
  const QuadraticModel model(fx.theta_ref, fx.w, fx.s, PenaltyParams(0.1, 0.1), {{2, 0}, {0, 2}});
  REQUIRE(model.free_set().size() == 1);
  CHECK(model.free_set()[0] == IndexPair{0, 2});
}

TEST_CASE("nspg reaches the minimum found by a long proximal gradient run") {
  for (int kk : {1, 2, 4}) {
    const auto fx = Fixture::make(5, kk, 90 + static_cast<std::uint64_t>(kk));
    const auto model = fx.model(PenaltyParams(0.15, 0.25), all_pairs(5));

    NspgConfig cfg;
    cfg.tol = 1e-12;
    cfg.max_iters = 20000;
    const auto res = nspg_solve(model, cfg);
    CHECK(res.converged);

    // Reference: fixed step 1/L, L bounding the Hessian W (x) W.
    double lip = 0.0;
    for (const auto& w : fx.w) {
      const double top = Eigen::SelfAdjointEigenSolver<Matrix>(w).eigenvalues().maxCoeff();
      lip = std::max(lip, top * top);
    }
    MatrixSet x = fx.theta_ref.matrices();
    for (int it = 0; it < 20000; ++it) x = prox_map(x, smooth_gradient(model, x), 1.0 / lip, model);

    const double ref_value = model_objective(model, x);
    CHECK(res.model_value <= ref_value + 1e-9);
    CHECK(model_objective(model, res.theta) == doctest::Approx(res.model_value).epsilon(1e-12));
    for (int k = 0; k < kk; ++k) {
      const auto ku = static_cast<std::size_t>(k);
      CHECK((res.theta[ku] - x[ku]).cwiseAbs().maxCoeff() <= 1e-5);
      CHECK((res.theta[ku] - res.theta[ku].transpose()).cwiseAbs().maxCoeff() == 0.0);
    }
  }
}

TEST_CASE("nspg keeps fixed entries at their reference values") {
  const auto fx = Fixture::make(6, 3, 101);
  std::vector<IndexPair> free = diagonal_pairs(6);
  for (int i = 0; i < 6; ++i)
    for (int j = i + 1; j < 6; ++j)
      if ((i + j) % 2 == 0) free.push_back({i, j});
  const auto model = fx.model(PenaltyParams(0.1, 0.1), free);
  const auto res = nspg_solve(model, NspgConfig{});
  for (int k = 0; k < 3; ++k)
    for (int i = 0; i < 6; ++i)
      for (int j = i + 1; j < 6; ++j)
        if ((i + j) % 2 != 0) {
          CHECK(res.theta[static_cast<std::size_t>(k)](i, j) == fx.theta_ref[k](i, j));
          CHECK(res.theta[static_cast<std::size_t>(k)](j, i) == fx.theta_ref[k](j, i));
        }
  CHECK(res.model_value <= model_objective(model, fx.theta_ref.matrices()));
}

TEST_CASE("nspg with an empty free set returns the reference") {
  const auto fx = Fixture::make(3, 2, 111);
  const auto model = fx.model(PenaltyParams(0.1, 0.1), {});
  const auto res = nspg_solve(model, NspgConfig{});
  CHECK(res.converged);
  CHECK(res.theta[0] == fx.theta_ref[0]);
  CHECK(res.theta[1] == fx.theta_ref[1]);
}

TEST_CASE("nspg config validation") {
  NspgConfig cfg;
  cfg.tol = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ParameterError);
  cfg = NspgConfig{};
  cfg.history_len = 0;
  CHECK_THROWS_AS(cfg.validate(), ParameterError);
  cfg = NspgConfig{};
  cfg.step_max = cfg.step_min / 2.0;
  CHECK_THROWS_AS(cfg.validate(), ParameterError);
}
