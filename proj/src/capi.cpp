#include "fmgl/fmgl.h"

#include <cmath>
#include <cstring>
#include <new>
#include <optional>
#include <string>

#include <json.hpp>

#include "fmgl/admm.hpp"
#include "fmgl/datagen.hpp"
#include "fmgl/newton.hpp"
#include "fmgl/screening.hpp"

struct fmgl_covariance {
  fmgl::CovarianceSet value;
};

struct fmgl_precision {
  fmgl::PrecisionSet value;
};

struct fmgl_report {
  fmgl::SolveReport value;
  std::string json;
};

struct fmgl_partition {
  fmgl::BlockPartition value;
};

struct fmgl_truth {
  fmgl::GroundTruth value;
  fmgl_precision theta;
  std::optional<fmgl_partition> partition;
};

namespace {

thread_local std::string last_error;

fmgl_status status_of(fmgl::ErrorKind kind) {
  switch (kind) {
    case fmgl::ErrorKind::parameter: return FMGL_ERR_PARAMETER;
    case fmgl::ErrorKind::structural: return FMGL_ERR_STRUCTURAL;
    case fmgl::ErrorKind::data: return FMGL_ERR_DATA;
    case fmgl::ErrorKind::numerical: return FMGL_ERR_NUMERICAL;
  }
  return FMGL_ERR_INTERNAL;
}

template <typename F>
fmgl_status guarded(F&& body) {
  try {
    body();
    last_error.clear();
    return FMGL_OK;
  } catch (const fmgl::Error& e) {
    last_error = e.what();
    return status_of(e.kind());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return FMGL_ERR_INTERNAL;
  } catch (const std::exception& e) {
    last_error = e.what();
    return FMGL_ERR_INTERNAL;
  }
}

void require(bool ok, const char* what) {
  if (!ok) throw fmgl::ParameterError(what);
}

fmgl::MatrixSet unpack(const double* data, int p, int k) {
  require(data != nullptr, "null data pointer");
  require(p > 0 && k > 0, "p and k must be positive");
  fmgl::MatrixSet out;
  const std::size_t stride = static_cast<std::size_t>(p) * static_cast<std::size_t>(p);
  for (int g = 0; g < k; ++g)
    out.emplace_back(Eigen::Map<const fmgl::Matrix>(data + stride * static_cast<std::size_t>(g), p, p));
  return out;
}

fmgl::PenaltyParams make_params(double lambda1, double lambda2) {
  if (lambda2 == 0.0) return fmgl::PenaltyParams::independent(lambda1);
  return fmgl::PenaltyParams(lambda1, lambda2);
}

fmgl::SolverConfig to_config(const fmgl_solver_config* c) {
  const fmgl_solver_config d = c ? *c : fmgl_solver_config_default();
  fmgl::SolverConfig out;
  out.outer_tol = d.outer_tol;
  out.max_newton_iters = d.max_newton_iters;
  out.armijo_sigma = d.armijo_sigma;
  out.beta_floor_exponent = d.beta_floor_exponent;
  out.inner.tol = d.inner_tol;
  out.inner.max_iters = d.inner_max_iters;
  out.inner.history_len = d.history_len;
  out.inner.step_min = d.step_min;
  out.inner.step_max = d.step_max;
  out.use_screening = d.use_screening != 0;
  out.threads = d.threads;
  return out;
}

std::string report_json(const fmgl::SolveReport& r) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["solver"] = r.solver;
  j["outer_iterations"] = r.outer_iterations;
  j["converged"] = r.converged;
  j["objective_trace"] = r.objective_trace;
  j["final_objective"] = r.final_objective();
  j["free_set_sizes"] = r.free_set_sizes;
  j["step_sizes"] = r.step_sizes;
  j["inner_iterations"] = r.inner_iterations;
  j["kkt_residual"] = r.kkt_residual;
  j["wall_time"] = r.wall_time;
  j["block_count"] = r.block_count;
  j["block_sizes"] = r.block_sizes;
  j["block_times"] = r.block_times;
  j["warnings"] = r.warnings;
  if (r.error.empty())
    j["error"] = nullptr;
  else
    j["error"] = r.error;
  return j.dump(2);
}

fmgl_report* new_report(fmgl::SolveReport r) {
  auto* out = new fmgl_report{std::move(r), {}};
  out->json = report_json(out->value);
  return out;
}

}  // namespace

extern "C" {

const char* fmgl_version(void) { return "1.0.0"; }

const char* fmgl_last_error(void) { return last_error.c_str(); }

fmgl_status fmgl_covariance_create(const double* data, int p, int k, double perturbation,
                                   long n_samples, fmgl_covariance** out) {
  return guarded([&] {
    require(out != nullptr, "null output pointer");
    const double eps = perturbation > 0.0 ? perturbation : fmgl::kDefaultPerturbation;
    std::optional<long> n;
    if (n_samples > 0) n = n_samples;
    *out = new fmgl_covariance{fmgl::validate_covariances(unpack(data, p, k), eps, n)};
  });
}

fmgl_status fmgl_covariance_from_samples(const double* const* samples, const long* n, int p,
                                         int k, int center, fmgl_covariance** out) {
  return guarded([&] {
    require(out != nullptr && samples != nullptr && n != nullptr, "null pointer argument");
    require(p > 0 && k > 0, "p and k must be positive");
    fmgl::MatrixSet mats;
    long n_common = n[0];
    for (int g = 0; g < k; ++g) {
      require(samples[g] != nullptr && n[g] > 0, "each graph needs at least one sample");
      using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
      const fmgl::Matrix x = Eigen::Map<const RowMajor>(samples[g], n[g], p);
      mats.push_back(fmgl::sample_covariance(x, center != 0));
      if (n[g] != n_common) n_common = -1;
    }
    std::optional<long> count;
    if (n_common > 0) count = n_common;
    *out = new fmgl_covariance{fmgl::validate_covariances(std::move(mats), fmgl::kDefaultPerturbation, count)};
  });
}

void fmgl_covariance_free(fmgl_covariance* s) { delete s; }
int fmgl_covariance_dim(const fmgl_covariance* s) { return s ? s->value.dim() : 0; }
int fmgl_covariance_count(const fmgl_covariance* s) { return s ? s->value.count() : 0; }

fmgl_status fmgl_covariance_get(const fmgl_covariance* s, int k, double* out) {
  return guarded([&] {
    require(s && out, "null pointer argument");
    require(k >= 0 && k < s->value.count(), "graph index out of range");
    const auto& m = s->value[k];
    std::memcpy(out, m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
  });
}

fmgl_status fmgl_precision_create(const double* data, int p, int k, fmgl_precision** out) {
  return guarded([&] {
    require(out != nullptr, "null output pointer");
    *out = new fmgl_precision{fmgl::PrecisionSet(unpack(data, p, k))};
  });
}

void fmgl_precision_free(fmgl_precision* theta) { delete theta; }
int fmgl_precision_dim(const fmgl_precision* theta) { return theta ? theta->value.dim() : 0; }
int fmgl_precision_count(const fmgl_precision* theta) { return theta ? theta->value.count() : 0; }

fmgl_status fmgl_precision_get(const fmgl_precision* theta, int k, double* out) {
  return guarded([&] {
    require(theta && out, "null pointer argument");
    require(k >= 0 && k < theta->value.count(), "graph index out of range");
    const auto& m = theta->value[k];
    std::memcpy(out, m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
  });
}

long fmgl_precision_nonzeros(const fmgl_precision* theta, double zero_tol) {
  return theta ? fmgl::count_nonzeros(theta->value, zero_tol) : 0;
}

long fmgl_precision_edges(const fmgl_precision* theta, double zero_tol) {
  return theta ? fmgl::count_edges(theta->value, zero_tol) : 0;
}

fmgl_solver_config fmgl_solver_config_default(void) {
  const fmgl::SolverConfig d;
  fmgl_solver_config c;
  c.outer_tol = d.outer_tol;
  c.max_newton_iters = d.max_newton_iters;
  c.armijo_sigma = d.armijo_sigma;
  c.beta_floor_exponent = d.beta_floor_exponent;
  c.inner_tol = d.inner.tol;
  c.inner_max_iters = d.inner.max_iters;
  c.history_len = d.inner.history_len;
  c.step_min = d.inner.step_min;
  c.step_max = d.inner.step_max;
  c.use_screening = d.use_screening ? 1 : 0;
  c.threads = d.threads;
  return c;
}

fmgl_admm_config fmgl_admm_config_default(void) {
  const fmgl::AdmmConfig d;
  fmgl_admm_config c;
  c.rho = d.rho;
  c.max_iters = d.max_iters;
  c.has_target_objective = 0;
  c.target_objective = 0.0;
  c.primal_tol = d.primal_tol;
  c.dual_tol = d.dual_tol;
  return c;
}

fmgl_status fmgl_solve(const fmgl_covariance* s, double lambda1, double lambda2,
                       const fmgl_solver_config* config, fmgl_precision** theta_out,
                       fmgl_report** report_out) {
  if (theta_out) *theta_out = nullptr;
  if (report_out) *report_out = nullptr;
  fmgl::SolveReport partial;
  bool started = false;
  const fmgl_status st = guarded([&] {
    require(s && theta_out, "null pointer argument");
    const auto params = make_params(lambda1, lambda2);
    const auto cfg = to_config(config);
    started = true;
    auto sol = fmgl::solve(s->value, params, cfg, &partial);
    *theta_out = new fmgl_precision{std::move(sol.theta)};
    if (report_out) *report_out = new_report(std::move(sol.report));
  });
  if (st != FMGL_OK && started && report_out) *report_out = new_report(std::move(partial));
  return st;
}

fmgl_status fmgl_solve_admm(const fmgl_covariance* s, double lambda1, double lambda2,
                            const fmgl_admm_config* config, fmgl_precision** theta_out,
                            fmgl_report** report_out) {
  if (theta_out) *theta_out = nullptr;
  if (report_out) *report_out = nullptr;
  fmgl::SolveReport partial;
  bool started = false;
  const fmgl_status st = guarded([&] {
    require(s && theta_out, "null pointer argument");
    const auto params = make_params(lambda1, lambda2);
    const fmgl_admm_config d = config ? *config : fmgl_admm_config_default();
    fmgl::AdmmConfig cfg;
    cfg.rho = d.rho;
    cfg.max_iters = d.max_iters;
    if (d.has_target_objective) cfg.target_objective = d.target_objective;
    cfg.primal_tol = d.primal_tol;
    cfg.dual_tol = d.dual_tol;
    started = true;
    auto sol = fmgl::admm_solve(s->value, params, cfg, &partial);
    *theta_out = new fmgl_precision{std::move(sol.theta)};
    if (report_out) *report_out = new_report(std::move(sol.report));
  });
  if (st != FMGL_OK && started && report_out) *report_out = new_report(std::move(partial));
  return st;
}

fmgl_status fmgl_objective(const fmgl_precision* theta, const fmgl_covariance* s,
                           double lambda1, double lambda2, double* out) {
  return guarded([&] {
    require(theta && s && out, "null pointer argument");
    *out = fmgl::objective(theta->value, s->value, make_params(lambda1, lambda2));
  });
}

fmgl_status fmgl_kkt_residual(const fmgl_precision* theta, const fmgl_covariance* s,
                              double lambda1, double lambda2, double* out) {
  return guarded([&] {
    require(theta && s && out, "null pointer argument");
    *out = fmgl::kkt_residual(theta->value, s->value, make_params(lambda1, lambda2));
  });
}

void fmgl_report_free(fmgl_report* r) { delete r; }
int fmgl_report_outer_iterations(const fmgl_report* r) { return r ? r->value.outer_iterations : 0; }
int fmgl_report_converged(const fmgl_report* r) { return r && r->value.converged ? 1 : 0; }
double fmgl_report_final_objective(const fmgl_report* r) {
  return r ? r->value.final_objective() : std::nan("");
}
double fmgl_report_kkt_residual(const fmgl_report* r) { return r ? r->value.kkt_residual : std::nan(""); }
double fmgl_report_wall_time(const fmgl_report* r) { return r ? r->value.wall_time : 0.0; }
int fmgl_report_block_count(const fmgl_report* r) { return r ? r->value.block_count : 0; }
size_t fmgl_report_trace_length(const fmgl_report* r) {
  return r ? r->value.objective_trace.size() : 0;
}
double fmgl_report_trace_at(const fmgl_report* r, size_t i) {
  if (!r || i >= r->value.objective_trace.size()) return std::nan("");
  return r->value.objective_trace[i];
}
const char* fmgl_report_json(const fmgl_report* r) { return r ? r->json.c_str() : ""; }

fmgl_status fmgl_screen(const fmgl_covariance* s, double lambda1, double lambda2,
                        fmgl_partition** out) {
  return guarded([&] {
    require(s && out, "null pointer argument");
    *out = new fmgl_partition{fmgl::screen(s->value, fmgl::PenaltyParams(lambda1, lambda2))};
  });
}

void fmgl_partition_free(fmgl_partition* part) { delete part; }
int fmgl_partition_dim(const fmgl_partition* part) { return part ? part->value.dim() : 0; }
int fmgl_partition_block_count(const fmgl_partition* part) { return part ? part->value.size() : 0; }
int fmgl_partition_block_size(const fmgl_partition* part, int block) {
  if (!part || block < 0 || block >= part->value.size()) return 0;
  return static_cast<int>(part->value[block].size());
}

fmgl_status fmgl_partition_block(const fmgl_partition* part, int block, int* out) {
  return guarded([&] {
    require(part && out, "null pointer argument");
    require(block >= 0 && block < part->value.size(), "block index out of range");
    const auto& b = part->value[block];
    std::copy(b.begin(), b.end(), out);
  });
}

int fmgl_partition_max_block_size(const fmgl_partition* part) {
  return part ? part->value.max_block_size() : 0;
}

fmgl_status fmgl_generate_block(int p, int k, int l, uint64_t seed, double nnz_factor,
                                fmgl_truth** out) {
  return guarded([&] {
    require(out != nullptr, "null output pointer");
    auto truth = fmgl::gen_block_model(p, k, l, seed, nnz_factor > 0.0 ? nnz_factor : 10.0);
    fmgl_precision theta{truth.theta_true};
    std::optional<fmgl_partition> part;
    if (truth.partition) part.emplace(fmgl_partition{*truth.partition});
    *out = new fmgl_truth{std::move(truth), std::move(theta), std::move(part)};
  });
}

fmgl_status fmgl_generate_drift(int p, int n_edges, int n_flips, int k, uint64_t seed,
                                fmgl_truth** out) {
  return guarded([&] {
    require(out != nullptr, "null output pointer");
    auto truth = fmgl::gen_drift_model(p, n_edges, n_flips, k, seed);
    fmgl_precision theta{truth.theta_true};
    *out = new fmgl_truth{std::move(truth), std::move(theta), std::nullopt};
  });
}

fmgl_status fmgl_truth_create(const fmgl_precision* theta, fmgl_truth** out) {
  return guarded([&] {
    require(theta && out, "null pointer argument");
    std::vector<fmgl::EdgeSet> edges;
    for (const auto& m : theta->value.matrices()) edges.push_back(fmgl::edges_of(m, 0.0));
    fmgl::GroundTruth truth{theta->value, std::move(edges), std::nullopt};
    *out = new fmgl_truth{std::move(truth), fmgl_precision{theta->value}, std::nullopt};
  });
}

void fmgl_truth_free(fmgl_truth* truth) { delete truth; }

const fmgl_precision* fmgl_truth_precision(const fmgl_truth* truth) {
  return truth ? &truth->theta : nullptr;
}

const fmgl_partition* fmgl_truth_partition(const fmgl_truth* truth) {
  return truth && truth->partition ? &*truth->partition : nullptr;
}

fmgl_status fmgl_sample_gaussian(const fmgl_precision* theta, long n, uint64_t seed,
                                 fmgl_covariance** out) {
  return guarded([&] {
    require(theta && out, "null pointer argument");
    *out = new fmgl_covariance{fmgl::sample_gaussian(theta->value, n, seed)};
  });
}

fmgl_status fmgl_edge_accuracy(const fmgl_precision* estimate, const fmgl_truth* truth,
                               double zero_tol, double* out) {
  return guarded([&] {
    require(estimate && truth && out, "null pointer argument");
    *out = fmgl::edge_accuracy(estimate->value, truth->value, zero_tol);
  });
}

fmgl_status fmgl_stable_edges(const fmgl_precision* const* estimates, size_t count,
                              double threshold, double zero_tol, int* triples,
                              size_t capacity, size_t* n_out) {
  return guarded([&] {
    require(n_out != nullptr, "null output pointer");
    require(count == 0 || estimates != nullptr, "null estimates");
    std::vector<fmgl::PrecisionSet> sets;
    for (size_t r = 0; r < count; ++r) {
      require(estimates[r] != nullptr, "null estimate");
      sets.push_back(estimates[r]->value);
    }
    const auto stable = fmgl::stable_edges(sets, threshold, zero_tol);
    size_t n = 0;
    for (size_t k = 0; k < stable.size(); ++k) {
      for (const auto& e : stable[k]) {
        if (triples && n < capacity) {
          triples[3 * n] = static_cast<int>(k);
          triples[3 * n + 1] = e.i;
          triples[3 * n + 2] = e.j;
        }
        ++n;
      }
    }
    *n_out = n;
  });
}

fmgl_status fmgl_tune_lambda1(const fmgl_covariance* s, double lambda2, long target,
                              int count_edges, const fmgl_solver_config* config,
                              double rel_tol, int max_evals, double* lambda1_out,
                              long* count_out) {
  return guarded([&] {
    require(s && lambda1_out, "null pointer argument");
    require(lambda2 >= 0.0, "lambda2 must be non-negative");
    auto make = [lambda2](double l1) { return make_params(l1, lambda2); };
    auto count = [count_edges](const fmgl::PrecisionSet& t) {
      return count_edges ? fmgl::count_edges(t) : fmgl::count_nonzeros(t);
    };
    const auto tuned = fmgl::tune_lambda1(s->value, make, count, target, to_config(config),
                                          rel_tol, max_evals);
    *lambda1_out = tuned.lambda1;
    if (count_out) *count_out = tuned.count;
  });
}

}  // extern "C"
