#ifndef FMGL_FMGL_H
#define FMGL_FMGL_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(FMGL_BUILDING)
#    define FMGL_API __declspec(dllexport)
#  else
#    define FMGL_API __declspec(dllimport)
#  endif
#else
#  define FMGL_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum fmgl_status {
  FMGL_OK = 0,
  FMGL_ERR_PARAMETER = 1,
  FMGL_ERR_DATA = 2,
  FMGL_ERR_NUMERICAL = 3,
  FMGL_ERR_STRUCTURAL = 4,
  FMGL_ERR_INTERNAL = 5
} fmgl_status;

/* Opaque handles. Every *_create / producing call hands out ownership; release
   with the matching *_free. Passing NULL to *_free is a no-op. */
typedef struct fmgl_covariance fmgl_covariance;
typedef struct fmgl_precision fmgl_precision;
typedef struct fmgl_report fmgl_report;
typedef struct fmgl_partition fmgl_partition;
typedef struct fmgl_truth fmgl_truth;

FMGL_API const char* fmgl_version(void);

/* Message of the last failed call on this thread ("" if none). */
FMGL_API const char* fmgl_last_error(void);

/* ---- covariance sets ----
   `data` holds k column-major p x p matrices back to back. Raw input is
   symmetrized and non-positive diagonals are lifted by `perturbation`
   (pass 0 for the default). n_samples <= 0 means unknown. */
FMGL_API fmgl_status fmgl_covariance_create(const double* data, int p, int k,
                                            double perturbation, long n_samples,
                                            fmgl_covariance** out);
/* Raw n x p sample matrices (row-major, one per graph): S = X^T X / n. */
FMGL_API fmgl_status fmgl_covariance_from_samples(const double* const* samples,
                                                  const long* n, int p, int k,
                                                  int center, fmgl_covariance** out);
FMGL_API void fmgl_covariance_free(fmgl_covariance* s);
FMGL_API int fmgl_covariance_dim(const fmgl_covariance* s);
FMGL_API int fmgl_covariance_count(const fmgl_covariance* s);
/* Copies graph k (column-major p x p) into `out`. */
FMGL_API fmgl_status fmgl_covariance_get(const fmgl_covariance* s, int k, double* out);

/* ---- precision sets ---- */
FMGL_API fmgl_status fmgl_precision_create(const double* data, int p, int k,
                                           fmgl_precision** out);
FMGL_API void fmgl_precision_free(fmgl_precision* theta);
FMGL_API int fmgl_precision_dim(const fmgl_precision* theta);
FMGL_API int fmgl_precision_count(const fmgl_precision* theta);
FMGL_API fmgl_status fmgl_precision_get(const fmgl_precision* theta, int k, double* out);
/* Entries with |x| > zero_tol, diagonal included, summed over graphs. */
FMGL_API long fmgl_precision_nonzeros(const fmgl_precision* theta, double zero_tol);
/* Off-diagonal pairs i < j with |x| > zero_tol, summed over graphs. */
FMGL_API long fmgl_precision_edges(const fmgl_precision* theta, double zero_tol);

/* ---- solver configuration ---- */
typedef struct fmgl_solver_config {
  double outer_tol;
  int max_newton_iters;
  double armijo_sigma;
  int beta_floor_exponent;
  double inner_tol;
  int inner_max_iters;
  int history_len;
  double step_min;
  double step_max;
  int use_screening;
  int threads;
} fmgl_solver_config;

typedef struct fmgl_admm_config {
  double rho;
  int max_iters;
  int has_target_objective;
  double target_objective;
  double primal_tol;
  double dual_tol;
} fmgl_admm_config;

FMGL_API fmgl_solver_config fmgl_solver_config_default(void);
FMGL_API fmgl_admm_config fmgl_admm_config_default(void);

/* lambda2 == 0 selects the independent (decoupled) mode; otherwise both
   weights must be positive. */
FMGL_API fmgl_status fmgl_solve(const fmgl_covariance* s, double lambda1, double lambda2,
                                const fmgl_solver_config* config,
                                fmgl_precision** theta_out, fmgl_report** report_out);
/* On a numerical failure `*report_out` still receives the partial report
   when report_out is non-NULL. */
FMGL_API fmgl_status fmgl_solve_admm(const fmgl_covariance* s, double lambda1,
                                     double lambda2, const fmgl_admm_config* config,
                                     fmgl_precision** theta_out,
                                     fmgl_report** report_out);

FMGL_API fmgl_status fmgl_objective(const fmgl_precision* theta, const fmgl_covariance* s,
                                    double lambda1, double lambda2, double* out);
FMGL_API fmgl_status fmgl_kkt_residual(const fmgl_precision* theta,
                                       const fmgl_covariance* s, double lambda1,
                                       double lambda2, double* out);

/* ---- reports ---- */
FMGL_API void fmgl_report_free(fmgl_report* r);
FMGL_API int fmgl_report_outer_iterations(const fmgl_report* r);
FMGL_API int fmgl_report_converged(const fmgl_report* r);
FMGL_API double fmgl_report_final_objective(const fmgl_report* r);
FMGL_API double fmgl_report_kkt_residual(const fmgl_report* r);
FMGL_API double fmgl_report_wall_time(const fmgl_report* r);
FMGL_API int fmgl_report_block_count(const fmgl_report* r);
FMGL_API size_t fmgl_report_trace_length(const fmgl_report* r);
FMGL_API double fmgl_report_trace_at(const fmgl_report* r, size_t i);
/* JSON document; the string lives as long as the report. */
FMGL_API const char* fmgl_report_json(const fmgl_report* r);

/* ---- screening ---- */
FMGL_API fmgl_status fmgl_screen(const fmgl_covariance* s, double lambda1, double lambda2,
                                 fmgl_partition** out);
FMGL_API void fmgl_partition_free(fmgl_partition* part);
FMGL_API int fmgl_partition_dim(const fmgl_partition* part);
FMGL_API int fmgl_partition_block_count(const fmgl_partition* part);
FMGL_API int fmgl_partition_block_size(const fmgl_partition* part, int block);
/* Copies the sorted feature indices of `block` (0-based) into `out`. */
FMGL_API fmgl_status fmgl_partition_block(const fmgl_partition* part, int block, int* out);
FMGL_API int fmgl_partition_max_block_size(const fmgl_partition* part);

/* ---- data generation and evaluation ---- */
FMGL_API fmgl_status fmgl_generate_block(int p, int k, int l, uint64_t seed,
                                         double nnz_factor, fmgl_truth** out);
FMGL_API fmgl_status fmgl_generate_drift(int p, int n_edges, int n_flips, int k,
                                         uint64_t seed, fmgl_truth** out);
/* Ground truth from known precision matrices: edges are the nonzero
   off-diagonal pattern (exact zeros excluded). */
FMGL_API fmgl_status fmgl_truth_create(const fmgl_precision* theta, fmgl_truth** out);
FMGL_API void fmgl_truth_free(fmgl_truth* truth);
/* Borrowed; valid while the truth handle lives. */
FMGL_API const fmgl_precision* fmgl_truth_precision(const fmgl_truth* truth);
/* NULL for the drift model. */
FMGL_API const fmgl_partition* fmgl_truth_partition(const fmgl_truth* truth);

FMGL_API fmgl_status fmgl_sample_gaussian(const fmgl_precision* theta, long n, uint64_t seed,
                                          fmgl_covariance** out);

FMGL_API fmgl_status fmgl_edge_accuracy(const fmgl_precision* estimate,
                                        const fmgl_truth* truth, double zero_tol,
                                        double* out);

/* Stable edges over `count` replications: writes up to `capacity` triples
   (k, i, j), 0-based with i < j, into `triples` and the total into *n_out. */
FMGL_API fmgl_status fmgl_stable_edges(const fmgl_precision* const* estimates, size_t count,
                                       double threshold, double zero_tol, int* triples,
                                       size_t capacity, size_t* n_out);

/* Bisection on log(lambda1) until the solution has about `target` nonzeros
   (count_edges != 0 counts off-diagonal pairs instead). lambda2 == 0 selects
   the independent mode. */
FMGL_API fmgl_status fmgl_tune_lambda1(const fmgl_covariance* s, double lambda2,
                                       long target, int count_edges,
                                       const fmgl_solver_config* config, double rel_tol,
                                       int max_evals, double* lambda1_out, long* count_out);

#ifdef __cplusplus
}
#endif

#endif
