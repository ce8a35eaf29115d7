#ifndef PSBRM_H
#define PSBRM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PsbrmStatus {
  PSBRM_STATUS_OK = 0,
  PSBRM_STATUS_NULL_POINTER = 1,
  PSBRM_STATUS_INVALID_ARGUMENT = 2,
  PSBRM_STATUS_INVALID_MDP = 3,
  PSBRM_STATUS_OUT_OF_REGIME = 4,
  PSBRM_STATUS_NOT_CONVERGED = 5,
  PSBRM_STATUS_IO = 6,
  PSBRM_STATUS_INTERNAL = 7,
} PsbrmStatus;

typedef enum PsbrmTermination {
  PSBRM_TERMINATION_GRADIENT_TOLERANCE = 0,
  PSBRM_TERMINATION_RESIDUAL_TOLERANCE = 1,
  PSBRM_TERMINATION_FIXED_POINT_TOLERANCE = 2,
  PSBRM_TERMINATION_MAX_ITERATIONS = 3,
  PSBRM_TERMINATION_DIVERGED = 4,
} PsbrmTermination;

/**
 * Opaque full-column-rank feature matrix.
 */
typedef struct PsbrmFeatures PsbrmFeatures;

/**
 * Opaque finite MDP.
 */
typedef struct PsbrmMdp PsbrmMdp;

/**
 * Opaque result of [`psbrm_solve`].
 */
typedef struct PsbrmTrajectory PsbrmTrajectory;

/**
 * Soft residual minimization settings. `decay = 1` gives a constant step.
 */
typedef struct PsbrmSolveOptions {
  /**
   * Even exponent ≥ 2.
   */
  uint32_t p;
  double lambda;
  double alpha;
  double decay;
  size_t max_iter;
  double grad_tol;
  double residual_tol;
} PsbrmSolveOptions;

/**
 * One iterate: residual functionals at `θ_k`.
 */
typedef struct PsbrmRecord {
  size_t k;
  double f_p;
  double j_p;
  double j_inf;
} PsbrmRecord;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. Valid until the next failing call.
 */
const char *psbrm_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *psbrm_version(void);

/**
 * The six-state, two-action benchmark MDP (γ = 0.95).
 */
enum PsbrmStatus psbrm_mdp_benchmark(struct PsbrmMdp **out);

/**
 * Parses an MDP document: `{"num_states", "num_actions", "gamma", "transitions"[a][s][s'], "rewards"[s][a]}`.
 */
enum PsbrmStatus psbrm_mdp_from_json(const char *json,
                                     struct PsbrmMdp **out);

/**
 * `transitions` holds `num_actions * num_states * num_states` entries laid out
 * `[a][s][s']`; `rewards` holds `num_states * num_actions` entries laid out `[s][a]`.
 */
enum PsbrmStatus psbrm_mdp_new(size_t num_states,
                               size_t num_actions,
                               const double *transitions,
                               const double *rewards,
                               double gamma,
                               struct PsbrmMdp **out);

void psbrm_mdp_free(struct PsbrmMdp *mdp);

enum PsbrmStatus psbrm_mdp_dims(const struct PsbrmMdp *mdp,
                                size_t *num_states,
                                size_t *num_actions,
                                double *gamma);

/**
 * `out = F_λ q`; both arrays have length `n = num_states * num_actions`.
 */
enum PsbrmStatus psbrm_soft_backup(const struct PsbrmMdp *mdp,
                                   double lambda,
                                   const double *q,
                                   double *out,
                                   size_t n);

/**
 * Soft value iteration from zero. `iterations` may be NULL.
 */
enum PsbrmStatus psbrm_soft_fixed_point(const struct PsbrmMdp *mdp,
                                        double lambda,
                                        double tol,
                                        size_t max_iter,
                                        double *q_star,
                                        size_t n,
                                        size_t *iterations);

/**
 * Standard-normal `n × d` features from `seed`; `seed_used` (may be NULL) receives
 * the seed that produced a full-rank draw.
 */
enum PsbrmStatus psbrm_features_random(uint64_t seed,
                                       size_t n,
                                       size_t d,
                                       struct PsbrmFeatures **out,
                                       uint64_t *seed_used);

/**
 * Features from a row-major `n × d` array.
 */
enum PsbrmStatus psbrm_features_new(const double *data,
                                    size_t n,
                                    size_t d,
                                    struct PsbrmFeatures **out);

void psbrm_features_free(struct PsbrmFeatures *features);

enum PsbrmStatus psbrm_features_dims(const struct PsbrmFeatures *features, size_t *n, size_t *d);

/**
 * `γ_{p,w}`; `weights` has length `n` or is NULL for uniform.
 */
enum PsbrmStatus psbrm_effective_contraction_rate(double gamma,
                                                  double p,
                                                  size_t n,
                                                  const double *weights_ptr,
                                                  double *out);

/**
 * Smallest `p` beyond which `γ_{p,w} < 1`.
 */
enum PsbrmStatus psbrm_contraction_threshold(double gamma,
                                             size_t n,
                                             const double *weights_ptr,
                                             double *out);

/**
 * `C(p)`; returns `PSBRM_STATUS_OUT_OF_REGIME` (and leaves `out` untouched) when `γ_{p,w} ≥ 1`.
 */
enum PsbrmStatus psbrm_quasi_optimality_constant(double gamma,
                                                 double p,
                                                 size_t n,
                                                 const double *weights_ptr,
                                                 double *out);

/**
 * `f_p(θ) = (1/p) Σ w_i δ_i^p` with `δ = F_λ(Φθ) − Φθ`.
 */
enum PsbrmStatus psbrm_objective(const struct PsbrmMdp *mdp,
                                 const struct PsbrmFeatures *features,
                                 double lambda,
                                 uint32_t p,
                                 const double *weights_ptr,
                                 const double *theta,
                                 size_t d,
                                 double *out);

/**
 * `∇f_p(θ)`, length `d`.
 */
enum PsbrmStatus psbrm_gradient(const struct PsbrmMdp *mdp,
                                const struct PsbrmFeatures *features,
                                double lambda,
                                uint32_t p,
                                const double *weights_ptr,
                                const double *theta,
                                size_t d,
                                double *grad);

/**
 * Normalized gradient descent from `θ_0 = 0`. `weights` may be NULL for uniform.
 */
enum PsbrmStatus psbrm_solve(const struct PsbrmMdp *mdp,
                             const struct PsbrmFeatures *features,
                             const struct PsbrmSolveOptions *options,
                             const double *weights_ptr,
                             struct PsbrmTrajectory **out);

void psbrm_trajectory_free(struct PsbrmTrajectory *trajectory);

/**
 * Number of records (iterations performed + 1).
 */
enum PsbrmStatus psbrm_trajectory_len(const struct PsbrmTrajectory *trajectory, size_t *out);

enum PsbrmStatus psbrm_trajectory_termination(const struct PsbrmTrajectory *trajectory,
                                              enum PsbrmTermination *out);

enum PsbrmStatus psbrm_trajectory_record(const struct PsbrmTrajectory *trajectory,
                                         size_t index,
                                         struct PsbrmRecord *out);

/**
 * Final parameter vector, length `d`.
 */
enum PsbrmStatus psbrm_trajectory_theta(const struct PsbrmTrajectory *trajectory,
                                        double *theta,
                                        size_t d);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PSBRM_H */
