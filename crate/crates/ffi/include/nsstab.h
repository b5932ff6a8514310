#ifndef NSSTAB_H
#define NSSTAB_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum NsstabStatus {
  NSSTAB_STATUS_OK = 0,
  NSSTAB_STATUS_NULL_POINTER = 1,
  NSSTAB_STATUS_INVALID_STRING = 2,
  NSSTAB_STATUS_CONFIG = 3,
  NSSTAB_STATUS_INVALID_ARGUMENT = 4,
  NSSTAB_STATUS_NUMERICAL = 5,
  NSSTAB_STATUS_IO = 6,
  // A run finished but some of its checks failed.
  NSSTAB_STATUS_CHECKS_FAILED = 7,
  NSSTAB_STATUS_PANIC = 8,
} NsstabStatus;

// Configuration with its spectral space, reference flow and mask.
typedef struct NsstabExperiment NsstabExperiment;

// A synthesized feedback law.
typedef struct NsstabLaw NsstabLaw;

// Library version as a static NUL-terminated string; do not free.
const char *nsstab_version(void);

// Copy of the calling thread's last error message, or null when there is
// none. Free with [`nsstab_string_free`].
char *nsstab_last_error(void);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not have been freed already.
void nsstab_string_free(char *s);

// Parses and validates a JSON configuration.
//
// # Safety
// `json` must be a NUL-terminated string and `out` a valid pointer.
enum NsstabStatus nsstab_experiment_from_json(const char *json, struct NsstabExperiment **out);

// The shipped default configuration.
//
// # Safety
// `out` must be a valid pointer.
enum NsstabStatus nsstab_experiment_default(struct NsstabExperiment **out);

// # Safety
// `exp` must come from this library or be null.
void nsstab_experiment_free(struct NsstabExperiment *exp);

// Number of retained Stokes modes `K`.
//
// # Safety
// Pointers must be valid.
enum NsstabStatus nsstab_experiment_dim(const struct NsstabExperiment *exp, size_t *out);

// Canonical JSON of the configuration; free with [`nsstab_string_free`].
//
// # Safety
// Pointers must be valid.
enum NsstabStatus nsstab_experiment_config_json(const struct NsstabExperiment *exp, char **out);

// Chooses the projection size `N` and control size `M` for decay rate
// `lambda` over the configured number of intervals.
//
// # Safety
// Pointers must be valid.
enum NsstabStatus nsstab_choose_n(const struct NsstabExperiment *exp,
                                  double lambda,
                                  size_t *n_out,
                                  size_t *m_out,
                                  double *contraction_out);

// Synthesizes the feedback law for the configured `lambda`, with `M` chosen
// at `lambda * lambda_hat_factor`.
//
// # Safety
// Pointers must be valid.
enum NsstabStatus nsstab_law_synthesize(const struct NsstabExperiment *exp, struct NsstabLaw **out);

// # Safety
// `law` must come from this library or be null.
void nsstab_law_free(struct NsstabLaw *law);

// Number of control modes `M` of the law.
//
// # Safety
// Pointers must be valid.
enum NsstabStatus nsstab_law_m(const struct NsstabLaw *law, size_t *out);

// Writes `K(t) v` into `out`; `v` and `out` have length `K`.
//
// # Safety
// `v` and `out` must point to `len` doubles.
enum NsstabStatus nsstab_law_gain(const struct NsstabLaw *law,
                                  double t,
                                  const double *v,
                                  size_t len,
                                  double *out);

// Linear (`nonlinear == 0`) or nonlinear closed loop from `v0` at `t = 0`;
// writes the state at `duration` into `out`.
//
// # Safety
// `v0` and `out` must point to `len` doubles.
enum NsstabStatus nsstab_law_closed_loop(const struct NsstabLaw *law,
                                         const double *v0,
                                         size_t len,
                                         double duration,
                                         int32_t nonlinear,
                                         double *out);

// Runs a CLI stage (`"reference"`, `"feedback"`, `"all"`, ...) with
// artifacts under `out_dir`. Returns [`NsstabStatus::ChecksFailed`] when the
// run completes with failed checks.
//
// # Safety
// String arguments must be NUL-terminated.
enum NsstabStatus nsstab_run(const char *stage,
                             const char *config_path,
                             const char *out_dir,
                             uint64_t seed);

#endif  /* NSSTAB_H */
