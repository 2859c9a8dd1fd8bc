#ifndef BYRD_NAFL_H
#define BYRD_NAFL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

typedef enum ByrdStatus {
  BYRD_STATUS_OK = 0,
  BYRD_STATUS_NULL_POINTER = 1,
  BYRD_STATUS_INVALID_ARGUMENT = 2,
  BYRD_STATUS_DIM_MISMATCH = 3,
  BYRD_STATUS_NON_FINITE = 4,
  BYRD_STATUS_CONFIG = 5,
  BYRD_STATUS_IO = 6,
  BYRD_STATUS_TRAINING = 7,
  BYRD_STATUS_DATA = 8,
  BYRD_STATUS_BUFFER_TOO_SMALL = 9,
  BYRD_STATUS_PANIC = 10,
} ByrdStatus;

typedef enum ByrdRule {
  BYRD_RULE_MEAN = 0,
  BYRD_RULE_CW_MED = 1,
  BYRD_RULE_GEO_MED = 2,
  BYRD_RULE_KRUM = 3,
} ByrdRule;

typedef enum ByrdAttack {
  BYRD_ATTACK_NONE = 0,
  BYRD_ATTACK_RANDOM_NOISE = 1,
  BYRD_ATTACK_SIGN_FLIP = 2,
  BYRD_ATTACK_ZERO_GRADIENT = 3,
} ByrdAttack;

// Server-side optimizer state.
typedef struct ByrdServer ByrdServer;

typedef struct ByrdTheoremParams {
  double sin_gamma;
  double c1;
  double c2;
  double lipschitz;
  double beta;
  double eta;
} ByrdTheoremParams;

typedef struct ByrdRunSummary {
  double final_acc;
  double best_acc;
  double final_loss;
  double wall_time_s;
  uint64_t iterations;
} ByrdRunSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null. The pointer is
// valid until the next library call on the same thread.
const char *byrd_last_error(void);

// Library version as a static NUL-terminated string.
const char *byrd_version(void);

// Aggregates `n` vectors of length `dim` stored row-major in `grads` into
// `out` (length `dim`). `byzantine` is the Krum `f`; other rules ignore it.
// GeoMed uses the default tolerance and iteration cap.
//
// # Safety
// `grads` must hold `n * dim` doubles and `out` must have room for `dim`.
enum ByrdStatus byrd_aggregate(enum ByrdRule rule,
                               const double *grads,
                               uintptr_t n,
                               uintptr_t dim,
                               uintptr_t byzantine,
                               double *out);

// Builds the upload list for one round: the `honest` rows followed by
// `byzantine` crafted rows (none for `ByrdAttack::None`). `mu` is the noise
// variance or the sign-flip factor and is ignored otherwise. Writes the
// row count to `out_rows`; `out_len` is the capacity of `out` in doubles.
//
// # Safety
// `honest` must hold `h * dim` doubles, `out` must be valid for `out_len`
// writes and `out_rows` must be writable.
enum ByrdStatus byrd_apply_attack(enum ByrdAttack attack,
                                  double mu,
                                  const double *honest,
                                  uintptr_t h,
                                  uintptr_t dim,
                                  uintptr_t byzantine,
                                  uint64_t seed,
                                  double *out,
                                  uintptr_t out_len,
                                  uintptr_t *out_rows);

// Creates a server at `x0` with zero momentum. `beta = 0` gives plain SGD.
//
// # Safety
// `x0` must hold `dim` doubles and `out` must be writable.
enum ByrdStatus byrd_server_new(const double *x0,
                                uintptr_t dim,
                                double eta,
                                double beta,
                                struct ByrdServer **out);

// Applies one momentum step with the aggregated gradient `grad`.
//
// # Safety
// `server` must come from [`byrd_server_new`]; `grad` must hold `dim` doubles.
enum ByrdStatus byrd_server_step(struct ByrdServer *server, const double *grad, uintptr_t dim);

// Copies the current iterate into `out` (`len` must equal the dimension).
//
// # Safety
// `server` must come from [`byrd_server_new`]; `out` must hold `len` doubles.
enum ByrdStatus byrd_server_params(const struct ByrdServer *server, double *out, uintptr_t len);

// Number of steps taken so far, or 0 for a null handle.
//
// # Safety
// `server` must be null or come from [`byrd_server_new`].
uint64_t byrd_server_iteration(const struct ByrdServer *server);

// Releases a server. Null is ignored.
//
// # Safety
// `server` must be null or come from [`byrd_server_new`] and not be freed twice.
void byrd_server_free(struct ByrdServer *server);

// Largest admissible learning rate for the given constants.
//
// # Safety
// `tp` and `out` must be valid pointers.
enum ByrdStatus byrd_max_stepsize(const struct ByrdTheoremParams *tp, double *out);

// Asymptotic error floor for the given constants.
//
// # Safety
// `tp` and `out` must be valid pointers.
enum ByrdStatus byrd_error_floor_bound(const struct ByrdTheoremParams *tp, double *out);

// Trains the single run described by `config_toml` (same format as the CLI
// config files, without a `[matrix]` table). When `out_dir` is non-null,
// `metrics.csv` and `summary.txt` are written there. `summary` may be null.
//
// # Safety
// `config_toml` must be a NUL-terminated string; `out_dir` null or
// NUL-terminated; `summary` null or writable.
enum ByrdStatus byrd_run_config(const char *config_toml,
                                const char *out_dir,
                                struct ByrdRunSummary *summary);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BYRD_NAFL_H */
