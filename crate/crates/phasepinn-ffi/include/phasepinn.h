#ifndef PHASEPINN_H
#define PHASEPINN_H

/* Generated by cbindgen from phasepinn-ffi; edit src/lib.rs, not this file. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result class of every fallible call in this library.
 */
typedef enum PpnStatus {
  /**
   * Success; out-parameters are filled in.
   */
  PPN_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  PPN_STATUS_NULL_ARGUMENT = 1,
  /**
   * Lengths, dimensions, encodings, or config contents were rejected.
   */
  PPN_STATUS_INVALID_ARGUMENT = 2,
  /**
   * File system failure, including refusing to overwrite existing output.
   */
  PPN_STATUS_IO = 3,
  /**
   * A file exists but its contents are not a valid archive/checkpoint/config.
   */
  PPN_STATUS_FORMAT = 4,
  /**
   * The computation produced non-finite values or went unstable.
   */
  PPN_STATUS_NUMERIC = 5,
  /**
   * An internal invariant failed; the handle may be in an unusable state.
   */
  PPN_STATUS_PANIC = 6,
} PpnStatus;

/**
 * Trained feed-forward network (opaque).
 */
typedef struct PpnNetwork PpnNetwork;

/**
 * Dense space-time solution archive used as ground truth (opaque).
 */
typedef struct PpnReference PpnReference;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread.
 *
 * Empty until a call fails. The pointer stays valid until the next failing
 * call on the same thread; copy it if you need to keep it.
 */
const char *ppn_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ppn_version(void);

/**
 * Create a tanh network with `hidden_layers` layers of `hidden_width` units
 * and weights drawn by Xavier initialization from `seed`.
 *
 * # Safety
 * `out` must point to a writable `PpnNetwork*` slot.
 */
enum PpnStatus ppn_network_init(uintptr_t input_dim,
                                uintptr_t hidden_layers,
                                uintptr_t hidden_width,
                                uintptr_t output_dim,
                                uint64_t seed,
                                struct PpnNetwork **out);

/**
 * Load a network checkpoint written by [`ppn_network_save`] or the trainer.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must point to a writable
 * `PpnNetwork*` slot.
 */
enum PpnStatus ppn_network_load(const char *path, struct PpnNetwork **out);

/**
 * Write `network` as a checkpoint file (atomic replace, bit-exact reload).
 *
 * # Safety
 * `network` must be a live handle from this library; `path` must be a
 * NUL-terminated string.
 */
enum PpnStatus ppn_network_save(const struct PpnNetwork *network, const char *path);

/**
 * Input dimension of `network`, or 0 if the handle is null.
 *
 * # Safety
 * `network` must be null or a live handle from this library.
 */
uintptr_t ppn_network_input_dim(const struct PpnNetwork *network);

/**
 * Output dimension of `network`, or 0 if the handle is null.
 *
 * # Safety
 * `network` must be null or a live handle from this library.
 */
uintptr_t ppn_network_output_dim(const struct PpnNetwork *network);

/**
 * Evaluate `network` on `n_points` rows of `point_dim` coordinates
 * (row-major). Writes `n_points * output_dim` values to `out`, row-major.
 *
 * # Safety
 * `points` must hold `n_points * point_dim` doubles and `out` must have room
 * for `out_len` doubles; `network` must be a live handle from this library.
 */
enum PpnStatus ppn_network_forward(const struct PpnNetwork *network,
                                   const double *points,
                                   uintptr_t n_points,
                                   uintptr_t point_dim,
                                   double *out,
                                   uintptr_t out_len);

/**
 * Release a network handle. Null is a no-op.
 *
 * # Safety
 * `network` must be null or an unfreed handle from this library.
 */
void ppn_network_free(struct PpnNetwork *network);

/**
 * Load a solution archive produced by the `phasepinn reference` command.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must point to a writable
 * `PpnReference*` slot.
 */
enum PpnStatus ppn_reference_load(const char *path, struct PpnReference **out);

/**
 * Number of spatial dimensions in the archive, or 0 if the handle is null.
 *
 * # Safety
 * `reference` must be null or a live handle from this library.
 */
uintptr_t ppn_reference_spatial_dim(const struct PpnReference *reference);

/**
 * Last stored time in the archive, or NaN if the handle is null.
 *
 * # Safety
 * `reference` must be null or a live handle from this library.
 */
double ppn_reference_t_end(const struct PpnReference *reference);

/**
 * Sample the stored field at `n_points` space-time rows of `point_dim`
 * coordinates (spatial coordinates then time). Writes `n_points` values to
 * `out`. Points outside the stored domain or time range are rejected.
 *
 * # Safety
 * `points` must hold `n_points * point_dim` doubles and `out` must have room
 * for `n_points` doubles; `reference` must be a live handle from this
 * library.
 */
enum PpnStatus ppn_reference_sample(const struct PpnReference *reference,
                                    const double *points,
                                    uintptr_t n_points,
                                    uintptr_t point_dim,
                                    double *out);

/**
 * Release a reference handle. Null is a no-op.
 *
 * # Safety
 * `reference` must be null or an unfreed handle from this library.
 */
void ppn_reference_free(struct PpnReference *reference);

/**
 * Relative l2 error between `prediction` and `truth` (`len` entries each),
 * written to `out`.
 *
 * # Safety
 * `prediction` and `truth` must hold `len` doubles; `out` must be writable.
 */
enum PpnStatus ppn_rel_l2(const double *prediction,
                          const double *truth,
                          uintptr_t len,
                          double *out);

/**
 * Run a full training job from an experiment config file, writing the same
 * `train/` outputs as the `phasepinn train` command: checkpoints, training
 * log, sampled points, report, and manifest.
 *
 * `out_dir` and `seed` override the config when non-null. With `no_eval` the
 * run skips scoring and needs no reference archive. `force` overwrites a
 * previous run's outputs.
 *
 * # Safety
 * `config_path` must be a NUL-terminated string; `out_dir` must be null or
 * NUL-terminated; `seed` must be null or point to a readable u64.
 */
enum PpnStatus ppn_train_run(const char *config_path,
                             const char *out_dir,
                             const uint64_t *seed,
                             bool paper_scale,
                             bool no_eval,
                             bool force);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PHASEPINN_H */
