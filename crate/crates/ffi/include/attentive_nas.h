/* C interface for the attentive-nas library. */

#ifndef ATTENTIVE_NAS_H
#define ATTENTIVE_NAS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code for every fallible FFI call.
 */
typedef enum {
  NAS_STATUS_OK = 0,
  /**
   * A pointer argument was null or a scalar argument was out of range.
   */
  NAS_STATUS_INVALID_ARGUMENT = 1,
  /**
   * The architecture failed validation against the search space.
   */
  NAS_STATUS_INVALID_ARCHITECTURE = 2,
  /**
   * Sampling failed (empty prior, unpopulated bin, or trial budget hit).
   */
  NAS_STATUS_SAMPLING = 3,
  NAS_STATUS_IO = 4,
  NAS_STATUS_JSON = 5,
  NAS_STATUS_INTERNAL = 6,
} NasStatus;

/**
 * Opaque random-forest accuracy-predictor handle.
 */
typedef struct NasPredictor NasPredictor;

/**
 * Opaque search-space handle.
 */
typedef struct NasSpace NasSpace;

/**
 * Opaque simulated-supernet state handle.
 */
typedef struct NasState NasState;

/**
 * Opaque sampler-tables handle (empirical prior + conditionals).
 */
typedef struct NasTables NasTables;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or null if the last
 * call succeeded. The pointer is valid until the next failing call.
 */
const char *nas_last_error_message(void);

/**
 * Create the default search space. `couple_stem_width` ties the stem width
 * to the first stage width. Never fails; release with [`nas_space_free`].
 */
NasSpace *nas_space_new(bool couple_stem_width);

/**
 * Release a space handle. Null is a no-op.
 */
void nas_space_free(NasSpace *space);

/**
 * Number of decision axes in the space.
 */
uintptr_t nas_space_axis_count(const NasSpace *space);

/**
 * Validate an architecture JSON document against the space.
 */
NasStatus nas_arch_validate(const NasSpace *space, const char *arch_json);

/**
 * Compute an architecture's multiply-accumulate cost in MFLOPs.
 */
NasStatus nas_arch_flops(const NasSpace *space, const char *arch_json, double *out_mflops);

/**
 * Build sampler tables from `m` uniform draws binned every `step` MFLOPs.
 */
NasStatus nas_tables_build(const NasSpace *space,
                           uint64_t m,
                           double step,
                           uint64_t seed,
                           NasTables **out_tables);

/**
 * Persist sampler tables as JSON.
 */
NasStatus nas_tables_save(const NasSpace *space, const NasTables *tables, const char *path);

/**
 * Load sampler tables previously written by [`nas_tables_save`].
 */
NasStatus nas_tables_load(const NasSpace *space, const char *path, NasTables **out_tables);

/**
 * Release a tables handle. Null is a no-op.
 */
void nas_tables_free(NasTables *tables);

/**
 * Draw one architecture whose FLOPs fall in the bin containing
 * `target_mflops`, returning it as a JSON string in `out_json`.
 */
NasStatus nas_sample_arch(const NasSpace *space,
                          const NasTables *tables,
                          double target_mflops,
                          uint64_t seed,
                          char **out_json);

/**
 * Release a string returned by this library. Null is a no-op.
 */
void nas_string_free(char *s);

/**
 * Load a random-forest predictor from its JSON file.
 */
NasStatus nas_predictor_load(const char *path, NasPredictor **out_predictor);

/**
 * Release a predictor handle. Null is a no-op.
 */
void nas_predictor_free(NasPredictor *predictor);

/**
 * Predict accuracy from a feature vector of length `len`.
 */
NasStatus nas_predictor_predict(const NasPredictor *predictor,
                                const double *features,
                                uintptr_t len,
                                double *out_accuracy);

/**
 * Load a trained simulated-supernet state from its JSON file.
 */
NasStatus nas_state_load(const char *path, NasState **out_state);

/**
 * Release a state handle. Null is a no-op.
 */
void nas_state_free(NasState *state);

/**
 * Score an architecture with a trained supernet state under the default
 * synthetic oracle parameters.
 */
NasStatus nas_eval_arch(const NasState *state,
                        const NasSpace *space,
                        const char *arch_json,
                        double *out_score);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ATTENTIVE_NAS_H */
