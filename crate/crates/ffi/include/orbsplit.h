/* C API for the orbsplit planner, simulator, and activation codec. */

#ifndef ORBSPLIT_H
#define ORBSPLIT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes for every fallible FFI call.
 */
typedef enum OrbStatus {
  ORB_STATUS_OK = 0,
  /**
   * A required pointer argument was NULL.
   */
  ORB_STATUS_NULL_POINTER = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  ORB_STATUS_INVALID_UTF8 = 2,
  /**
   * File could not be read.
   */
  ORB_STATUS_IO = 3,
  /**
   * Scenario or plan JSON failed to parse.
   */
  ORB_STATUS_PARSE = 4,
  /**
   * A field violated a scenario invariant.
   */
  ORB_STATUS_VALIDATION = 5,
  /**
   * Inputs were structurally valid but outside the model's domain.
   */
  ORB_STATUS_DOMAIN = 6,
  /**
   * A compressed blob failed to decode.
   */
  ORB_STATUS_DECODE = 7,
  /**
   * The requested quantity only exists for feasible plans.
   */
  ORB_STATUS_INFEASIBLE = 8,
  /**
   * Any other internal failure.
   */
  ORB_STATUS_INTERNAL = 9,
} OrbStatus;

/**
 * The outcome of a planner run.
 */
typedef struct OrbResult OrbResult;

/**
 * A loaded, validated scenario document.
 */
typedef struct OrbScenario OrbScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread. The pointer stays
 * valid until the next failing FFI call on the same thread.
 */
const char *orb_last_error(void);

/**
 * Frees a string returned by this library. NULL is a no-op.
 *
 * # Safety
 * `s` must originate from this library and not be freed twice.
 */
void orb_string_free(char *s);

/**
 * Parses and validates a scenario from a JSON string.
 *
 * # Safety
 * `json` must be NUL-terminated; `out` must be a valid pointer.
 */
enum OrbStatus orb_scenario_parse(const char *json, struct OrbScenario **out);

/**
 * Loads and validates a scenario from a JSON file.
 *
 * # Safety
 * `path` must be NUL-terminated; `out` must be a valid pointer.
 */
enum OrbStatus orb_scenario_load(const char *path, struct OrbScenario **out);

/**
 * Releases a scenario handle. NULL is a no-op.
 *
 * # Safety
 * `scn` must originate from this library and not be freed twice.
 */
void orb_scenario_free(struct OrbScenario *scn);

/**
 * Number of compute satellites K in the chain.
 *
 * # Safety
 * `scn` and `out` must be valid pointers.
 */
enum OrbStatus orb_scenario_num_compute(const struct OrbScenario *scn, size_t *out);

/**
 * Runs the A* planner. Succeeds even when no feasible plan exists; check
 * feasibility with `orb_result_is_feasible`.
 *
 * # Safety
 * `scn` and `out` must be valid pointers.
 */
enum OrbStatus orb_optimize(const struct OrbScenario *scn, struct OrbResult **out);

/**
 * Releases a planner result. NULL is a no-op.
 *
 * # Safety
 * `res` must originate from this library and not be freed twice.
 */
void orb_result_free(struct OrbResult *res);

/**
 * Whether the planner found a plan meeting every constraint.
 *
 * # Safety
 * `res` and `out` must be valid pointers.
 */
enum OrbStatus orb_result_is_feasible(const struct OrbResult *res, bool *out);

/**
 * Objective value (pipeline delay excluding the fixed uplink constant) of a
 * feasible result.
 *
 * # Safety
 * `res` and `out` must be valid pointers.
 */
enum OrbStatus orb_result_objective(const struct OrbResult *res, double *out);

/**
 * End-to-end delay (including the uplink constant) of a feasible result.
 *
 * # Safety
 * `res` and `out` must be valid pointers.
 */
enum OrbStatus orb_result_total_delay(const struct OrbResult *res, double *out);

/**
 * Copies the stage layer counts of a feasible result into `out` (capacity
 * `cap`); writes the stage count to `len`.
 *
 * # Safety
 * `out` must point to at least `cap` writable elements.
 */
enum OrbStatus orb_result_layer_counts(const struct OrbResult *res,
                                       size_t *out,
                                       size_t cap,
                                       size_t *len);

/**
 * Serializes a planner result to JSON. Returns NULL on failure; free with
 * `orb_string_free`.
 *
 * # Safety
 * `res` must be a valid pointer.
 */
char *orb_result_json(const struct OrbResult *res);

/**
 * Evaluates a plan with the analytic delay model; writes the end-to-end
 * delay in seconds.
 *
 * # Safety
 * Array arguments must be valid for the given lengths; `out_total` must be
 * a valid pointer.
 */
enum OrbStatus orb_evaluate(const struct OrbScenario *scn,
                            const size_t *layer_counts,
                            size_t num_stages,
                            const double *compression_ratios,
                            size_t num_ratios,
                            double *out_total);

/**
 * Runs the discrete-event simulation for a plan; writes the simulated
 * end-to-end delay in seconds.
 *
 * # Safety
 * Array arguments must be valid for the given lengths; `out_total` must be
 * a valid pointer.
 */
enum OrbStatus orb_simulate(const struct OrbScenario *scn,
                            const size_t *layer_counts,
                            size_t num_stages,
                            const double *compression_ratios,
                            size_t num_ratios,
                            double *out_total);

/**
 * Compares the analytic model against the simulation for a plan and returns
 * the report as JSON. Returns NULL on failure; free with `orb_string_free`.
 *
 * # Safety
 * Array arguments must be valid for the given lengths.
 */
char *orb_compare_json(const struct OrbScenario *scn,
                       const size_t *layer_counts,
                       size_t num_stages,
                       const double *compression_ratios,
                       size_t num_ratios);

/**
 * Encodes a batch of activations with a binary mask and `bits`-wide uniform
 * quantization, then decodes it again. Writes the reconstruction to
 * `out_values` (length `n * s * d`) and the compressed size in bits to
 * `out_compressed_bits`.
 *
 * `mask` holds `s * d` bytes, nonzero meaning the position is kept.
 *
 * # Safety
 * All array arguments must be valid for the stated lengths.
 */
enum OrbStatus orb_codec_roundtrip(const float *values,
                                   size_t n,
                                   size_t s,
                                   size_t d,
                                   const uint8_t *mask,
                                   uint32_t bits,
                                   float *out_values,
                                   uint64_t *out_compressed_bits);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ORBSPLIT_H */
