#ifndef FOCUSNAV_H
#define FOCUSNAV_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

enum FocusnavStatus
#if defined(__cplusplus) || __STDC_VERSION__ >= 202311L
  : int32_t
#endif // defined(__cplusplus) || __STDC_VERSION__ >= 202311L
 {
  FOCUSNAV_STATUS_OK = 0,
  FOCUSNAV_STATUS_NULL_POINTER = -1,
  FOCUSNAV_STATUS_INVALID_UTF8 = -2,
  FOCUSNAV_STATUS_INVALID_ARGUMENT = -3,
  FOCUSNAV_STATUS_NOT_FOUND = -4,
  FOCUSNAV_STATUS_PARSE = -5,
  FOCUSNAV_STATUS_INTERNAL = -255,
};
#ifndef __cplusplus
#if __STDC_VERSION__ >= 202311L
typedef enum FocusnavStatus FocusnavStatus;
#else
typedef int32_t FocusnavStatus;
#endif // __STDC_VERSION__ >= 202311L
#endif // __cplusplus

/**
 * Opaque finished-episode handle.
 */
typedef struct FocusnavEpisodeResult FocusnavEpisodeResult;

/**
 * Opaque search-tree handle.
 */
typedef struct FocusnavTree FocusnavTree;

/**
 * Opaque world handle.
 */
typedef struct FocusnavWorld FocusnavWorld;

typedef struct FocusnavRunConfig {
  double lambda;
  uint32_t top_k;
  uint32_t n_max;
  /**
   * Negative keeps the episode's own step cap.
   */
  int32_t max_steps;
  bool no_bd_mcts;
  bool no_pp;
  bool prior_visit;
  bool single_edge;
} FocusnavRunConfig;

typedef struct FocusnavMetrics {
  double ne_m;
  bool success;
  bool oracle_success;
  double spl;
  double path_length;
  double reference_length;
  uint32_t steps;
} FocusnavMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until the
 * next call on this thread; do not free.
 */
const char *focusnav_last_error(void);

/**
 * # Safety
 * `s` must be null or a string returned by this library, not yet freed.
 */
void focusnav_string_free(char *s);

/**
 * Generates the world for `(seed, profile)`; profile is one of
 * `corridor`, `trap`, `maze`, `r2r-like`, `landmark`.
 *
 * # Safety
 * `profile` must be a NUL-terminated string; `out` a valid pointer.
 */
FocusnavStatus focusnav_world_generate(uint64_t seed,
                                       const char *profile,
                                       struct FocusnavWorld **out);

/**
 * Parses world or episode JSON.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` a valid pointer.
 */
FocusnavStatus focusnav_world_from_json(const char *json, struct FocusnavWorld **out);

/**
 * # Safety
 * `world` must be a live handle; `out` a valid pointer.
 */
FocusnavStatus focusnav_world_to_json(const struct FocusnavWorld *world, char **out);

/**
 * # Safety
 * `world` must be null or a handle from this library, not yet freed.
 */
void focusnav_world_free(struct FocusnavWorld *world);

struct FocusnavRunConfig focusnav_run_config_default(void);

/**
 * Runs one episode with oracle agents. A null `config` uses defaults.
 *
 * # Safety
 * `world` must be a live handle, `config` null or valid, `out` valid.
 */
FocusnavStatus focusnav_episode_run(const struct FocusnavWorld *world,
                                    const struct FocusnavRunConfig *config,
                                    struct FocusnavEpisodeResult **out);

/**
 * # Safety
 * `result` must be a live handle; `out` valid.
 */
FocusnavStatus focusnav_result_metrics(const struct FocusnavEpisodeResult *result,
                                       struct FocusnavMetrics *out);

/**
 * # Safety
 * `result` must be a live handle; `out` valid.
 */
FocusnavStatus focusnav_result_trace_jsonl(const struct FocusnavEpisodeResult *result, char **out);

/**
 * # Safety
 * `result` must be null or a handle from this library, not yet freed.
 */
void focusnav_result_free(struct FocusnavEpisodeResult *result);

/**
 * Heading in radians of a panorama box, negative to the left.
 *
 * # Safety
 * `out` must be valid.
 */
FocusnavStatus focusnav_heading_angle(double x1,
                                      double y1,
                                      double x2,
                                      double y2,
                                      double panorama_width,
                                      double *out);

/**
 * Benchmark report JSON for comma-separated `profiles` and `variants`
 * (`full`, `no-bd-mcts`, `no-pp`) over seeds `seed_first..=seed_last`.
 *
 * # Safety
 * String arguments must be NUL-terminated; `config` null or valid; `out` valid.
 */
FocusnavStatus focusnav_benchmark_json(const char *profiles,
                                       const char *variants,
                                       uint64_t seed_first,
                                       uint64_t seed_last,
                                       const struct FocusnavRunConfig *config,
                                       char **out);

/**
 * # Safety
 * `root` must be NUL-terminated; `out` valid.
 */
FocusnavStatus focusnav_tree_new(const char *root, double root_value, struct FocusnavTree **out);

/**
 * Adds candidates `ids[i]` with values `values[i]` under `current`,
 * skipping ids already in the tree. `added`, when non-null, receives the
 * number of nodes created.
 *
 * # Safety
 * `ids` and `values` must point to `n` elements each (may be null when
 * `n == 0`); every id NUL-terminated.
 */
FocusnavStatus focusnav_tree_expand(struct FocusnavTree *tree,
                                    const char *current,
                                    const char *const *ids,
                                    const double *values,
                                    size_t n,
                                    size_t *added);

/**
 * # Safety
 * `tree` must be a live handle; `current` NUL-terminated.
 */
FocusnavStatus focusnav_tree_backprop(struct FocusnavTree *tree,
                                      const char *current,
                                      double reward);

/**
 * # Safety
 * `tree` must be a live handle; `leaf` NUL-terminated; `out` valid.
 */
FocusnavStatus focusnav_tree_path_value(const struct FocusnavTree *tree,
                                        const char *leaf,
                                        double *out);

/**
 * # Safety
 * `tree` must be null or a handle from this library, not yet freed.
 */
void focusnav_tree_free(struct FocusnavTree *tree);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FOCUSNAV_H */
