/* C bindings for the chloresp pipeline. Generated by cbindgen; do not edit. */

#ifndef CHLORESP_H
#define CHLORESP_H



#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes of every fallible call.
typedef enum ChlorespStatus {
  CHLORESP_STATUS_OK = 0,
  // Null pointer, malformed UTF-8, or an argument out of contract.
  CHLORESP_STATUS_INVALID_ARGUMENT = 1,
  // The operation itself failed; see `chloresp_last_error_message`.
  CHLORESP_STATUS_RUNTIME_ERROR = 2,
} ChlorespStatus;

// Opaque run configuration handle.
typedef struct chloresp_config_t chloresp_config_t;

// Opaque prescriptor network handle.
typedef struct chloresp_genome_t chloresp_genome_t;

// Opaque seeded environment handle.
typedef struct chloresp_scenario_t chloresp_scenario_t;

// Timestep reward split into its three components plus their sum.
typedef struct ChlorespReward {
  double penalty;
  double bonus;
  double cost;
  double total;
} ChlorespReward;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copy the last error message into `buffer` (NUL-terminated, truncated to
// `capacity`). Returns the full message length in bytes, excluding the NUL.
// A null or zero-capacity buffer just reports the length.
//
// # Safety
// `buffer` must point to at least `capacity` writable bytes, or be null.
uintptr_t chloresp_last_error_message(char *buffer, uintptr_t capacity);

// Static crate version string.
const char *chloresp_version(void);

// Default configuration handle. Never fails.
struct chloresp_config_t *chloresp_config_default(void);

// Load an INI config file; returns null on failure (see last error).
//
// # Safety
// `path` must be null or a NUL-terminated string.
struct chloresp_config_t *chloresp_config_load(const char *path);

// # Safety
// `config` must come from a `chloresp_config_*` constructor, passed once.
void chloresp_config_free(struct chloresp_config_t *config);

// Build the deterministic scenario a seed describes under `config`'s
// environment section. Returns null on failure.
//
// # Safety
// `config` must be a live handle from a `chloresp_config_*` constructor.
struct chloresp_scenario_t *chloresp_scenario_new(const struct chloresp_config_t *config,
                                                  uint64_t seed);

// # Safety
// `scenario` must come from `chloresp_scenario_new`, passed once.
void chloresp_scenario_free(struct chloresp_scenario_t *scenario);

// Parse a genome from its JSON checkpoint text. Returns null on failure.
//
// # Safety
// `json` must be null or a NUL-terminated string.
struct chloresp_genome_t *chloresp_genome_from_json(const char *json);

// Load a genome from a JSON file. Returns null on failure.
//
// # Safety
// `path` must be null or a NUL-terminated string.
struct chloresp_genome_t *chloresp_genome_load(const char *path);

// # Safety
// `genome` must come from a `chloresp_genome_*` constructor, passed once.
void chloresp_genome_free(struct chloresp_genome_t *genome);

// Number of observation inputs the genome expects; 0 for a null handle.
//
// # Safety
// `genome` must be null or a live genome handle.
uintptr_t chloresp_genome_num_inputs(const struct chloresp_genome_t *genome);

// Number of action outputs the genome produces; 0 for a null handle.
//
// # Safety
// `genome` must be null or a live genome handle.
uintptr_t chloresp_genome_num_outputs(const struct chloresp_genome_t *genome);

// Composite timestep reward for `num_nodes` concentrations and
// `num_injections` injection actions.
//
// # Safety
// `concentrations` must point to `num_nodes` doubles, `actions` to
// `num_injections` doubles (may be null when `num_injections` is 0), and
// `out` to a writable [`ChlorespReward`].
enum ChlorespStatus chloresp_timestep_reward(const double *concentrations,
                                             uintptr_t num_nodes,
                                             const double *actions,
                                             uintptr_t num_injections,
                                             struct ChlorespReward *out);

// Run one forward pass of the genome.
//
// # Safety
// `obs` must point to `num_obs` doubles and `out` to `out_len` writable
// doubles, with `out_len` at least the genome's output count.
enum ChlorespStatus chloresp_genome_activate(const struct chloresp_genome_t *genome,
                                             const double *obs,
                                             uintptr_t num_obs,
                                             double *out,
                                             uintptr_t out_len);

// Roll a genome through a full episode; writes the two episode objectives
// (violation fraction, total injection cost) and the summed composite
// reward.
//
// # Safety
// All handles must be live; the three out-pointers must be writable.
enum ChlorespStatus chloresp_rollout_objectives(const struct chloresp_scenario_t *scenario,
                                                const struct chloresp_genome_t *genome,
                                                double *out_violation,
                                                double *out_cost,
                                                double *out_reward);

// Execute a full pipeline run into `out_dir` with the given master seed.
//
// # Safety
// `config` must be a live handle; `out_dir` a NUL-terminated path.
enum ChlorespStatus chloresp_run(const struct chloresp_config_t *config,
                                 uint64_t master_seed,
                                 const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CHLORESP_H */
