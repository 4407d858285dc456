/* C interface to the multi-teacher progressive distillation library. */

#ifndef MTPD_H
#define MTPD_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every C-ABI call.
typedef enum MtpdStatus {
  // Success.
  MTPD_STATUS_OK = 0,
  // A required pointer argument was NULL.
  MTPD_STATUS_NULL_POINTER = 1,
  // An argument was outside the operation's domain (unknown id, bad
  // algorithm name, invalid shapes, non-UTF-8 text, ...).
  MTPD_STATUS_INVALID_ARGUMENT = 2,
  // Serialized input (CSV text or a feature dump) is malformed.
  MTPD_STATUS_PARSE_ERROR = 3,
  // The math broke down: singular systems or non-finite values.
  MTPD_STATUS_NUMERIC_ERROR = 4,
  // The provided output buffer is too small; retry with `*needed` bytes.
  MTPD_STATUS_BUFFER_TOO_SMALL = 5,
  // An internal invariant failed; the handle state is unspecified.
  MTPD_STATUS_INTERNAL = 6,
} MtpdStatus;

// Directed adaptation-cost graph handle (opaque).
typedef struct MtpdCostGraph MtpdCostGraph;

// Teacher quality-score table handle (opaque).
typedef struct MtpdPerfTable MtpdPerfTable;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *mtpd_version(void);

// Message for the most recent failure on the calling thread. The pointer
// stays valid until the next library call from this thread; it is never
// NULL (an empty string means "no failure recorded").
const char *mtpd_last_error(void);

// Parse a cost-matrix CSV (as produced by the experiment pipeline) into a
// new graph handle.
//
// # Safety
// `text` must be a NUL-terminated string; `out` must be a valid pointer.
enum MtpdStatus mtpd_cost_graph_from_csv(const char *text, struct MtpdCostGraph **out);

// Create an empty graph over `n` node ids; fill it with
// [`mtpd_cost_graph_set_cost`].
//
// # Safety
// `ids` must point to `n` NUL-terminated strings; `out` must be valid.
enum MtpdStatus mtpd_cost_graph_new(const char *const *ids, size_t n, struct MtpdCostGraph **out);

// Set the directed cost `from → to`. The diagonal is rejected.
//
// # Safety
// `graph` must be a live handle; `from`/`to` NUL-terminated strings.
enum MtpdStatus mtpd_cost_graph_set_cost(struct MtpdCostGraph *graph,
                                         const char *from,
                                         const char *to,
                                         double value);

// Read the directed cost `from → to` into `out_value`.
//
// # Safety
// `graph` must be a live handle; `from`/`to` NUL-terminated strings;
// `out_value` a valid pointer.
enum MtpdStatus mtpd_cost_graph_cost(const struct MtpdCostGraph *graph,
                                     const char *from,
                                     const char *to,
                                     double *out_value);

// Serialize the graph to the same CSV dialect `mtpd_cost_graph_from_csv`
// accepts.
//
// # Safety
// `graph` must be a live handle; `buf`/`needed` per the buffer convention.
enum MtpdStatus mtpd_cost_graph_to_csv(const struct MtpdCostGraph *graph,
                                       char *buf,
                                       size_t cap,
                                       size_t *needed);

// Release a graph handle. NULL is a no-op.
//
// # Safety
// `graph` must be NULL or an unreleased handle from this library.
void mtpd_cost_graph_free(struct MtpdCostGraph *graph);

// Build a quality table from parallel `ids`/`scores` arrays of length `n`.
//
// # Safety
// `table_id` and each `ids[i]` must be NUL-terminated strings; `scores`
// must hold `n` doubles; `out` must be valid.
enum MtpdStatus mtpd_perf_table_new(const char *table_id,
                                    const char *const *ids,
                                    const double *scores,
                                    size_t n,
                                    struct MtpdPerfTable **out);

// Parse an `id,q` CSV into a new table handle.
//
// # Safety
// `table_id` and `text` must be NUL-terminated strings; `out` valid.
enum MtpdStatus mtpd_perf_table_from_csv(const char *table_id,
                                         const char *text,
                                         struct MtpdPerfTable **out);

// Release a table handle. NULL is a no-op.
//
// # Safety
// `table` must be NULL or an unreleased handle from this library.
void mtpd_perf_table_free(struct MtpdPerfTable *table);

// Plan a teacher curriculum over `graph` and `table` and write the order as
// comma-joined ids (first stage first).
//
// `algorithm` is one of `bgs`, `forward`, `sp-sum`, `sp-max`, `topk`; `k`
// caps the curriculum length. The student is the one graph node without a
// quality score.
//
// # Safety
// `graph`/`table` must be live handles; `algorithm` a NUL-terminated
// string; `buf`/`needed` per the buffer convention.
enum MtpdStatus mtpd_plan(const struct MtpdCostGraph *graph,
                          const struct MtpdPerfTable *table,
                          const char *algorithm,
                          size_t k,
                          char *buf,
                          size_t cap,
                          size_t *needed);

// Number of teacher orders of length 1..=k over a pool of `pool` teachers,
// saturating at `UINT64_MAX`.
//
// # Safety
// `out_count` must be a valid pointer.
enum MtpdStatus mtpd_enumeration_count(size_t pool, size_t k, uint64_t *out_count);

// Directed adaptation cost between two models from serialized feature
// dumps (as written by the pipeline's feature export): fit the best
// ridge-regularized channel map on the train dumps, evaluate the
// feature-matching loss on the validation dumps.
//
// All four buffers carry the binary feature-dump format; `from_*` dumps
// must agree with each other in shape, as must `to_*` dumps.
//
// # Safety
// Each pointer must reference `len` readable bytes; `out_cost` must be a
// valid pointer.
enum MtpdStatus mtpd_adaptation_cost(const uint8_t *from_train,
                                     size_t from_train_len,
                                     const uint8_t *to_train,
                                     size_t to_train_len,
                                     const uint8_t *from_val,
                                     size_t from_val_len,
                                     const uint8_t *to_val,
                                     size_t to_val_len,
                                     double ridge_eps,
                                     double *out_cost);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MTPD_H */
