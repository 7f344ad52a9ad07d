/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef VDBA_H
#define VDBA_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum VdbaStatus {
  VDBA_STATUS_OK = 0,
  VDBA_STATUS_NULL_POINTER = 1,
  VDBA_STATUS_INVALID_ARGUMENT = 2,
  VDBA_STATUS_INVALID_FRAME = 3,
  VDBA_STATUS_MIXED_FRAMES = 4,
  VDBA_STATUS_UNSCHEDULABLE = 5,
  VDBA_STATUS_INSTANCE_TOO_LARGE = 6,
  VDBA_STATUS_BUFFER_TOO_SMALL = 7,
  VDBA_STATUS_NOT_FOUND = 8,
  VDBA_STATUS_PANIC = 9,
} VdbaStatus;

typedef enum VdbaSlaType {
  VDBA_SLA_TYPE_TYPE1 = 0,
  VDBA_SLA_TYPE_TYPE2 = 1,
  VDBA_SLA_TYPE_BEST_EFFORT = 2,
} VdbaSlaType;

/**
 * Stateful merging engine.
 */
typedef struct VdbaHypervisor VdbaHypervisor;

typedef struct VdbaFrameConfig {
  uint32_t capacity_words;
  uint32_t guard_words;
} VdbaFrameConfig;

/**
 * One burst request of a virtual map. `sla` holds a `VdbaSlaType` value;
 * latency targets follow from it and the frame configuration.
 */
typedef struct VdbaRequest {
  uint32_t vno_id;
  uint32_t flow_id;
  uint32_t requested_start;
  uint32_t size_words;
  uint32_t sla;
} VdbaRequest;

/**
 * One burst of the physical map. `start` is meaningless when `scheduled`
 * is false. `sla` holds a `VdbaSlaType` value.
 */
typedef struct VdbaGrant {
  uint32_t vno_id;
  uint32_t flow_id;
  uint32_t requested_start;
  uint32_t size_words;
  uint32_t start;
  bool scheduled;
  bool delayed;
  uint32_t sla;
} VdbaGrant;

typedef struct VdbaFlowRecord {
  uint32_t flow_id;
  enum VdbaSlaType sla;
  uint64_t cum_total;
  uint64_t cum_delayed;
  uint64_t flow_breach_frames;
  /**
   * Allowed non-compliance minus the observed delayed fraction.
   */
  double headroom;
} VdbaFlowRecord;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Frame configuration for a 125 µs frame of 38,880 words.
 */
struct VdbaFrameConfig vdba_frame_config_default(void);

/**
 * 125 µs frame of `capacity_words` words with the guard derived from 0.1 µs.
 */
struct VdbaFrameConfig vdba_frame_config_with_capacity(uint32_t capacity_words);

/**
 * Words spanned by `t_us` microseconds in frames of `cfg`.
 */
uint32_t vdba_words_from_time_us(double t_us, struct VdbaFrameConfig cfg);

/**
 * Message of the last failure on this thread, or null. Valid until the
 * next call into this library from the same thread.
 */
const char *vdba_last_error(void);

/**
 * Creates a hypervisor with an empty flow-breach table.
 */
enum VdbaStatus vdba_hypervisor_new(struct VdbaFrameConfig cfg, struct VdbaHypervisor **out);

/**
 * Releases a handle. Null is ignored.
 */
void vdba_hypervisor_free(struct VdbaHypervisor *hv);

/**
 * Merges one frame and updates the handle's flow-breach table.
 * `written` receives the grant count even when the buffer is too small,
 * in which case the table is left untouched.
 */
enum VdbaStatus vdba_hypervisor_merge(struct VdbaHypervisor *hv,
                                      uint64_t frame_index,
                                      const struct VdbaRequest *requests,
                                      size_t n_requests,
                                      struct VdbaGrant *out,
                                      size_t out_len,
                                      size_t *written);

/**
 * Copies the table entry of `flow_id`.
 */
enum VdbaStatus vdba_hypervisor_flow_record(const struct VdbaHypervisor *hv,
                                            uint32_t flow_id,
                                            struct VdbaFlowRecord *out);

/**
 * Merges one frame with fixed class priority and no history.
 */
enum VdbaStatus vdba_merge_stateless(struct VdbaFrameConfig cfg,
                                     uint64_t frame_index,
                                     const struct VdbaRequest *requests,
                                     size_t n_requests,
                                     struct VdbaGrant *out,
                                     size_t out_len,
                                     size_t *written);

/**
 * Solves one frame exactly. Instances with more than `max_allocations`
 * SLA requests are refused. When `time_budget_ms` runs out the best
 * schedule found is returned with `*proven_optimal` set to false.
 */
enum VdbaStatus vdba_solve_exact(struct VdbaFrameConfig cfg,
                                 const struct VdbaRequest *requests,
                                 size_t n_requests,
                                 size_t max_allocations,
                                 uint64_t time_budget_ms,
                                 struct VdbaGrant *out,
                                 size_t out_len,
                                 size_t *written,
                                 uint32_t *flow_breaches,
                                 bool *proven_optimal);

/**
 * Checks a physical map for overlaps, guard gaps, out-of-frame bursts,
 * early starts and duplicates. `violations` receives the number found.
 */
enum VdbaStatus vdba_validate(struct VdbaFrameConfig cfg,
                              const struct VdbaGrant *grants,
                              size_t n_grants,
                              size_t *violations);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VDBA_H */
