#ifndef BID_H
#define BID_H

#pragma once

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Which halves of the forward contrast are active.
typedef enum BidContrast {
  BID_CONTRAST_FULL = 0,
  BID_CONTRAST_POSITIVES_ONLY = 1,
  BID_CONTRAST_NEGATIVES_ONLY = 2,
  BID_CONTRAST_OFF = 3,
} BidContrast;

// Result code of every fallible call.
typedef enum BidStatus {
  BID_STATUS_OK = 0,
  BID_STATUS_NULL_POINTER = 1,
  BID_STATUS_INVALID_ARGUMENT = 2,
  BID_STATUS_ALIGNMENT = 3,
  BID_STATUS_DIMENSION_MISMATCH = 4,
  BID_STATUS_EMPTY = 5,
  BID_STATUS_PANIC = 6,
} BidStatus;

// Opaque selector holding its parameters and the previous decision.
typedef struct BidSelector BidSelector;

// Selector parameters. Start from [`bid_selector_default_params`].
typedef struct BidSelectorParams {
  // Actions per chunk.
  size_t chunk_len;
  // Values per action.
  size_t action_dim;
  // Reference set size K; clamped to the batch size at each call.
  size_t mode_size;
  // Backward decay in [0, 1].
  double rho;
  // Non-zero blends the chosen chunk with the previous decision.
  int32_t use_ema;
  // Blend weight of the new chunk, in (0, 1).
  double ema_lambda;
  enum BidContrast contrast;
} BidSelectorParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Defaults: K = 10, rho = 0.9, full contrast, no blending, lambda = 0.75.
// `chunk_len` and `action_dim` are left at zero for the caller to fill in.
struct BidSelectorParams bid_selector_default_params(void);

// Creates a selector. On success `*out` owns a handle that must be released
// with [`bid_selector_free`].
//
// # Safety
// `params` must point to a valid parameter struct and `out` to writable storage.
enum BidStatus bid_selector_new(const struct BidSelectorParams *params, struct BidSelector **out);

// Releases a selector. Null is ignored.
//
// # Safety
// `sel` must be null or a handle from [`bid_selector_new`] not yet freed.
void bid_selector_free(struct BidSelector *sel);

// Forgets the previous decision, as at the start of an episode.
//
// # Safety
// `sel` must be a live handle.
enum BidStatus bid_selector_reset(struct BidSelector *sel);

// Scores `n_strong` strong and `n_weak` weak chunks planned at `tick` and
// stores the winner as the new previous decision. The previous decision
// only counts when it was made at `tick - 1`.
//
// Writes the winning strong index to `*out_index`. When `out_chunk` is not
// null the executed chunk (blended if enabled) is written there. When
// `out_backward` / `out_forward` are not null they receive `n_strong`
// per-candidate loss terms.
//
// # Safety
// Buffers must hold the documented number of doubles; `out_index` must be writable.
enum BidStatus bid_selector_select(struct BidSelector *sel,
                                   size_t tick,
                                   const double *strong,
                                   size_t n_strong,
                                   const double *weak,
                                   size_t n_weak,
                                   size_t *out_index,
                                   double *out_chunk,
                                   double *out_backward,
                                   double *out_forward);

// Backward coherence of `candidate` (planned one tick after `previous`)
// against `previous`. Both hold `chunk_len * action_dim` doubles.
//
// # Safety
// Buffers must hold the documented number of doubles; `out` must be writable.
enum BidStatus bid_backward_coherence(const double *candidate,
                                      const double *previous,
                                      size_t chunk_len,
                                      size_t action_dim,
                                      double rho,
                                      double *out);

// Total variation distance between two distributions over `len` bins.
// Each must be non-negative and sum to 1.
//
// # Safety
// `p` and `q` must hold `len` doubles; `out` must be writable.
enum BidStatus bid_total_variation(const double *p, const double *q, size_t len, double *out);

// Message of the last failed call on this thread, or null if the last call
// succeeded. Valid until the next call on this thread.
const char *bid_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *bid_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BID_H */
