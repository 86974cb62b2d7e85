#ifndef EVENTSR_H
#define EVENTSR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum EsrStatus {
  ESR_STATUS_OK = 0,
  /**
   * Bad argument or configuration.
   */
  ESR_STATUS_INVALID_ARGUMENT = 1,
  /**
   * Missing, malformed or insufficient data.
   */
  ESR_STATUS_DATA = 2,
  /**
   * Non-finite values during computation.
   */
  ESR_STATUS_NUMERICAL = 3,
  /**
   * A required pointer was null.
   */
  ESR_STATUS_NULL_POINTER = 4,
  /**
   * An internal panic was caught.
   */
  ESR_STATUS_PANIC = 5,
} EsrStatus;

/**
 * A trained phase checkpoint.
 */
typedef struct EsrCheckpoint EsrCheckpoint;

/**
 * A validated, time-sorted event stream.
 */
typedef struct EsrEvents EsrEvents;

/**
 * A dense f64 tensor in row-major order.
 */
typedef struct EsrTensor EsrTensor;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *esr_version(void);

/**
 * Bytes needed for the last error message including the NUL, or 0 if none.
 */
size_t esr_last_error_length(void);

/**
 * Copies the last error message of this thread into `buf`, truncating to
 * `len - 1` bytes. Returns the bytes written excluding the NUL, or -1 when
 * `buf` is null or `len` is 0.
 *
 * # Safety
 * `buf` must point to `len` writable bytes.
 */
ptrdiff_t esr_last_error_message(char *buf, size_t len);

/**
 * Builds a stream from parallel arrays; events are validated and sorted.
 *
 * # Safety
 * Each array must hold `count` elements (may be null when `count` is 0);
 * `out` must be writable.
 */
enum EsrStatus esr_events_new(const uint64_t *t,
                              const uint16_t *x,
                              const uint16_t *y,
                              const int8_t *p,
                              size_t count,
                              uint16_t width,
                              uint16_t height,
                              struct EsrEvents **out);

/**
 * Reads an EVT1 file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum EsrStatus esr_events_load(const char *path, struct EsrEvents **out);

/**
 * Writes an EVT1 file.
 *
 * # Safety
 * `events` must be a live handle; `path` a NUL-terminated string.
 */
enum EsrStatus esr_events_save(const struct EsrEvents *events, const char *path);

/**
 * Number of events; 0 for a null handle.
 *
 * # Safety
 * `events` must be null or a live handle.
 */
size_t esr_events_len(const struct EsrEvents *events);

/**
 * Sensor width and height.
 *
 * # Safety
 * `events` must be a live handle; `width` and `height` writable.
 */
enum EsrStatus esr_events_dims(const struct EsrEvents *events, uint16_t *width, uint16_t *height);

/**
 * Event `index` in time order.
 *
 * # Safety
 * `events` must be a live handle; the four outputs writable.
 */
enum EsrStatus esr_events_get(const struct EsrEvents *events,
                              size_t index,
                              uint64_t *t,
                              uint16_t *x,
                              uint16_t *y,
                              int8_t *p);

/**
 * # Safety
 * `events` must be null or a handle not yet freed.
 */
void esr_events_free(struct EsrEvents *events);

/**
 * Simulates events from a directory of PNG frames (`..t<us>.png` names
 * carry timestamps, otherwise frames are 10 ms apart).
 *
 * # Safety
 * `video_dir` must be a NUL-terminated string; `out` writable.
 */
enum EsrStatus esr_simulate_video_dir(const char *video_dir,
                                      double contrast_threshold,
                                      uint64_t seed,
                                      struct EsrEvents **out);

/**
 * Stack of `frames` event frames with `events_per_frame` events each,
 * starting at event `start`, as an `[n, H, W]` tensor.
 *
 * # Safety
 * `events` must be a live handle; `out` writable.
 */
enum EsrStatus esr_stack_by_number(const struct EsrEvents *events,
                                   size_t events_per_frame,
                                   size_t frames,
                                   size_t start,
                                   struct EsrTensor **out);

/**
 * Copies `data` (row-major, `product(shape)` values) into a new tensor.
 *
 * # Safety
 * `shape` must hold `ndim` values and `data` `len` values; `out` writable.
 */
enum EsrStatus esr_tensor_new(const size_t *shape,
                              size_t ndim,
                              const double *data,
                              size_t len,
                              struct EsrTensor **out);

/**
 * Reads a TNS1 file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` writable.
 */
enum EsrStatus esr_tensor_load(const char *path, struct EsrTensor **out);

/**
 * Writes a TNS1 file; `dtype` is 1 for float32, 2 for float64.
 *
 * # Safety
 * `tensor` must be a live handle; `path` a NUL-terminated string.
 */
enum EsrStatus esr_tensor_save(const struct EsrTensor *tensor, const char *path, uint8_t dtype);

/**
 * Number of dimensions; 0 for a null handle.
 *
 * # Safety
 * `tensor` must be null or a live handle.
 */
size_t esr_tensor_ndim(const struct EsrTensor *tensor);

/**
 * Number of elements; 0 for a null handle.
 *
 * # Safety
 * `tensor` must be null or a live handle.
 */
size_t esr_tensor_len(const struct EsrTensor *tensor);

/**
 * Copies the shape into `dims`, which must hold at least `ndim` entries.
 *
 * # Safety
 * `tensor` must be a live handle; `dims` must hold `cap` writable values.
 */
enum EsrStatus esr_tensor_shape(const struct EsrTensor *tensor, size_t *dims, size_t cap);

/**
 * Copies the values into `buf`, which must hold exactly `len` elements.
 *
 * # Safety
 * `tensor` must be a live handle; `buf` must hold `len` writable values.
 */
enum EsrStatus esr_tensor_copy_data(const struct EsrTensor *tensor, double *buf, size_t len);

/**
 * # Safety
 * `tensor` must be null or a handle not yet freed.
 */
void esr_tensor_free(struct EsrTensor *tensor);

/**
 * Loads a checkpoint directory.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` writable.
 */
enum EsrStatus esr_checkpoint_load(const char *path, struct EsrCheckpoint **out);

/**
 * Training phase of the checkpoint (1 to 3); 0 for a null handle.
 *
 * # Safety
 * `ckpt` must be null or a live handle.
 */
uint8_t esr_checkpoint_phase(const struct EsrCheckpoint *ckpt);

/**
 * Runs the phase-`phase` generator cascade on an `[n, H, W]` stack and
 * returns the `[H', W']` image.
 *
 * # Safety
 * `ckpt` and `stack` must be live handles; `out` writable.
 */
enum EsrStatus esr_checkpoint_infer(const struct EsrCheckpoint *ckpt,
                                    uint8_t phase,
                                    const struct EsrTensor *stack,
                                    struct EsrTensor **out);

/**
 * # Safety
 * `ckpt` must be null or a handle not yet freed.
 */
void esr_checkpoint_free(struct EsrCheckpoint *ckpt);

/**
 * PSNR in dB of two `[H, W]` images in [0, 1].
 *
 * # Safety
 * `a` and `b` must be live handles; `out` writable.
 */
enum EsrStatus esr_psnr(const struct EsrTensor *a, const struct EsrTensor *b, double *out);

/**
 * Mean SSIM of two `[H, W]` images in [0, 1].
 *
 * # Safety
 * `a` and `b` must be live handles; `out` writable.
 */
enum EsrStatus esr_ssim(const struct EsrTensor *a, const struct EsrTensor *b, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EVENTSR_H */
