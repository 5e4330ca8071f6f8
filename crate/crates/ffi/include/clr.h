#ifndef CLR_H
#define CLR_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ClrStatus {
  CLR_STATUS_OK = 0,
  CLR_STATUS_NULL_POINTER = 1,
  CLR_STATUS_INVALID_ARGUMENT = 2,
  CLR_STATUS_CONFIG = 3,
  CLR_STATUS_DATA = 4,
  CLR_STATUS_CAPACITY = 5,
  CLR_STATUS_DECODE = 6,
  CLR_STATUS_BUFFER_TOO_SMALL = 7,
  CLR_STATUS_PANIC = 8,
} ClrStatus;

/**
 * A dataset of N observations of J features with a target.
 */
typedef struct ClrDataset ClrDataset;

/**
 * A fitted model together with the configuration used to fit it.
 */
typedef struct ClrModel ClrModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. Valid until the next call.
 */
const char *clr_last_error(void);

/**
 * Length in bits of the universal code of `n`.
 *
 * # Safety
 * `bits` must be a valid pointer.
 */
enum ClrStatus clr_u_length(int64_t n, uint32_t *bits);

/**
 * Writes the universal code of `n` MSB-first into `buf`.
 *
 * On `BufferTooSmall`, `bits` still receives the required length.
 *
 * # Safety
 * `buf` must hold `cap` bytes; `bits` must be a valid pointer.
 */
enum ClrStatus clr_u_encode(int64_t n, uint8_t *buf, size_t cap, uint32_t *bits);

/**
 * Length of the rational code of `theta` at precision `delta`, and the value it decodes to.
 *
 * # Safety
 * `bits` must be valid; `reconstructed` may be NULL.
 */
enum ClrStatus clr_alpha_encode(double theta, double delta, uint32_t *bits, double *reconstructed);

/**
 * Builds a dataset from a row-major N×J feature array and N targets.
 *
 * # Safety
 * `x` must hold `n_obs * n_features` values, `y` must hold `n_obs`, `dataset` must be valid.
 */
enum ClrStatus clr_dataset_new(const double *x,
                               size_t n_obs,
                               size_t n_features,
                               const double *y,
                               struct ClrDataset **dataset);

/**
 * # Safety
 * `dataset` must come from `clr_dataset_new` and not be used afterwards. NULL is ignored.
 */
void clr_dataset_free(struct ClrDataset *dataset);

/**
 * Fits a model. `config_json` may be NULL for defaults.
 *
 * # Safety
 * `dataset` must be a live handle, `config_json` NULL or a C string, `model` valid.
 */
enum ClrStatus clr_fit(const struct ClrDataset *dataset,
                       const char *config_json,
                       struct ClrModel **model);

/**
 * # Safety
 * `model` must come from `clr_fit` and not be used afterwards. NULL is ignored.
 */
void clr_model_free(struct ClrModel *model);

/**
 * Number of model features K, including the bias.
 *
 * # Safety
 * `model` must be a live handle and `k` valid.
 */
enum ClrStatus clr_model_n_features(const struct ClrModel *model, size_t *k);

/**
 * Copies the K coded parameters (zero for culled features) into `theta`.
 *
 * # Safety
 * `model` must be a live handle and `theta` hold `len` values.
 */
enum ClrStatus clr_model_theta(const struct ClrModel *model, double *theta, size_t len);

/**
 * Exact description length in bits, and the number of nonzero parameters.
 *
 * # Safety
 * `model` must be a live handle; either output may be NULL.
 */
enum ClrStatus clr_model_summary(const struct ClrModel *model,
                                 double *description_bits,
                                 size_t *nonzero);

/**
 * Encodes the dataset's target with `model`. Release the buffer with `clr_bytes_free`.
 *
 * # Safety
 * Handles must be live; `bytes` and `len` must be valid.
 */
enum ClrStatus clr_encode(const struct ClrDataset *dataset,
                          const struct ClrModel *model,
                          uint8_t **bytes,
                          size_t *len);

/**
 * # Safety
 * `bytes`/`len` must come from `clr_encode`. NULL is ignored.
 */
void clr_bytes_free(uint8_t *bytes, size_t len);

/**
 * Decodes a stream given the row-major N×J features used at encode time.
 * `config_json` must match the encoder's feature settings; NULL for defaults.
 *
 * # Safety
 * `bytes` must hold `len` bytes, `x` `n_obs * n_features` values, `target` `n_obs` values.
 */
enum ClrStatus clr_decode(const uint8_t *bytes,
                          size_t len,
                          const double *x,
                          size_t n_obs,
                          size_t n_features,
                          const char *config_json,
                          double *target);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CLR_H */
