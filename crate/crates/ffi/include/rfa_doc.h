#ifndef RFA_DOC_H
#define RFA_DOC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum RfaStatus {
  RFA_STATUS_OK = 0,
  RFA_STATUS_NULL_POINTER = 1,
  RFA_STATUS_INVALID_ARGUMENT = 2,
  RFA_STATUS_IO = 3,
  RFA_STATUS_PARSE = 4,
  RFA_STATUS_OUT_OF_VOCAB = 5,
  RFA_STATUS_BUFFER_TOO_SMALL = 6,
  RFA_STATUS_INTERNAL = 7,
  RFA_STATUS_PANIC = 8,
} RfaStatus;

/**
 * A sampled random feature map.
 */
typedef struct RfaFeatureMap RfaFeatureMap;

/**
 * A loaded checkpoint.
 */
typedef struct RfaModel RfaModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the last failure on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *rfa_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *rfa_version(void);

/**
 * Loads a checkpoint file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` valid for one write.
 */
enum RfaStatus rfa_model_load(const char *path, struct RfaModel **out);

/**
 * Releases a model. Null is ignored.
 *
 * # Safety
 * `model` must come from [`rfa_model_load`] and not be used afterwards.
 */
void rfa_model_free(struct RfaModel *model);

/**
 * Vocabulary size of the model, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t rfa_model_vocab_size(const struct RfaModel *model);

/**
 * Translates one source window. `beam` 0 selects greedy decoding; `max_len`
 * 0 selects the default cap. When `out_cap` is too small the call fails
 * with `RFA_STATUS_BUFFER_TOO_SMALL` and `*out_len` holds the needed size.
 *
 * # Safety
 * `src` must be valid for `src_len` reads, `out` for `out_cap` writes and
 * `out_len` for one write.
 */
enum RfaStatus rfa_model_translate(const struct RfaModel *model,
                                   const uint32_t *src,
                                   size_t src_len,
                                   size_t beam,
                                   size_t max_len,
                                   uint32_t *out,
                                   size_t out_cap,
                                   size_t *out_len);

/**
 * `log p(tgt EOS | src)` under teacher forcing.
 *
 * # Safety
 * `src` and `tgt` must be valid for their lengths, `out` for one write.
 */
enum RfaStatus rfa_model_log_prob(const struct RfaModel *model,
                                  const uint32_t *src,
                                  size_t src_len,
                                  const uint32_t *tgt,
                                  size_t tgt_len,
                                  double *out);

/**
 * Samples a feature map with `num_features` frequencies over `input_dim`
 * inputs; its output has `2 * num_features` entries.
 *
 * # Safety
 * `out` must be valid for one write.
 */
enum RfaStatus rfa_feature_map_new(size_t input_dim,
                                   size_t num_features,
                                   double sigma,
                                   uint64_t seed,
                                   struct RfaFeatureMap **out);

/**
 * Releases a feature map. Null is ignored.
 *
 * # Safety
 * `map` must come from [`rfa_feature_map_new`] and not be used afterwards.
 */
void rfa_feature_map_free(struct RfaFeatureMap *map);

/**
 * Output length of `phi`, or 0 for a null handle.
 *
 * # Safety
 * `map` must be null or a live handle.
 */
size_t rfa_feature_map_output_dim(const struct RfaFeatureMap *map);

/**
 * Writes `phi(x)` into `out`, which must hold exactly the output length.
 *
 * # Safety
 * `x` must be valid for `x_len` reads and `out` for `out_len` writes.
 */
enum RfaStatus rfa_feature_map_phi(const struct RfaFeatureMap *map,
                                   const double *x,
                                   size_t x_len,
                                   double *out,
                                   size_t out_len);

/**
 * Unbiased estimate of `exp(-|x - y|^2 / (2 sigma^2))`.
 *
 * # Safety
 * `x` and `y` must be valid for `len` reads and `out` for one write.
 */
enum RfaStatus rfa_feature_map_kernel(const struct RfaFeatureMap *map,
                                      const double *x,
                                      const double *y,
                                      size_t len,
                                      double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RFA_DOC_H */
