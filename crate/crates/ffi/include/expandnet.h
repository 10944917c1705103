#ifndef EXPANDNET_H
#define EXPANDNET_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define EXPANDNET_OK 0

#define EXPANDNET_ERR_NULL_POINTER 1

#define EXPANDNET_ERR_INVALID_ARGUMENT 2

#define EXPANDNET_ERR_SHAPE 3

#define EXPANDNET_ERR_PLAN 4

#define EXPANDNET_ERR_COMPRESSION 5

#define EXPANDNET_ERR_FORMAT 6

#define EXPANDNET_ERR_IO 7

#define EXPANDNET_ERR_PANIC 8

#define EXPANDNET_DTYPE_F32 0

#define EXPANDNET_DTYPE_F64 1

// Strategy bits for `expandnet_expand`.
#define EXPANDNET_EXPAND_FC 1

#define EXPANDNET_EXPAND_CL 2

#define EXPANDNET_EXPAND_CK 4

// Opaque model handle.
typedef struct ExpandnetModel ExpandnetModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or an empty string.
// The pointer stays valid until the next expandnet call on this thread.
const char *expandnet_last_error_message(void);

// Builds a zoo architecture such as "smallnet7-3conv-c10".
//
// # Safety
// `arch` must be a NUL-terminated string and `out` a writable pointer.
int32_t expandnet_build(const char *arch,
                        int32_t dtype,
                        uint64_t seed,
                        struct ExpandnetModel **out);

// Loads a model manifest and its weight blob.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a writable pointer.
int32_t expandnet_load(const char *path, struct ExpandnetModel **out);

// Writes the manifest to `path` and the weights next to it.
//
// # Safety
// `model` must come from this library and `path` be NUL-terminated.
int32_t expandnet_save(const struct ExpandnetModel *model, const char *path);

// Expands a compact model. `strategies` is a mask of `EXPANDNET_EXPAND_*`
// bits; `fc_depth` is the number of layers each FC expansion produces.
//
// # Safety
// `model` must come from this library and `out` be writable.
int32_t expandnet_expand(const struct ExpandnetModel *model,
                         uint32_t strategies,
                         size_t rate,
                         size_t fc_depth,
                         bool table1_channels,
                         uint64_t seed,
                         struct ExpandnetModel **out);

// Collapses every expansion unit of an expanded model.
//
// # Safety
// `model` must come from this library and `out` be writable.
int32_t expandnet_compress(const struct ExpandnetModel *model, struct ExpandnetModel **out);

// # Safety
// `model` must come from this library and `out` be writable.
int32_t expandnet_param_count(const struct ExpandnetModel *model, size_t *out);

// # Safety
// `model` must come from this library and `out` be writable.
int32_t expandnet_num_classes(const struct ExpandnetModel *model, size_t *out);

// Writes channels, height and width to `out[0..3]`.
//
// # Safety
// `model` must come from this library and `out` point to 3 writable values.
int32_t expandnet_input_shape(const struct ExpandnetModel *model, size_t *out);

// Returns `EXPANDNET_DTYPE_F32` or `EXPANDNET_DTYPE_F64`.
//
// # Safety
// `model` must come from this library and `out` be writable.
int32_t expandnet_dtype(const struct ExpandnetModel *model, int32_t *out);

// Eval-mode logits for `batch` NCHW images, computed in the model's own
// precision. `output` receives `batch * num_classes` values.
//
// # Safety
// `input` must hold `batch * C * H * W` floats and `output` `output_len`.
int32_t expandnet_forward_f32(const struct ExpandnetModel *model,
                              const float *input,
                              size_t batch,
                              float *output,
                              size_t output_len);

// Double-precision variant of `expandnet_forward_f32`.
//
// # Safety
// `input` must hold `batch * C * H * W` doubles and `output` `output_len`.
int32_t expandnet_forward_f64(const struct ExpandnetModel *model,
                              const double *input,
                              size_t batch,
                              double *output,
                              size_t output_len);

// Releases a handle. Null is ignored.
//
// # Safety
// `model` must come from this library and not be used afterwards.
void expandnet_model_free(struct ExpandnetModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EXPANDNET_H */
