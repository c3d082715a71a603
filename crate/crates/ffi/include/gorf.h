#ifndef GORF_H
#define GORF_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  GORF_STATUS_OK = 0,
  GORF_STATUS_NULL_POINTER = 1,
  GORF_STATUS_INVALID_ARGUMENT = 2,
  GORF_STATUS_NUMERICAL = 3,
  GORF_STATUS_DATA = 4,
  GORF_STATUS_INCOMPATIBLE = 5,
  GORF_STATUS_PANIC = 6,
} GorfStatus;

typedef enum {
  GORF_METHOD_GRFF = 0,
  GORF_METHOD_GORF = 1,
  GORF_METHOD_RFF = 2,
  GORF_METHOD_ORF = 3,
} GorfMethod;

typedef enum {
  GORF_COUPLING_STACKED = 0,
  GORF_COUPLING_TRUNCATED = 1,
  GORF_COUPLING_BLOCK = 2,
} GorfCoupling;

/*
 A kernel with its prepared spectrum.
 */
typedef struct GorfKernel GorfKernel;

/*
 A sampled feature map.
 */
typedef struct GorfModel GorfModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or NULL. The pointer
 stays valid until the next failing call on the same thread.
 */
const char *gorf_last_error_message(void);

/*
 Library version as a static string.
 */
const char *gorf_version(void);

/*
 Parse a kernel (inline form such as `gaussian:sigma=1` or TOML) and
 prepare its spectrum. `dim` is used when the text does not set one;
 pass 0 to require it in the text.

 # Safety
 `spec` must be a NUL-terminated string and `out` a valid pointer.
 */
GorfStatus gorf_kernel_new(const char *spec, uintptr_t dim, GorfKernel **out);

/*
 # Safety
 `kernel` must come from `gorf_kernel_new` and not be used afterwards.
 */
void gorf_kernel_free(GorfKernel *kernel);

/*
 # Safety
 `kernel` must be a live handle.
 */
uintptr_t gorf_kernel_dim(const GorfKernel *kernel);

/*
 Positive and negative spectral masses.

 # Safety
 `kernel` must be a live handle; `pos` and `neg` valid pointers.
 */
GorfStatus gorf_kernel_masses(const GorfKernel *kernel, double *pos, double *neg);

/*
 Exact kernel value k(x, y).

 # Safety
 `x` and `y` must point to `dim` doubles.
 */
GorfStatus gorf_kernel_eval(const GorfKernel *kernel,
                            const double *x,
                            const double *y,
                            uintptr_t dim,
                            double *out);

/*
 Sample a feature model with `s` features per part from `seed`.

 # Safety
 `kernel` must be a live handle and `out` a valid pointer.
 */
GorfStatus gorf_model_build(const GorfKernel *kernel,
                            GorfMethod method,
                            GorfCoupling coupling,
                            uintptr_t s,
                            uint64_t seed,
                            GorfModel **out);

/*
 # Safety
 `model` must come from this library and not be used afterwards.
 */
void gorf_model_free(GorfModel *model);

/*
 Length of a lifted vector (4s), or 0 for a null handle.

 # Safety
 `model` must be a live handle or null.
 */
uintptr_t gorf_model_lift_len(const GorfModel *model);

/*
 Write the lifted vector of `x` into `out` (capacity `out_len`). The
 first half carries the positive sign, the second half the negative.

 # Safety
 `x` must point to `dim` doubles and `out` to `out_len` doubles.
 */
GorfStatus gorf_model_lift(const GorfModel *model,
                           const double *x,
                           uintptr_t dim,
                           double *out,
                           uintptr_t out_len);

/*
 Feature estimate of k(x, y).

 # Safety
 `x` and `y` must point to `dim` doubles.
 */
GorfStatus gorf_model_approx_kernel(const GorfModel *model,
                                    const double *x,
                                    const double *y,
                                    uintptr_t dim,
                                    double *out);

/*
 Serialize a model to JSON; free the result with `gorf_string_free`.

 # Safety
 `model` must be a live handle and `out` a valid pointer.
 */
GorfStatus gorf_model_to_json(const GorfModel *model, char **out);

/*
 # Safety
 `json` must be NUL-terminated and `out` a valid pointer.
 */
GorfStatus gorf_model_from_json(const char *json, GorfModel **out);

/*
 # Safety
 `s` must come from this library and not be used afterwards.
 */
void gorf_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GORF_H */
