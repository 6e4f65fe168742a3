/* Public C interface to the GCNet library.
 *
 * Models are opaque handles. Every function returns a gc_status; on any
 * status other than GC_OK, gc_last_error() holds a thread-local message
 * describing the failure. Handles returned through out-parameters are owned
 * by the caller and released with gc_model_free().
 *
 * Models are immutable through this interface once built or loaded, except
 * for gc_toy_train() which produces a freshly trained model. Concurrent
 * forward passes over one model handle are safe.
 */

#ifndef GCNET_GCNET_H
#define GCNET_GCNET_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define GC_API __declspec(dllexport)
#else
#define GC_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef struct gc_model gc_model;

typedef enum gc_status {
    GC_OK = 0,
    GC_ERR_INVALID_ARGUMENT = 1, /* rejected input or state */
    GC_ERR_IO = 2,               /* filesystem failure */
    GC_ERR_FORMAT = 3,           /* malformed model or image file */
    GC_ERR_NUMERIC = 4,          /* numerical failure (training divergence) */
    GC_ERR_INTERNAL = 5
} gc_status;

typedef enum gc_variant { GC_VARIANT_S = 0, GC_VARIANT_M = 1, GC_VARIANT_L = 2 } gc_variant;
typedef enum gc_form { GC_FORM_TRAINING = 0, GC_FORM_INFERENCE = 1 } gc_form;
typedef enum gc_dtype { GC_DTYPE_F32 = 0, GC_DTYPE_F64 = 1 } gc_dtype;
typedef enum gc_ppm_kind { GC_PPM_DAPPM = 0, GC_PPM_GLOBAL = 1 } gc_ppm_kind;

GC_API const char* gc_version(void);
GC_API const char* gc_status_name(gc_status status);
GC_API const char* gc_last_error(void);

/* --- construction, serialization, contraction --- */

typedef struct gc_build_desc {
    gc_variant variant;
    uint32_t num_classes;
    uint32_t base_channels; /* 0 = variant default (32 for S, 64 for M/L) */
    gc_ppm_kind ppm;
    gc_dtype dtype;
    uint64_t seed;
} gc_build_desc;

GC_API gc_status gc_model_build(const gc_build_desc* desc, gc_model** out);
GC_API void gc_model_free(gc_model* model);

GC_API gc_status gc_model_save(const gc_model* model, const char* path);
GC_API gc_status gc_model_load(const char* path, gc_dtype dtype, gc_model** out);

/* Lossless contraction to the single-convolution inference form. */
GC_API gc_status gc_model_contract(const gc_model* model, gc_model** out);

typedef struct gc_model_desc {
    gc_variant variant;
    gc_form form;
    gc_dtype dtype;
    uint32_t num_classes;
    uint32_t base_channels;
    uint32_t paths_per_block; /* N */
} gc_model_desc;

GC_API gc_status gc_model_describe(const gc_model* model, gc_model_desc* out);

/* --- accounting and inference --- */

/* params: weight/bias scalars (BN gamma/beta counted in the training form).
 * flops: one multiply-accumulate counted as one operation, at the given
 * input resolution (h and w divisible by 64). */
GC_API gc_status gc_model_count(const gc_model* model, uint32_t h, uint32_t w, uint64_t* params,
                                uint64_t* flops);

/* Eval-mode logits for a (1, 3, h, w) image in [0, 1]; logits_out must hold
 * num_classes * h * w values. h and w must be divisible by 64. */
GC_API gc_status gc_model_forward_f32(const gc_model* model, const float* image, uint32_t h,
                                      uint32_t w, float* logits_out);
GC_API gc_status gc_model_forward_f64(const gc_model* model, const double* image, uint32_t h,
                                      uint32_t w, double* logits_out);

/* --- equivalence check --- */

typedef struct gc_check_report {
    int32_t trials;
    double tol;
    double max_abs_err;
    double max_rel_err;
    uint64_t argmax_mismatches;
    uint64_t pixels;
    int32_t pass;
} gc_check_report;

/* Contracts a training-form model and compares both forms on seeded random
 * inputs of size h x w. Pass iff max_rel_err <= tol. */
GC_API gc_status gc_model_check(const gc_model* model, int32_t trials, uint32_t h, uint32_t w,
                                double tol, uint64_t seed, gc_check_report* out);

/* --- latency benchmark --- */

typedef struct gc_bench_report {
    uint32_t h, w;
    int32_t warmup_iters, timed_iters;
    double mean_ms, median_ms, p95_ms;
    double fps;
    uint64_t params;
    double gflops;
} gc_bench_report;

/* Batch-1 wall-clock forward timing on a single worker. warmup >= 5,
 * iters >= 20. */
GC_API gc_status gc_model_bench(const gc_model* model, uint32_t h, uint32_t w, int32_t warmup,
                                int32_t iters, uint64_t seed, gc_bench_report* out);
GC_API gc_status gc_bench_write_csv(const gc_model* model, const gc_bench_report* report,
                                    const char* path);

/* --- segmentation of image files --- */

typedef struct gc_segment_info {
    uint32_t in_w, in_h;   /* PPM dimensions */
    uint32_t net_w, net_h; /* network input dimensions after rounding up */
    int32_t resized;       /* nonzero if the input was enlarged to a /64 grid */
} gc_segment_info;

/* Reads a binary PPM (P6), writes per-pixel argmax classes as a binary PGM
 * (P5), or a palette-colorized PPM when write_palette is nonzero. */
GC_API gc_status gc_model_segment(const gc_model* model, const char* image_path,
                                  const char* out_path, int32_t write_palette,
                                  gc_segment_info* info_or_null);

/* --- desk-scale training on the synthetic shapes set --- */

typedef struct gc_toy_train_desc {
    uint64_t seed;
    int32_t iters;      /* 1..2000; 0 = default 1000 */
    int32_t batch;      /* 0 = default */
    int32_t image_size; /* multiple of 64; 0 = default 128 */
    uint32_t base_channels; /* 0 = default 8 */
    double base_lr;     /* 0 = default */
} gc_toy_train_desc;

typedef struct gc_toy_train_result {
    double final_loss;
    double final_miou;
    int32_t num_classes;
} gc_toy_train_result;

/* Trains GCNet-S-narrow (f64) on procedurally generated shape images.
 * trace_csv_path may be NULL; otherwise per-iteration metrics are written
 * as CSV (iter, lr, loss, l_sh, l_ash, val_miou). */
GC_API gc_status gc_toy_train(const gc_toy_train_desc* desc, const char* trace_csv_path,
                              gc_toy_train_result* result_or_null, gc_model** out);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* GCNET_GCNET_H */
