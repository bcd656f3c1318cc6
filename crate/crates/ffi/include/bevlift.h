#ifndef BEVLIFT_H
#define BEVLIFT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum BevStatus {
  BEV_STATUS_OK = 0,
  BEV_STATUS_NULL_POINTER = 1,
  BEV_STATUS_CONFIG = 2,
  BEV_STATUS_PRECONDITION = 3,
  BEV_STATUS_VALIDATION = 4,
  BEV_STATUS_ENGINE_MISMATCH = 5,
  BEV_STATUS_IO = 6,
  BEV_STATUS_PARSE = 7,
  BEV_STATUS_USAGE = 8,
  BEV_STATUS_PANIC = 9,
} BevStatus;

// Pooling engine selector.
typedef enum BevEngine {
  BEV_ENGINE_SEQUENTIAL = 0,
  BEV_ENGINE_PREFIX_SUM = 1,
  BEV_ENGINE_SCATTER_ADD = 2,
} BevEngine;

// Opaque camera handle.
typedef struct BevCamera BevCamera;

// Opaque frustum point set handle.
typedef struct BevPoints BevPoints;

// BEV grid extent; mirrors the Rust `BevGridSpec`.
typedef struct BevGrid {
  double x_min;
  double x_max;
  double y_min;
  double y_max;
  double cell_size;
  double z_min;
  double z_max;
} BevGrid;

typedef struct BevMetrics {
  double silog;
  double abs_rel;
  double sq_rel;
  double log10;
  double rmse;
  uintptr_t count;
} BevMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or NULL. Valid until the
// next failing call on the same thread.
const char *bevlift_last_error(void);

// Library version as a static NUL-terminated string.
const char *bevlift_version(void);

// Creates a camera from row-major `k[9]`, row-major ego-to-camera `r[9]` and `t[3]`.
//
// # Safety
// `k`, `r` and `t` must point to 9, 9 and 3 doubles; `out` must be writable.
enum BevStatus bevlift_camera_new(const double *k,
                                  const double *r,
                                  const double *t,
                                  uint32_t width,
                                  uint32_t height,
                                  int32_t view_id,
                                  struct BevCamera **out);

// # Safety
// `cam` must come from [`bevlift_camera_new`] and not be used afterwards.
void bevlift_camera_free(struct BevCamera *cam);

// Projects `n` ego-frame points (`xyz`, 3n doubles). Visible points are written
// as `(u, v, d)` triplets to `uvd` with their input index in `index`, in input
// order; `out_count` receives how many. Both outputs need room for `n` points.
//
// # Safety
// Pointers must be valid for the stated lengths.
enum BevStatus bevlift_project_points(const struct BevCamera *cam,
                                      const double *xyz,
                                      uintptr_t n,
                                      double *uvd,
                                      uintptr_t *index,
                                      uintptr_t *out_count);

// Ego-frame point seen at pixel `(u, v)` with camera depth `d`, written to `out_xyz[3]`.
//
// # Safety
// `cam` must be a live handle and `out_xyz` writable for 3 doubles.
enum BevStatus bevlift_unproject_pixel(const struct BevCamera *cam,
                                       double u,
                                       double v,
                                       double d,
                                       double *out_xyz);

// Relative transform taking points from the `prev` ego frame to the `cur`
// ego frame. Poses are ego-to-global, rotation row-major.
//
// # Safety
// Inputs point to 9 / 3 doubles; outputs are writable for 9 / 3 doubles.
enum BevStatus bevlift_compose_relative(const double *prev_r,
                                        const double *prev_t,
                                        const double *cur_r,
                                        const double *cur_t,
                                        double *out_r,
                                        double *out_t);

// Creates a point set from `n` coordinates (`xyz`, 3n doubles) and features
// (`features`, n × `channels` floats, row-major).
//
// # Safety
// Pointers must be valid for the stated lengths; `out` must be writable.
enum BevStatus bevlift_points_new(const double *xyz,
                                  const float *features,
                                  uintptr_t n,
                                  uintptr_t channels,
                                  struct BevPoints **out);

// # Safety
// `points` must come from [`bevlift_points_new`] and not be used afterwards.
void bevlift_points_free(struct BevPoints *points);

// Number of points in a set, 0 for NULL.
//
// # Safety
// `points` must be NULL or a live handle.
uintptr_t bevlift_points_len(const struct BevPoints *points);

// Rows and columns of a grid.
//
// # Safety
// `rows` and `cols` must be writable.
enum BevStatus bevlift_grid_shape(struct BevGrid grid, uintptr_t *rows, uintptr_t *cols);

// Pools `count` point sets onto `grid`. `out` receives `channels × rows × cols`
// doubles (channel-major) and must hold `out_len` of them; `dropped` receives
// the number of points outside the grid. `workers` applies to scatter-add only.
//
// # Safety
// `sets` must point to `count` live handles; outputs must be writable.
enum BevStatus bevlift_pool(enum BevEngine engine,
                            uintptr_t workers,
                            const struct BevPoints *const *sets,
                            uintptr_t count,
                            struct BevGrid grid,
                            double *out,
                            uintptr_t out_len,
                            uintptr_t *dropped);

// Depth metrics over `n` matched prediction / ground-truth depths.
//
// # Safety
// `pred` and `gt` must hold `n` doubles; `out` must be writable.
enum BevStatus bevlift_depth_metrics(const double *pred,
                                     const double *gt,
                                     uintptr_t n,
                                     struct BevMetrics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BEVLIFT_H */
