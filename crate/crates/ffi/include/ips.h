#ifndef IPS_H
#define IPS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum IpsStatus {
  IPS_STATUS_OK = 0,
  IPS_STATUS_NULL_POINTER = 1,
  IPS_STATUS_INVALID_ARGUMENT = 2,
  IPS_STATUS_CONFIG = 3,
  IPS_STATUS_DATA = 4,
  IPS_STATUS_ESTIMATION = 5,
  IPS_STATUS_IO = 6,
  IPS_STATUS_PANIC = 7,
} IpsStatus;

/**
 * Opaque estimated curve with its influence values.
 */
typedef struct IpsCurve IpsCurve;

/**
 * Opaque analysis frame.
 */
typedef struct IpsFrame IpsFrame;

typedef struct IpsCurvePoint {
  double delta;
  double estimate;
  double std_error;
  double pointwise_lo;
  double pointwise_hi;
  /**
   * NaN when the band is absent.
   */
  double band_lo;
  double band_hi;
} IpsCurvePoint;

typedef struct IpsContrast {
  double delta_lo;
  double delta_hi;
  double interval_lo_lo;
  double interval_lo_hi;
  double interval_hi_lo;
  double interval_hi_hi;
  /**
   * Difference estimate and interval; NaN for the overlap test.
   */
  double difference;
  double difference_lo;
  double difference_hi;
  bool overlap;
  bool reject;
} IpsContrast;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failure on this thread, or null. Valid until the next failing
 * call on the same thread.
 */
const char *ips_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ips_version(void);

/**
 * `δπ / (δπ + 1 − π)`. NaN for δ ≤ 0 or π outside [0, 1].
 */
double ips_shift_propensity(double delta, double pi);

/**
 * Influence value of one unit. NaN when `a` or `y` is not 0/1, δ ≤ 0 or π is
 * outside [0, 1].
 */
double ips_influence_value(double delta, uint8_t a, uint8_t y, double pi, double mu1, double mu0);

/**
 * Builds a frame from a row-major `n × p` covariate array and 0/1 vectors of length n.
 *
 * # Safety
 * `x` must point to `n * p` doubles (may be null when `p == 0`); `a` and `y` to `n`
 * bytes; `out` must be writable.
 */
enum IpsStatus ips_frame_from_arrays(const double *x,
                                     size_t n,
                                     size_t p,
                                     const uint8_t *a,
                                     const uint8_t *y,
                                     struct IpsFrame **out);

/**
 * Loads and encodes a CSV file. `schema_json` is a column schema object, e.g.
 * `{"outcome_column":"y","treatment_column":"a","covariate_columns":["x1"]}`.
 *
 * # Safety
 * `path` and `schema_json` must be NUL-terminated strings; `out` must be writable.
 */
enum IpsStatus ips_frame_from_csv(const char *path, const char *schema_json, struct IpsFrame **out);

/**
 * # Safety
 * `frame` must come from an `ips_frame_from_*` call and not be freed twice.
 */
void ips_frame_free(struct IpsFrame *frame);

/**
 * Number of rows, or 0 for a null handle.
 *
 * # Safety
 * `frame` must be null or a live handle.
 */
size_t ips_frame_rows(const struct IpsFrame *frame);

/**
 * Number of encoded covariate columns, or 0 for a null handle.
 *
 * # Safety
 * `frame` must be null or a live handle.
 */
size_t ips_frame_cols(const struct IpsFrame *frame);

/**
 * Cross-fits nuisances and estimates the curve with uniform bands. `options_json`
 * must contain `seed`; `grid`, `k_folds`, `learners`, `inner_folds`,
 * `outcome_mode`, `bootstrap` and `alpha` are optional.
 *
 * # Safety
 * `frame` must be a live handle, `options_json` a NUL-terminated string and `out`
 * writable.
 */
enum IpsStatus ips_estimate(const struct IpsFrame *frame,
                            const char *options_json,
                            struct IpsCurve **out);

/**
 * # Safety
 * `curve` must come from [`ips_estimate`] and not be freed twice.
 */
void ips_curve_free(struct IpsCurve *curve);

/**
 * Number of grid points, or 0 for a null handle.
 *
 * # Safety
 * `curve` must be null or a live handle.
 */
size_t ips_curve_len(const struct IpsCurve *curve);

/**
 * Bootstrap critical value, or NaN.
 *
 * # Safety
 * `curve` must be null or a live handle.
 */
double ips_curve_critical_value(const struct IpsCurve *curve);

/**
 * # Safety
 * `curve` must be a live handle and `out` writable.
 */
enum IpsStatus ips_curve_point(const struct IpsCurve *curve,
                               size_t index,
                               struct IpsCurvePoint *out);

/**
 * The curve as a JSON string. Release it with [`ips_string_free`].
 *
 * # Safety
 * `curve` must be a live handle and `out` writable.
 */
enum IpsStatus ips_curve_to_json(const struct IpsCurve *curve, char **out);

/**
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void ips_string_free(char *s);

/**
 * Overlap test between two grid points, on the uniform band (`use_uniform`) or
 * the pointwise intervals. Off-grid δ values fail with the nearest grid point in
 * the error message.
 *
 * # Safety
 * `curve` must be a live handle and `out` writable.
 */
enum IpsStatus ips_contrast_overlap(const struct IpsCurve *curve,
                                    double delta_lo,
                                    double delta_hi,
                                    bool use_uniform,
                                    struct IpsContrast *out);

/**
 * Wald test of `ψ(δ_hi) − ψ(δ_lo) = 0` from per-unit influence differences.
 *
 * # Safety
 * `curve` must be a live handle and `out` writable.
 */
enum IpsStatus ips_contrast_difference(const struct IpsCurve *curve,
                                       double delta_lo,
                                       double delta_hi,
                                       struct IpsContrast *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* IPS_H */
