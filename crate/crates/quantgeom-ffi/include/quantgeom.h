#ifndef QUANTGEOM_H
#define QUANTGEOM_H

/* Generated header; regenerate by building the quantgeom-ffi crate. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum {
  QG_STATUS_OK = 0,
  /**
   * Argument outside the mathematical domain.
   */
  QG_STATUS_ERR_DOMAIN = 1,
  /**
   * Structurally valid input that collapses the operation.
   */
  QG_STATUS_ERR_DEGENERATE = 2,
  /**
   * Result not representable (underflow/overflow).
   */
  QG_STATUS_ERR_OVERFLOW = 3,
  QG_STATUS_ERR_LENGTH_MISMATCH = 4,
  QG_STATUS_ERR_NULL_POINTER = 5,
  /**
   * Internal failure (never expected; indicates a bug).
   */
  QG_STATUS_ERR_INTERNAL = 6,
} QgStatus;

/**
 * Quantization scheme selector for the C surface.
 */
typedef enum {
  QG_SCHEME_BINARY = 0,
  QG_SCHEME_TERNARY = 1,
  QG_SCHEME_MIDRISE = 2,
  QG_SCHEME_GEMMLOWP = 3,
  QG_SCHEME_STOCHASTIC_TERNARY = 4,
} QgScheme;

typedef enum {
  QG_ROUNDING_NEAREST = 0,
  QG_ROUNDING_STOCHASTIC = 1,
} QgRounding;

/**
 * Opaque counter-based random generator.
 */
typedef struct QgRng QgRng;

/**
 * Flattened quantizer description. `threshold` applies to the ternary
 * scheme (absolute units); `bits` to midrise/affine; `clamp_chunks` selects
 * the chunked-average clamp when nonzero, plain min/max when zero.
 */
typedef struct {
  QgScheme scheme;
  QgRounding rounding;
  double threshold;
  uint32_t bits;
  uintptr_t clamp_chunks;
} QgQuantizerSpec;

/**
 * Similarity measurements between a vector and a comparison vector.
 */
typedef struct {
  double dot;
  double l1_w;
  double l2_w;
  double l2_q;
  double cosine;
  double angle_deg;
} QgGeometryReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a NUL-terminated static string.
 */
const char *qg_version(void);

/**
 * Create a generator for (master_seed, stream); free with [`qg_rng_free`].
 */
QgRng *qg_rng_new(uint64_t master_seed, uint64_t stream);

/**
 * Release a generator created by [`qg_rng_new`]. Null is a no-op.
 */
void qg_rng_free(QgRng *rng);

/**
 * Error function.
 */
QgStatus qg_erf(double x, double *out);

/**
 * Standard normal density.
 */
QgStatus qg_std_normal_pdf(double x, double *out);

/**
 * Standard normal CDF.
 */
QgStatus qg_std_normal_cdf(double x, double *out);

/**
 * Mean of |X| for X ~ N(0, sigma^2).
 */
QgStatus qg_folded_normal_mean(double sigma, double *out);

/**
 * Mean of X ~ N(0, sigma^2) conditioned on X > t*sigma.
 */
QgStatus qg_truncated_normal_mean(double t, double sigma, double *out);

/**
 * Ternary cosine floor at threshold t (sigma units).
 */
QgStatus qg_ternary_bound(double t, double *out);

/**
 * Canonical M-bit cosine floor.
 */
QgStatus qg_nbit_bound_final(uint32_t bits, uint64_t n, double *out);

/**
 * Alternate draft-convention M-bit cosine floor.
 */
QgStatus qg_nbit_bound_draft(uint32_t bits, uint64_t n, double *out);

/**
 * Quantization-noise norm ceiling sqrt(N/12)*delta.
 */
QgStatus qg_eps_norm_bound(uint64_t n, double delta, double *out);

/**
 * Gaussian L2-norm expectation ceiling sqrt(N)*sigma.
 */
QgStatus qg_l2_norm_expectation(uint64_t n, double sigma, double *out);

/**
 * Batch-size scale adjustment 1/sqrt(2 ln n).
 */
QgStatus qg_c_of_n(uintptr_t n, double *out);

/**
 * Binary cosine floor sqrt(2/pi).
 */
QgStatus qg_binary_bound(double *out);

/**
 * Grid argmax of the ternary bound on [t_lo, t_hi]; writes the winning
 * threshold and its angle in degrees.
 */
QgStatus qg_ternary_optimal_threshold(double t_lo,
                                      double t_hi,
                                      double step,
                                      double *t_out,
                                      double *angle_deg_out);

/**
 * Sandwich on the expected maximum of n Gaussians; writes both edges.
 */
QgStatus qg_max_gaussian_bound(uint64_t n, double sigma, double *lower_out, double *upper_out);

/**
 * Quantize `values` under `spec`. Writes `len` integer codes plus the scale
 * and zero point needed to reconstruct levels; `rng` may be null for
 * deterministic schemes.
 */
QgStatus qg_quantize(QgQuantizerSpec spec,
                     const double *values,
                     uintptr_t len,
                     QgRng *rng,
                     int64_t *codes_out,
                     double *scale_out,
                     int64_t *zero_point_out);

/**
 * Reconstruct representable levels from codes produced by [`qg_quantize`]
 * with the same spec/scale/zero_point.
 */
QgStatus qg_dequantize(QgQuantizerSpec spec,
                       const int64_t *codes,
                       uintptr_t len,
                       double scale,
                       int64_t zero_point,
                       double *values_out);

/**
 * Unbiased randomized rounding of `x` onto the grid `k * grid_step`.
 */
QgStatus qg_stochastic_round(double x, double grid_step, QgRng *rng, double *out);

/**
 * Cosine/angle between `w` and `q` (both length `len`); `q` is typically a
 * dequantized image of `w`.
 */
QgStatus qg_cosine_report(const double *w, const double *q, uintptr_t len, QgGeometryReport *out);

/**
 * Fill `out` with an n-dimensional N(0, sigma^2) draw for `seed`.
 */
QgStatus qg_sample_gaussian(uintptr_t n, double sigma, uint64_t seed, double *out);

/**
 * Seeded Monte-Carlo estimate of the cosine between Gaussian draws and
 * their quantized image: mean, standard error, and the angle of the mean.
 */
QgStatus qg_empirical_cosine(QgQuantizerSpec spec,
                             uintptr_t n,
                             double sigma,
                             uintptr_t trials,
                             uint64_t master_seed,
                             uintptr_t jobs,
                             double *mean_cos_out,
                             double *se_out,
                             double *angle_deg_out);

/**
 * Range batch-norm forward over a row-major n-by-d buffer. `gamma`/`beta`
 * are optional d-length affine parameters (pass null to skip); output is
 * written to `out` (same shape).
 */
QgStatus qg_range_bn_forward(const double *data,
                             uintptr_t n,
                             uintptr_t d,
                             const double *gamma,
                             const double *beta,
                             double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QUANTGEOM_H */
