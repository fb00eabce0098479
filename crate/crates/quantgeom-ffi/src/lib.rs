//! C ABI over the quantgeom toolkit.
//!
//! Conventions: every fallible function returns a [`QgStatus`] and writes its
//! results through out-pointers; buffers are caller-allocated with lengths
//! passed explicitly; random state is an opaque [`QgRng`] handle created from
//! a (master seed, stream) pair and released with [`qg_rng_free`]. Null
//! pointers are rejected, never dereferenced.
//!
//! Functions that read or write through raw pointers are `unsafe`: the
//! caller asserts that every non-null pointer is valid for the stated
//! length. Each function still rejects null pointers defensively.

#![deny(unsafe_op_in_unsafe_fn)]
// the pointer-validity contract is stated once in the crate docs; repeating
// it on every function would say nothing new
#![allow(clippy::missing_safety_doc)]

use std::os::raw::c_char;

use quantgeom::bounds;
use quantgeom::error::Error;
use quantgeom::geometry;
use quantgeom::montecarlo::{self, McConfig};
use quantgeom::quantize::{
    self, ClampPolicy, QuantizerSpec, Rounding, Scheme, WeightVector,
};
use quantgeom::range_bn::{self, BatchMatrix, BnParams};
use quantgeom::rng::RngState;
use quantgeom::stats;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QgStatus {
    Ok = 0,
    /// Argument outside the mathematical domain.
    ErrDomain = 1,
    /// Structurally valid input that collapses the operation.
    ErrDegenerate = 2,
    /// Result not representable (underflow/overflow).
    ErrOverflow = 3,
    ErrLengthMismatch = 4,
    ErrNullPointer = 5,
    /// Internal failure (never expected; indicates a bug).
    ErrInternal = 6,
}

fn status_of(err: &Error) -> QgStatus {
    match err {
        Error::Domain(_) | Error::Config(_) => QgStatus::ErrDomain,
        Error::Degenerate(_) | Error::TrainAbort(_) => QgStatus::ErrDegenerate,
        Error::Overflow(_) => QgStatus::ErrOverflow,
        Error::LengthMismatch { .. } | Error::ShapeMismatch(_) => QgStatus::ErrLengthMismatch,
        Error::Io(_) => QgStatus::ErrInternal,
    }
}

/// Run a closure that produces a status, converting panics into
/// `QgErrInternal` so unwinds never cross the ABI boundary.
fn guarded(f: impl FnOnce() -> QgStatus + std::panic::UnwindSafe) -> QgStatus {
    std::panic::catch_unwind(f).unwrap_or(QgStatus::ErrInternal)
}

macro_rules! try_ffi {
    ($expr:expr) => {
        match $expr {
            Ok(v) => v,
            Err(e) => return status_of(&e),
        }
    };
}

unsafe fn write_out<T>(ptr: *mut T, value: T) -> QgStatus {
    if ptr.is_null() {
        return QgStatus::ErrNullPointer;
    }
    unsafe { *ptr = value };
    QgStatus::Ok
}

unsafe fn slice_in<'a>(ptr: *const f64, len: usize) -> Option<&'a [f64]> {
    if ptr.is_null() || len == 0 {
        None
    } else {
        Some(unsafe { std::slice::from_raw_parts(ptr, len) })
    }
}

unsafe fn slice_out<'a, T>(ptr: *mut T, len: usize) -> Option<&'a mut [T]> {
    if ptr.is_null() || len == 0 {
        None
    } else {
        Some(unsafe { std::slice::from_raw_parts_mut(ptr, len) })
    }
}

/// Library version as a NUL-terminated static string.
#[no_mangle]
pub extern "C" fn qg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

// ---------------------------------------------------------------------------
// opaque random state
// ---------------------------------------------------------------------------

/// Opaque counter-based random generator.
pub struct QgRng(RngState);

/// Create a generator for (master_seed, stream); free with [`qg_rng_free`].
#[no_mangle]
pub extern "C" fn qg_rng_new(master_seed: u64, stream: u64) -> *mut QgRng {
    Box::into_raw(Box::new(QgRng(RngState::from_master(master_seed, stream))))
}

/// Release a generator created by [`qg_rng_new`]. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn qg_rng_free(rng: *mut QgRng) {
    if !rng.is_null() {
        drop(unsafe { Box::from_raw(rng) });
    }
}

unsafe fn rng_opt<'a>(rng: *mut QgRng) -> Option<&'a mut RngState> {
    if rng.is_null() {
        None
    } else {
        Some(unsafe { &mut (*rng).0 })
    }
}

// ---------------------------------------------------------------------------
// scalar special functions and bounds
// ---------------------------------------------------------------------------

/// Error function.
#[no_mangle]
pub unsafe extern "C" fn qg_erf(x: f64, out: *mut f64) -> QgStatus {
    guarded(|| {
        let v = try_ffi!(stats::erf(x));
        unsafe { write_out(out, v) }
    })
}

/// Standard normal density.
#[no_mangle]
pub unsafe extern "C" fn qg_std_normal_pdf(x: f64, out: *mut f64) -> QgStatus {
    guarded(|| {
        let v = try_ffi!(stats::std_normal_pdf(x));
        unsafe { write_out(out, v) }
    })
}

/// Standard normal CDF.
#[no_mangle]
pub unsafe extern "C" fn qg_std_normal_cdf(x: f64, out: *mut f64) -> QgStatus {
    guarded(|| {
        let v = try_ffi!(stats::std_normal_cdf(x));
        unsafe { write_out(out, v) }
    })
}

/// Mean of |X| for X ~ N(0, sigma^2).
#[no_mangle]
pub unsafe extern "C" fn qg_folded_normal_mean(sigma: f64, out: *mut f64) -> QgStatus {
    guarded(|| {
        let v = try_ffi!(stats::folded_normal_mean(sigma));
        unsafe { write_out(out, v) }
    })
}

/// Mean of X ~ N(0, sigma^2) conditioned on X > t*sigma.
#[no_mangle]
pub unsafe extern "C" fn qg_truncated_normal_mean(t: f64, sigma: f64, out: *mut f64) -> QgStatus {
    guarded(|| {
        let v = try_ffi!(stats::truncated_normal_mean(t, sigma));
        unsafe { write_out(out, v) }
    })
}

/// Ternary cosine floor at threshold t (sigma units).
#[no_mangle]
pub unsafe extern "C" fn qg_ternary_bound(t: f64, out: *mut f64) -> QgStatus {
    guarded(|| {
        let v = try_ffi!(bounds::ternary_bound(t));
        unsafe { write_out(out, v) }
    })
}

/// Canonical M-bit cosine floor.
#[no_mangle]
pub unsafe extern "C" fn qg_nbit_bound_final(bits: u32, n: u64, out: *mut f64) -> QgStatus {
    guarded(|| {
        let v = try_ffi!(bounds::nbit_bound_final(bits, n));
        unsafe { write_out(out, v) }
    })
}

/// Alternate draft-convention M-bit cosine floor.
#[no_mangle]
pub unsafe extern "C" fn qg_nbit_bound_draft(bits: u32, n: u64, out: *mut f64) -> QgStatus {
    guarded(|| {
        let v = try_ffi!(bounds::nbit_bound_draft(bits, n));
        unsafe { write_out(out, v) }
    })
}

/// Quantization-noise norm ceiling sqrt(N/12)*delta.
#[no_mangle]
pub unsafe extern "C" fn qg_eps_norm_bound(n: u64, delta: f64, out: *mut f64) -> QgStatus {
    guarded(|| {
        let v = try_ffi!(bounds::eps_norm_bound(n, delta));
        unsafe { write_out(out, v) }
    })
}

/// Gaussian L2-norm expectation ceiling sqrt(N)*sigma.
#[no_mangle]
pub unsafe extern "C" fn qg_l2_norm_expectation(n: u64, sigma: f64, out: *mut f64) -> QgStatus {
    guarded(|| {
        let v = try_ffi!(bounds::l2_norm_expectation(n, sigma));
        unsafe { write_out(out, v) }
    })
}

/// Batch-size scale adjustment 1/sqrt(2 ln n).
#[no_mangle]
pub unsafe extern "C" fn qg_c_of_n(n: usize, out: *mut f64) -> QgStatus {
    guarded(|| {
        let v = try_ffi!(range_bn::c_of_n(n));
        unsafe { write_out(out, v) }
    })
}

/// Binary cosine floor sqrt(2/pi).
#[no_mangle]
pub unsafe extern "C" fn qg_binary_bound(out: *mut f64) -> QgStatus {
    guarded(|| unsafe { write_out(out, bounds::binary_bound()) })
}

/// Grid argmax of the ternary bound on [t_lo, t_hi]; writes the winning
/// threshold and its angle in degrees.
#[no_mangle]
pub unsafe extern "C" fn qg_ternary_optimal_threshold(
    t_lo: f64,
    t_hi: f64,
    step: f64,
    t_out: *mut f64,
    angle_deg_out: *mut f64,
) -> QgStatus {
    guarded(|| {
        let (t, angle) = try_ffi!(bounds::ternary_optimal_threshold(t_lo, t_hi, step));
        let s = unsafe { write_out(t_out, t) };
        if s != QgStatus::Ok {
            return s;
        }
        unsafe { write_out(angle_deg_out, angle) }
    })
}

/// Sandwich on the expected maximum of n Gaussians; writes both edges.
#[no_mangle]
pub unsafe extern "C" fn qg_max_gaussian_bound(
    n: u64,
    sigma: f64,
    lower_out: *mut f64,
    upper_out: *mut f64,
) -> QgStatus {
    guarded(|| {
        let (lo, hi) = try_ffi!(bounds::max_gaussian_bound(n, sigma));
        let s = unsafe { write_out(lower_out, lo) };
        if s != QgStatus::Ok {
            return s;
        }
        unsafe { write_out(upper_out, hi) }
    })
}

// ---------------------------------------------------------------------------
// quantizers
// ---------------------------------------------------------------------------

/// Quantization scheme selector for the C surface.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QgScheme {
    Binary = 0,
    Ternary = 1,
    Midrise = 2,
    Gemmlowp = 3,
    StochasticTernary = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QgRounding {
    Nearest = 0,
    Stochastic = 1,
}

/// Flattened quantizer description. `threshold` applies to the ternary
/// scheme (absolute units); `bits` to midrise/affine; `clamp_chunks` selects
/// the chunked-average clamp when nonzero, plain min/max when zero.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct QgQuantizerSpec {
    pub scheme: QgScheme,
    pub rounding: QgRounding,
    pub threshold: f64,
    pub bits: u32,
    pub clamp_chunks: usize,
}

fn spec_from_c(spec: &QgQuantizerSpec) -> Result<QuantizerSpec, Error> {
    let rounding = match spec.rounding {
        QgRounding::Nearest => Rounding::Nearest,
        QgRounding::Stochastic => Rounding::Stochastic,
    };
    let bits =
        u8::try_from(spec.bits).map_err(|_| Error::Domain("bits out of range".into()))?;
    let scheme = match spec.scheme {
        QgScheme::Binary => Scheme::Binary,
        QgScheme::Ternary => Scheme::Ternary {
            threshold: spec.threshold,
        },
        QgScheme::Midrise => Scheme::UniformMidrise { bits },
        QgScheme::Gemmlowp => Scheme::Gemmlowp {
            bits,
            clamp: if spec.clamp_chunks == 0 {
                ClampPolicy::AbsMaxMin
            } else {
                ClampPolicy::ChunkedAverage {
                    chunks: spec.clamp_chunks,
                }
            },
        },
        QgScheme::StochasticTernary => Scheme::StochasticTernary,
    };
    Ok(QuantizerSpec { scheme, rounding })
}

/// Quantize `values` under `spec`. Writes `len` integer codes plus the scale
/// and zero point needed to reconstruct levels; `rng` may be null for
/// deterministic schemes.
#[no_mangle]
pub unsafe extern "C" fn qg_quantize(
    spec: QgQuantizerSpec,
    values: *const f64,
    len: usize,
    rng: *mut QgRng,
    codes_out: *mut i64,
    scale_out: *mut f64,
    zero_point_out: *mut i64,
) -> QgStatus {
    guarded(|| {
        let (Some(values), Some(codes)) =
            (unsafe { slice_in(values, len) }, unsafe { slice_out(codes_out, len) })
        else {
            return QgStatus::ErrNullPointer;
        };
        let spec = try_ffi!(spec_from_c(&spec));
        let w = try_ffi!(WeightVector::new(values.to_vec(), 1.0));
        let q = try_ffi!(quantize::quantize(&spec, &w, unsafe { rng_opt(rng) }));
        codes.copy_from_slice(q.codes());
        let s = unsafe { write_out(scale_out, q.scale()) };
        if s != QgStatus::Ok {
            return s;
        }
        unsafe { write_out(zero_point_out, q.zero_point()) }
    })
}

/// Reconstruct representable levels from codes produced by [`qg_quantize`]
/// with the same spec/scale/zero_point.
#[no_mangle]
pub unsafe extern "C" fn qg_dequantize(
    spec: QgQuantizerSpec,
    codes: *const i64,
    len: usize,
    scale: f64,
    zero_point: i64,
    values_out: *mut f64,
) -> QgStatus {
    guarded(|| {
        if codes.is_null() || values_out.is_null() || len == 0 {
            return QgStatus::ErrNullPointer;
        }
        let codes = unsafe { std::slice::from_raw_parts(codes, len) };
        let out = unsafe { std::slice::from_raw_parts_mut(values_out, len) };
        match spec.scheme {
            QgScheme::Binary
            | QgScheme::Ternary
            | QgScheme::StochasticTernary => {
                for (o, &c) in out.iter_mut().zip(codes) {
                    *o = c as f64 * scale;
                }
            }
            QgScheme::Midrise => {
                for (o, &c) in out.iter_mut().zip(codes) {
                    *o = scale * (c as f64 + 0.5);
                }
            }
            QgScheme::Gemmlowp => {
                for (o, &c) in out.iter_mut().zip(codes) {
                    *o = (c - zero_point) as f64 * scale;
                }
            }
        }
        QgStatus::Ok
    })
}

/// Unbiased randomized rounding of `x` onto the grid `k * grid_step`.
#[no_mangle]
pub unsafe extern "C" fn qg_stochastic_round(
    x: f64,
    grid_step: f64,
    rng: *mut QgRng,
    out: *mut f64,
) -> QgStatus {
    guarded(|| {
        let Some(rng) = (unsafe { rng_opt(rng) }) else {
            return QgStatus::ErrNullPointer;
        };
        let v = try_ffi!(quantize::stochastic_round(x, grid_step, rng));
        unsafe { write_out(out, v) }
    })
}

// ---------------------------------------------------------------------------
// geometry
// ---------------------------------------------------------------------------

/// Similarity measurements between a vector and a comparison vector.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct QgGeometryReport {
    pub dot: f64,
    pub l1_w: f64,
    pub l2_w: f64,
    pub l2_q: f64,
    pub cosine: f64,
    pub angle_deg: f64,
}

/// Cosine/angle between `w` and `q` (both length `len`); `q` is typically a
/// dequantized image of `w`.
#[no_mangle]
pub unsafe extern "C" fn qg_cosine_report(
    w: *const f64,
    q: *const f64,
    len: usize,
    out: *mut QgGeometryReport,
) -> QgStatus {
    guarded(|| {
        let (Some(w), Some(q)) = (unsafe { slice_in(w, len) }, unsafe { slice_in(q, len) })
        else {
            return QgStatus::ErrNullPointer;
        };
        let r = try_ffi!(geometry::cosine_between_slices(w, q));
        unsafe {
            write_out(
                out,
                QgGeometryReport {
                    dot: r.dot,
                    l1_w: r.l1_w,
                    l2_w: r.l2_w,
                    l2_q: r.l2_q,
                    cosine: r.cosine,
                    angle_deg: r.angle_deg,
                },
            )
        }
    })
}

// ---------------------------------------------------------------------------
// sampling and sweeps
// ---------------------------------------------------------------------------

/// Fill `out` with an n-dimensional N(0, sigma^2) draw for `seed`.
#[no_mangle]
pub unsafe extern "C" fn qg_sample_gaussian(
    n: usize,
    sigma: f64,
    seed: u64,
    out: *mut f64,
) -> QgStatus {
    guarded(|| {
        let Some(out) = (unsafe { slice_out(out, n) }) else {
            return QgStatus::ErrNullPointer;
        };
        let w = try_ffi!(montecarlo::sample_gaussian(n, sigma, seed));
        out.copy_from_slice(w.values());
        QgStatus::Ok
    })
}

/// Seeded Monte-Carlo estimate of the cosine between Gaussian draws and
/// their quantized image: mean, standard error, and the angle of the mean.
#[no_mangle]
pub unsafe extern "C" fn qg_empirical_cosine(
    spec: QgQuantizerSpec,
    n: usize,
    sigma: f64,
    trials: usize,
    master_seed: u64,
    jobs: usize,
    mean_cos_out: *mut f64,
    se_out: *mut f64,
    angle_deg_out: *mut f64,
) -> QgStatus {
    guarded(|| {
        let spec = try_ffi!(spec_from_c(&spec));
        let cfg = McConfig {
            n,
            sigma,
            trials,
            master_seed,
            spec,
            jobs,
        };
        let r = try_ffi!(montecarlo::empirical_cosine(&cfg));
        for (ptr, v) in [
            (mean_cos_out, r.mean_cos),
            (se_out, r.se),
            (angle_deg_out, r.mean_angle_deg),
        ] {
            let s = unsafe { write_out(ptr, v) };
            if s != QgStatus::Ok {
                return s;
            }
        }
        QgStatus::Ok
    })
}

// ---------------------------------------------------------------------------
// range batch-norm
// ---------------------------------------------------------------------------

/// Range batch-norm forward over a row-major n-by-d buffer. `gamma`/`beta`
/// are optional d-length affine parameters (pass null to skip); output is
/// written to `out` (same shape).
#[no_mangle]
pub unsafe extern "C" fn qg_range_bn_forward(
    data: *const f64,
    n: usize,
    d: usize,
    gamma: *const f64,
    beta: *const f64,
    out: *mut f64,
) -> QgStatus {
    guarded(|| {
        let total = n.saturating_mul(d);
        let (Some(data), Some(out)) =
            (unsafe { slice_in(data, total) }, unsafe { slice_out(out, total) })
        else {
            return QgStatus::ErrNullPointer;
        };
        let x = try_ffi!(BatchMatrix::new(data.to_vec(), n, d));
        let use_affine = !gamma.is_null() && !beta.is_null();
        let params = if use_affine {
            let g = unsafe { std::slice::from_raw_parts(gamma, d) };
            let b = unsafe { std::slice::from_raw_parts(beta, d) };
            BnParams {
                gamma: g.to_vec(),
                beta: b.to_vec(),
                epsilon_stability: 0.0,
            }
        } else {
            BnParams::identity(d)
        };
        let y = try_ffi!(range_bn::range_bn_forward(&x, &params, use_affine));
        out.copy_from_slice(y.data());
        QgStatus::Ok
    })
}
