//! Quantization functions, deterministic and stochastic, over weight vectors.
//!
//! Codes are stored as integers together with whatever scale information the
//! scheme needs to reconstruct its representable levels exactly; no integer
//! kernels are emulated.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngState;

/// Flat vector of finite weights. Construction enforces the invariants every
/// quantizer relies on: nonempty, all entries finite.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    values: Vec<f64>,
    sigma_nominal: f64,
}

impl WeightVector {
    /// `sigma_nominal` records the generation parameter; it is informational
    /// and never used in computation.
    pub fn new(values: Vec<f64>, sigma_nominal: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Domain("weight vector must be nonempty".into()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite weight {v}")));
        }
        if !(sigma_nominal.is_finite() && sigma_nominal > 0.0) {
            return Err(Error::Domain(format!(
                "sigma_nominal must be > 0, got {sigma_nominal}"
            )));
        }
        Ok(WeightVector {
            values,
            sigma_nominal,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false // nonempty by construction
    }

    pub fn sigma_nominal(&self) -> f64 {
        self.sigma_nominal
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// How the affine quantizer picks its clamp range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClampPolicy {
    /// Actual minimum and maximum of the input.
    AbsMaxMin,
    /// Split the input into `chunks` contiguous chunks and average the
    /// per-chunk maxima (and minima); tames outliers in wide-range inputs.
    ChunkedAverage { chunks: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rounding {
    Nearest,
    Stochastic,
}

/// Which divisor defines the uniform midrise step: `max|w| / 2^bits` is the
/// canonical rule; `max|w| / 2^(bits-1)` is kept as an alternate convention
/// for curve comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MidriseDelta {
    PowBits,
    PowBitsMinusOne,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Scheme {
    /// Sign of each coordinate; codes in {-1, +1}.
    Binary,
    /// Dead zone of half-width `threshold` (absolute units) around zero;
    /// codes in {-1, 0, +1}.
    Ternary { threshold: f64 },
    /// Fixed-step quantizer with levels at step midpoints,
    /// step = max|w| / 2^bits.
    UniformMidrise { bits: u8 },
    /// Affine integer quantization: scale = (v_max - v_min)/2^bits, integer
    /// zero point, codes clipped to [0, 2^bits].
    Gemmlowp { bits: u8, clamp: ClampPolicy },
    /// Randomized map to {-s, 0, +s} with s = max|w|; unbiased.
    StochasticTernary,
}

/// Scheme plus rounding mode. Binary and ternary ignore the rounding field
/// (they have no grid to round onto); this is a documented no-op.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizerSpec {
    pub scheme: Scheme,
    pub rounding: Rounding,
}

impl QuantizerSpec {
    pub fn binary() -> Self {
        QuantizerSpec {
            scheme: Scheme::Binary,
            rounding: Rounding::Nearest,
        }
    }

    pub fn ternary(threshold: f64) -> Self {
        QuantizerSpec {
            scheme: Scheme::Ternary { threshold },
            rounding: Rounding::Nearest,
        }
    }

    pub fn midrise(bits: u8) -> Self {
        QuantizerSpec {
            scheme: Scheme::UniformMidrise { bits },
            rounding: Rounding::Nearest,
        }
    }

    pub fn gemmlowp(bits: u8, clamp: ClampPolicy) -> Self {
        QuantizerSpec {
            scheme: Scheme::Gemmlowp { bits, clamp },
            rounding: Rounding::Nearest,
        }
    }

    pub fn with_rounding(mut self, rounding: Rounding) -> Self {
        self.rounding = rounding;
        self
    }

    pub fn validate(&self) -> Result<()> {
        match &self.scheme {
            Scheme::Binary | Scheme::StochasticTernary => Ok(()),
            Scheme::Ternary { threshold } => {
                if threshold.is_finite() && *threshold >= 0.0 {
                    Ok(())
                } else {
                    Err(Error::Domain(format!(
                        "ternary threshold must be >= 0, got {threshold}"
                    )))
                }
            }
            Scheme::UniformMidrise { bits } => check_bits(*bits),
            Scheme::Gemmlowp { bits, clamp } => {
                check_bits(*bits)?;
                if let ClampPolicy::ChunkedAverage { chunks } = clamp {
                    if *chunks == 0 {
                        return Err(Error::Domain("chunk count must be >= 1".into()));
                    }
                }
                Ok(())
            }
        }
    }
}

fn check_bits(bits: u8) -> Result<()> {
    if (1..=16).contains(&bits) {
        Ok(())
    } else {
        Err(Error::Domain(format!("bits must be in [1, 16], got {bits}")))
    }
}

/// Integer codes plus the scale information needed to reconstruct levels.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedVector {
    codes: Vec<i64>,
    scale: f64,
    zero_point: i64,
    spec: QuantizerSpec,
}

impl QuantizedVector {
    pub fn codes(&self) -> &[i64] {
        &self.codes
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn zero_point(&self) -> i64 {
        self.zero_point
    }

    pub fn spec(&self) -> &QuantizerSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    /// Reconstruct the representable level of each code, exactly:
    /// binary/ternary levels are the codes scaled by `scale`, midrise levels
    /// sit at step midpoints, affine levels are (code - zero_point) * scale.
    pub fn dequantize(&self) -> Vec<f64> {
        match &self.spec.scheme {
            Scheme::Binary | Scheme::Ternary { .. } | Scheme::StochasticTernary => {
                self.codes.iter().map(|&c| c as f64 * self.scale).collect()
            }
            Scheme::UniformMidrise { .. } => self
                .codes
                .iter()
                .map(|&c| self.scale * (c as f64 + 0.5))
                .collect(),
            Scheme::Gemmlowp { .. } => self
                .codes
                .iter()
                .map(|&c| (c - self.zero_point) as f64 * self.scale)
                .collect(),
        }
    }
}

/// sign with sign(0) = sign(-0) = +1; zero is a measure-zero event under
/// continuous inputs, pinned for determinism.
fn sign_code(v: f64) -> i64 {
    if v < 0.0 {
        -1
    } else {
        1
    }
}

pub fn quantize_binary(w: &WeightVector) -> QuantizedVector {
    QuantizedVector {
        codes: w.values().iter().map(|&v| sign_code(v)).collect(),
        scale: 1.0,
        zero_point: 0,
        spec: QuantizerSpec::binary(),
    }
}

/// Ternary quantization with absolute threshold `t >= 0`: +1 above t, -1
/// below -t, 0 in the closed dead zone |x| <= t. Callers working in sigma
/// units multiply by sigma first.
pub fn quantize_ternary(w: &WeightVector, t: f64) -> Result<QuantizedVector> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::Domain(format!("threshold must be >= 0, got {t}")));
    }
    let codes = w
        .values()
        .iter()
        .map(|&v| {
            if v > t {
                1
            } else if v < -t {
                -1
            } else {
                0
            }
        })
        .collect();
    Ok(QuantizedVector {
        codes,
        scale: 1.0,
        zero_point: 0,
        spec: QuantizerSpec::ternary(t),
    })
}

/// Uniform midrise quantizer: step = max|w| / 2^bits, level = step*(code + 1/2).
/// Nearest rounding stores code = floor(x/step), which is exact nearest-level
/// rounding for a midrise grid; stochastic rounding is unbiased in the level.
pub fn quantize_uniform_midrise(
    w: &WeightVector,
    bits: u8,
    rounding: Rounding,
    rng: Option<&mut RngState>,
) -> Result<QuantizedVector> {
    quantize_uniform_midrise_with(w, bits, MidriseDelta::PowBits, rounding, rng)
}

pub fn quantize_uniform_midrise_with(
    w: &WeightVector,
    bits: u8,
    delta_rule: MidriseDelta,
    rounding: Rounding,
    rng: Option<&mut RngState>,
) -> Result<QuantizedVector> {
    check_bits(bits)?;
    let max_abs = w.max_abs();
    if max_abs == 0.0 {
        return Err(Error::Degenerate(
            "all-zero vector has step 0; nothing to quantize".into(),
        ));
    }
    let divisor_exp = match delta_rule {
        MidriseDelta::PowBits => i32::from(bits),
        MidriseDelta::PowBitsMinusOne => i32::from(bits) - 1,
    };
    let step = max_abs / f64::powi(2.0, divisor_exp);
    let codes: Vec<i64> = match rounding {
        Rounding::Nearest => w
            .values()
            .iter()
            .map(|&v| (v / step).floor() as i64)
            .collect(),
        Rounding::Stochastic => {
            let rng = rng
                .ok_or_else(|| Error::Domain("stochastic rounding requires an rng state".into()))?;
            w.values()
                .iter()
                .map(|&v| {
                    // shift by half a step so the level grid becomes the
                    // integer grid, keeping E[level] = v
                    let y = v / step - 0.5;
                    let k = y.floor();
                    let frac = y - k;
                    let up = frac > 0.0 && rng.bernoulli(frac);
                    k as i64 + i64::from(up)
                })
                .collect()
        }
    };
    Ok(QuantizedVector {
        codes,
        scale: step,
        zero_point: 0,
        spec: QuantizerSpec {
            scheme: Scheme::UniformMidrise { bits },
            rounding,
        },
    })
}

/// Clamp range for the affine quantizer.
pub fn clamp_range(values: &[f64], policy: &ClampPolicy) -> Result<(f64, f64)> {
    match policy {
        ClampPolicy::AbsMaxMin => {
            let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            Ok((lo, hi))
        }
        ClampPolicy::ChunkedAverage { chunks } => {
            let k = *chunks;
            if k == 0 || k > values.len() {
                return Err(Error::Domain(format!(
                    "chunk count must be in [1, {}], got {k}",
                    values.len()
                )));
            }
            let chunk_len = values.len().div_ceil(k);
            let mut sum_min = 0.0;
            let mut sum_max = 0.0;
            let mut n_chunks = 0.0;
            for chunk in values.chunks(chunk_len) {
                sum_min += chunk.iter().cloned().fold(f64::INFINITY, f64::min);
                sum_max += chunk.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                n_chunks += 1.0;
            }
            Ok((sum_min / n_chunks, sum_max / n_chunks))
        }
    }
}

/// Affine quantization: scale = (v_max - v_min)/2^bits,
/// zero_point = round(min(max(-v_min/scale, 0), 2^bits)),
/// code = round(x/scale + zero_point) clipped to [0, 2^bits] inclusive.
pub fn quantize_gemmlowp(
    x: &WeightVector,
    bits: u8,
    clamp: &ClampPolicy,
    rounding: Rounding,
    rng: Option<&mut RngState>,
) -> Result<QuantizedVector> {
    check_bits(bits)?;
    let (v_min, v_max) = clamp_range(x.values(), clamp)?;
    if v_max <= v_min {
        return Err(Error::Degenerate(format!(
            "constant input: clamp range [{v_min}, {v_max}] is empty"
        )));
    }
    let levels = f64::powi(2.0, i32::from(bits));
    let scale = (v_max - v_min) / levels;
    let zero_point = (-v_min / scale).clamp(0.0, levels).round() as i64;
    let top = levels as i64;
    let mut rng = rng;
    let codes: Result<Vec<i64>> = x
        .values()
        .iter()
        .map(|&v| {
            let y = v / scale + zero_point as f64;
            let code = match rounding {
                Rounding::Nearest => y.round(),
                Rounding::Stochastic => {
                    let rng = rng
                        .as_deref_mut()
                        .ok_or_else(|| Error::Domain("stochastic rounding needs rng".into()))?;
                    let k = y.floor();
                    let frac = y - k;
                    k + f64::from(frac > 0.0 && rng.bernoulli(frac))
                }
            };
            Ok((code as i64).clamp(0, top))
        })
        .collect();
    Ok(QuantizedVector {
        codes: codes?,
        scale,
        zero_point,
        spec: QuantizerSpec {
            scheme: Scheme::Gemmlowp {
                bits,
                clamp: *clamp,
            },
            rounding,
        },
    })
}

/// Round `x` onto the grid `k * grid_step` randomly so that the expectation
/// equals `x`: down with probability 1 - frac, up with probability frac.
pub fn stochastic_round(x: f64, grid_step: f64, rng: &mut RngState) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::Domain(format!("cannot round non-finite {x}")));
    }
    if !(grid_step.is_finite() && grid_step > 0.0) {
        return Err(Error::Domain(format!(
            "grid step must be > 0, got {grid_step}"
        )));
    }
    let y = x / grid_step;
    let k = y.floor();
    let frac = y - k;
    if frac == 0.0 {
        return Ok(x); // already on the grid
    }
    Ok((k + f64::from(rng.bernoulli(frac))) * grid_step)
}

/// Randomized ternarization with scale s = max|g|: code = sign(g_i) with
/// probability |g_i|/s, else 0, so the dequantized value s*code is unbiased.
/// An all-zero input yields all-zero codes with s defined as 1.
pub fn stochastic_ternarize(g: &WeightVector, rng: &mut RngState) -> QuantizedVector {
    let s = g.max_abs();
    let spec = QuantizerSpec {
        scheme: Scheme::StochasticTernary,
        rounding: Rounding::Stochastic,
    };
    if s == 0.0 {
        return QuantizedVector {
            codes: vec![0; g.len()],
            scale: 1.0,
            zero_point: 0,
            spec,
        };
    }
    let codes = g
        .values()
        .iter()
        .map(|&v| {
            if v != 0.0 && rng.bernoulli(v.abs() / s) {
                sign_code(v)
            } else {
                0
            }
        })
        .collect();
    QuantizedVector {
        codes,
        scale: s,
        zero_point: 0,
        spec,
    }
}

/// Dispatch a full spec against a vector. Stochastic paths need `rng`.
pub fn quantize(
    spec: &QuantizerSpec,
    w: &WeightVector,
    rng: Option<&mut RngState>,
) -> Result<QuantizedVector> {
    spec.validate()?;
    match &spec.scheme {
        Scheme::Binary => Ok(quantize_binary(w)),
        Scheme::Ternary { threshold } => quantize_ternary(w, *threshold),
        Scheme::UniformMidrise { bits } => quantize_uniform_midrise(w, *bits, spec.rounding, rng),
        Scheme::Gemmlowp { bits, clamp } => {
            quantize_gemmlowp(w, *bits, clamp, spec.rounding, rng)
        }
        Scheme::StochasticTernary => {
            let rng =
                rng.ok_or_else(|| Error::Domain("stochastic ternarization needs rng".into()))?;
            Ok(stochastic_ternarize(w, rng))
        }
    }
}
