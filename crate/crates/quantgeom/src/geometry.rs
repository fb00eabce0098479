//! Norms, dot products, and the cosine/angle between a weight vector and its
//! quantized image. Only the reductions the similarity measure needs.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::quantize::{QuantizedVector, WeightVector};

/// Pairwise (cascade) summation; keeps accumulated rounding ~O(log n) ulps,
/// which matters for the million-element norms the sweeps use.
fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 128;
    if values.len() <= BLOCK {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let prods: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    pairwise_sum(&prods)
}

fn l2_norm(a: &[f64]) -> f64 {
    let squares: Vec<f64> = a.iter().map(|x| x * x).collect();
    pairwise_sum(&squares).sqrt()
}

fn l1_norm(a: &[f64]) -> f64 {
    let absolutes: Vec<f64> = a.iter().map(|x| x.abs()).collect();
    pairwise_sum(&absolutes)
}

/// Similarity measurements between a vector and a comparison vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeometryReport {
    pub dot: f64,
    pub l1_w: f64,
    pub l2_w: f64,
    pub l2_q: f64,
    /// Clamped to [-1, 1] before the arccos; dot/norm cancellation can
    /// drift past 1 by ~1e-16.
    pub cosine: f64,
    pub angle_deg: f64,
}

fn report(w: &[f64], q: &[f64]) -> Result<GeometryReport> {
    if w.len() != q.len() {
        return Err(Error::LengthMismatch {
            left: w.len(),
            right: q.len(),
        });
    }
    let l2_w = l2_norm(w);
    let l2_q = l2_norm(q);
    if l2_w == 0.0 || l2_q == 0.0 {
        return Err(Error::Degenerate("zero-norm operand".into()));
    }
    let d = dot(w, q);
    let cosine = (d / (l2_w * l2_q)).clamp(-1.0, 1.0);
    Ok(GeometryReport {
        dot: d,
        l1_w: l1_norm(w),
        l2_w,
        l2_q,
        cosine,
        angle_deg: cosine.acos().to_degrees(),
    })
}

/// Cosine of the angle between `w` and the dequantized levels of `q`.
pub fn cosine_between(w: &WeightVector, q: &QuantizedVector) -> Result<GeometryReport> {
    report(w.values(), &q.dequantize())
}

/// Cosine of the angle between a vector and a noise vector; used to verify
/// near-orthogonality of independent draws in high dimension.
pub fn angle_wrt_noise(w: &WeightVector, eps: &WeightVector) -> Result<GeometryReport> {
    report(w.values(), eps.values())
}

/// Same report over raw slices (trainer instrumentation works on flattened
/// gradient tensors, not WeightVectors).
pub fn cosine_between_slices(a: &[f64], b: &[f64]) -> Result<GeometryReport> {
    report(a, b)
}
