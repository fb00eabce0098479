//! Closed-form lower bounds on the expected cosine between a Gaussian vector
//! and its quantized image, plus the norm expectations those bounds are built
//! from. Monte-Carlo sweeps overlay their empirical curves on these values.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::quantize::WeightVector;
use crate::stats::{std_normal_cdf, std_normal_pdf};

/// Identifier for each closed-form expression the crate evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FormulaId {
    /// sqrt(2/pi): binary quantization cosine floor.
    BinaryJensen,
    /// 2*phi(t)/sqrt(2 - 2*Phi(t)): ternary cosine floor at threshold t.
    TernaryCurve,
    /// 2^M / (2^M + sqrt(ln N)/sqrt(6)): canonical M-bit cosine floor.
    NbitFinal,
    /// 2^(M-1) / (2^(M-1) + sqrt(2 ln N)): alternate draft-convention floor.
    NbitDraft,
    /// sqrt(N/12) * E(step): expected quantization-noise norm ceiling.
    EpsNormBound,
    /// sqrt(N) * sigma: Gaussian L2-norm expectation ceiling.
    L2NormExpectation,
    /// (0.23, sqrt(2)) * sigma * sqrt(ln N): Gaussian max-expectation sandwich.
    MaxGaussianBound,
    /// mse = bias^2 + variance identity over an error vector.
    MseDecomposition,
    /// 2^k max(W) / (N + 2^(2k)): draft closed form for the step minimizing MSE.
    DeltaOptDraft,
}

/// A formula evaluation bundled with the parameters that produced it.
#[derive(Debug, Clone, Serialize)]
pub struct BoundValue {
    pub formula_id: FormulaId,
    pub params: BTreeMap<String, f64>,
    pub value: f64,
}

impl BoundValue {
    fn new(formula_id: FormulaId, params: &[(&str, f64)], value: f64) -> Self {
        BoundValue {
            formula_id,
            params: params
                .iter()
                .map(|(k, v)| (k.to_string(), *v))
                .collect(),
            value,
        }
    }
}

/// Cosine floor for binary (sign) quantization of Gaussian vectors.
pub fn binary_bound() -> f64 {
    (2.0 / std::f64::consts::PI).sqrt()
}

/// Cosine floor for ternary quantization at threshold `t` (sigma units):
/// 2*phi(t)/sqrt(2 - 2*Phi(t)). Scale-free, so sigma = 1 internally.
pub fn ternary_bound(t: f64) -> Result<f64> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::Domain(format!("threshold must be >= 0, got {t}")));
    }
    let tail2 = 2.0 - 2.0 * std_normal_cdf(t)?;
    if tail2 <= 0.0 {
        return Err(Error::Overflow(format!(
            "2 - 2*Phi({t}) underflows to zero; the bound is not evaluable this far out"
        )));
    }
    Ok(2.0 * std_normal_pdf(t)? / tail2.sqrt())
}

/// Grid argmax of the ternary bound (equivalently argmin of the angle) on
/// [t_lo, t_hi] with the given step; ties break toward smaller t.
/// Returns the winning threshold and its angle in degrees.
pub fn ternary_optimal_threshold(t_lo: f64, t_hi: f64, step: f64) -> Result<(f64, f64)> {
    if !(t_lo.is_finite() && t_hi.is_finite() && t_lo >= 0.0) {
        return Err(Error::Domain("grid bounds must be finite, t_lo >= 0".into()));
    }
    if t_lo > t_hi {
        return Err(Error::Domain(format!("empty grid: {t_lo} > {t_hi}")));
    }
    let mut grid = vec![t_lo];
    if t_hi > t_lo {
        if !(step.is_finite() && step > 0.0) {
            return Err(Error::Domain(format!("grid step must be > 0, got {step}")));
        }
        let mut k = 1usize;
        loop {
            let t = t_lo + step * k as f64;
            if t > t_hi + step * 1e-9 {
                break;
            }
            grid.push(t.min(t_hi));
            k += 1;
        }
    }
    let mut best_t = grid[0];
    let mut best = ternary_bound(grid[0])?;
    for &t in &grid[1..] {
        let v = ternary_bound(t)?;
        if v > best {
            best = v;
            best_t = t;
        }
    }
    Ok((best_t, best.clamp(-1.0, 1.0).acos().to_degrees()))
}

fn check_n_at_least(n: u64, lo: u64) -> Result<()> {
    if n < lo {
        return Err(Error::Domain(format!("N must be >= {lo}, got {n}")));
    }
    Ok(())
}

fn check_bits_pos(bits: u32) -> Result<()> {
    if bits == 0 {
        return Err(Error::Domain("bits must be >= 1".into()));
    }
    Ok(())
}

/// Canonical M-bit cosine floor: 2^M / (2^M + sqrt(ln N)/sqrt(6)).
/// Increasing in M, decreasing in N.
pub fn nbit_bound_final(bits: u32, n: u64) -> Result<f64> {
    check_bits_pos(bits)?;
    check_n_at_least(n, 2)?;
    let levels = (bits as f64).exp2();
    let noise = ((n as f64).ln()).sqrt() / 6.0f64.sqrt();
    Ok(levels / (levels + noise))
}

/// Alternate draft-convention floor: 2^(M-1) / (2^(M-1) + sqrt(2 ln N)).
/// Kept for curve comparison only; log is natural. On grids it stays below
/// [`nbit_bound_final`] evaluated one bit higher (documented pattern, not an
/// asserted contract).
pub fn nbit_bound_draft(bits: u32, n: u64) -> Result<f64> {
    check_bits_pos(bits)?;
    check_n_at_least(n, 2)?;
    let levels = ((bits as f64) - 1.0).exp2();
    let noise = (2.0 * (n as f64).ln()).sqrt();
    Ok(levels / (levels + noise))
}

/// Expected-norm ceiling for N iid U[-step/2, step/2] coordinates:
/// sqrt(N/12) * E(step).
pub fn eps_norm_bound(n: u64, delta_expectation: f64) -> Result<f64> {
    check_n_at_least(n, 1)?;
    if !(delta_expectation.is_finite() && delta_expectation > 0.0) {
        return Err(Error::Domain(format!(
            "expected step must be > 0, got {delta_expectation}"
        )));
    }
    Ok((n as f64 / 12.0).sqrt() * delta_expectation)
}

/// Gaussian L2-norm expectation ceiling sqrt(N)*sigma; asymptotically tight.
pub fn l2_norm_expectation(n: u64, sigma: f64) -> Result<f64> {
    check_n_at_least(n, 1)?;
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::Domain(format!("sigma must be > 0, got {sigma}")));
    }
    Ok((n as f64).sqrt() * sigma)
}

/// Sandwich on the expected maximum of N iid N(0, sigma^2) draws:
/// (0.23*sigma*sqrt(ln N), sqrt(2)*sigma*sqrt(ln N)).
pub fn max_gaussian_bound(n: u64, sigma: f64) -> Result<(f64, f64)> {
    check_n_at_least(n, 2)?;
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::Domain(format!("sigma must be > 0, got {sigma}")));
    }
    let root_log = (n as f64).ln().sqrt();
    Ok((0.23 * sigma * root_log, std::f64::consts::SQRT_2 * sigma * root_log))
}

/// Decompose the mean squared error between a vector and its reconstruction
/// into squared bias plus (population) variance; the identity
/// mse == bias^2 + var holds exactly up to rounding.
pub fn mse_decompose(w: &WeightVector, q_dequant: &WeightVector) -> Result<(f64, f64, f64)> {
    if w.len() != q_dequant.len() {
        return Err(Error::LengthMismatch {
            left: w.len(),
            right: q_dequant.len(),
        });
    }
    if w.len() < 2 {
        return Err(Error::Domain("need at least 2 elements".into()));
    }
    let n = w.len() as f64;
    let errs: Vec<f64> = w
        .values()
        .iter()
        .zip(q_dequant.values())
        .map(|(a, b)| a - b)
        .collect();
    let mse = errs.iter().map(|e| e * e).sum::<f64>() / n;
    let mean = errs.iter().sum::<f64>() / n;
    let bias_sq = mean * mean;
    let variance = errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n;
    Ok((mse, bias_sq, variance))
}

/// Draft closed form for the MSE-minimizing step at k bits:
/// 2^k * max(W) / (N + 2^(2k)). Evaluation only; pair with
/// [`mse_grid_search`] to compare against brute force.
pub fn delta_opt_draft(k: u32, max_w: f64, n: u64) -> Result<f64> {
    check_bits_pos(k)?;
    check_n_at_least(n, 1)?;
    if !(max_w.is_finite() && max_w > 0.0) {
        return Err(Error::Domain(format!("max_w must be > 0, got {max_w}")));
    }
    let pk = (k as f64).exp2();
    Ok(pk * max_w / (n as f64 + pk * pk))
}

/// Empirical MSE of quantizing `w` with a k-bit symmetric rounding grid of
/// step `delta` (codes clamped to [-2^(k-1), 2^(k-1)-1]); one row per step.
pub fn mse_grid_search(w: &WeightVector, k: u32, deltas: &[f64]) -> Result<Vec<(f64, f64)>> {
    check_bits_pos(k)?;
    let lo = -((k as f64 - 1.0).exp2());
    let hi = (k as f64 - 1.0).exp2() - 1.0;
    let n = w.len() as f64;
    deltas
        .iter()
        .map(|&delta| {
            if !(delta.is_finite() && delta > 0.0) {
                return Err(Error::Domain(format!("step must be > 0, got {delta}")));
            }
            let mse = w
                .values()
                .iter()
                .map(|&v| {
                    let code = (v / delta).round().clamp(lo, hi);
                    (v - code * delta).powi(2)
                })
                .sum::<f64>()
                / n;
            Ok((delta, mse))
        })
        .collect()
}

/// Evaluate a formula by id with named parameters; the CLI dispatches here.
pub fn evaluate(id: FormulaId, params: &BTreeMap<String, f64>) -> Result<BoundValue> {
    let get = |key: &str| -> Result<f64> {
        params
            .get(key)
            .copied()
            .ok_or_else(|| Error::Domain(format!("missing parameter '{key}'")))
    };
    match id {
        FormulaId::BinaryJensen => Ok(BoundValue::new(id, &[], binary_bound())),
        FormulaId::TernaryCurve => {
            let t = get("t")?;
            Ok(BoundValue::new(id, &[("t", t)], ternary_bound(t)?))
        }
        FormulaId::NbitFinal => {
            let (m, n) = (get("M")?, get("N")?);
            Ok(BoundValue::new(
                id,
                &[("M", m), ("N", n)],
                nbit_bound_final(m as u32, n as u64)?,
            ))
        }
        FormulaId::NbitDraft => {
            let (m, n) = (get("M")?, get("N")?);
            Ok(BoundValue::new(
                id,
                &[("M", m), ("N", n)],
                nbit_bound_draft(m as u32, n as u64)?,
            ))
        }
        FormulaId::EpsNormBound => {
            let (n, d) = (get("N")?, get("delta")?);
            Ok(BoundValue::new(
                id,
                &[("N", n), ("delta", d)],
                eps_norm_bound(n as u64, d)?,
            ))
        }
        FormulaId::L2NormExpectation => {
            let (n, s) = (get("N")?, get("sigma")?);
            Ok(BoundValue::new(
                id,
                &[("N", n), ("sigma", s)],
                l2_norm_expectation(n as u64, s)?,
            ))
        }
        FormulaId::MaxGaussianBound => {
            let (n, s) = (get("N")?, get("sigma")?);
            let (lo, _hi) = max_gaussian_bound(n as u64, s)?;
            // single-value view reports the lower edge; use the function
            // directly for the pair
            Ok(BoundValue::new(id, &[("N", n), ("sigma", s)], lo))
        }
        FormulaId::DeltaOptDraft => {
            let (k, mw, n) = (get("k")?, get("max_w")?, get("N")?);
            Ok(BoundValue::new(
                id,
                &[("k", k), ("max_w", mw), ("N", n)],
                delta_opt_draft(k as u32, mw, n as u64)?,
            ))
        }
        FormulaId::MseDecomposition => Err(Error::Domain(
            "mse decomposition needs vectors, not scalar parameters".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngState;

    #[test]
    fn binary_bound_value_and_angle() {
        let b = binary_bound();
        assert!((b - 0.797_884_560_802_865_4).abs() < 1e-12);
        assert!((b.acos().to_degrees() - 37.071_435_021_042_83).abs() < 1e-9);
    }

    #[test]
    fn ternary_collapses_to_binary_at_zero() {
        assert!((ternary_bound(0.0).unwrap() - binary_bound()).abs() <= 1e-12);
    }

    #[test]
    fn ternary_frozen_points() {
        let v = ternary_bound(0.6).unwrap();
        assert!((v - 0.899_862_741_153_852_1).abs() < 1e-9);
        assert!((v.acos().to_degrees() - 25.859_968_964_237_28).abs() < 1e-6);
        let v3 = ternary_bound(3.0).unwrap();
        assert!((v3 - 0.170_588_367_482_013_6).abs() < 1e-9);
        assert!(v3 < binary_bound());
        assert!(ternary_bound(-0.5).is_err());
        assert!(matches!(ternary_bound(12.0), Err(Error::Overflow(_))));
    }

    #[test]
    fn ternary_bound_is_unimodal_on_0_2() {
        // discrete differences change sign exactly once at step 0.005
        let mut diffs_signs = Vec::new();
        let mut prev = ternary_bound(0.0).unwrap();
        let mut t = 0.005;
        while t <= 2.0 + 1e-12 {
            let v = ternary_bound(t).unwrap();
            diffs_signs.push((v - prev) > 0.0);
            prev = v;
            t += 0.005;
        }
        let changes = diffs_signs.windows(2).filter(|w| w[0] != w[1]).count();
        assert_eq!(changes, 1, "expected a single extremum");
    }

    #[test]
    fn ternary_argmax_on_figure_grid() {
        let (t_star, angle) = ternary_optimal_threshold(0.0, 1.2, 0.01).unwrap();
        assert!((t_star - 0.61).abs() < 1e-9, "t* {t_star}");
        assert!((angle - 25.854_788_186_171_125).abs() < 1e-6);
        // degenerate grids
        let (t0, a0) = ternary_optimal_threshold(0.0, 0.0, 0.0).unwrap();
        assert_eq!(t0, 0.0);
        assert!((a0 - 37.071_435_021_042_83).abs() < 1e-9);
        let (t6, _) = ternary_optimal_threshold(0.6, 0.6, 1.0).unwrap();
        assert_eq!(t6, 0.6);
        assert!(ternary_optimal_threshold(1.0, 0.0, 0.1).is_err());
        assert!(ternary_optimal_threshold(0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn nbit_final_frozen_points() {
        let v = nbit_bound_final(8, 3 * 3 * 2048 * 1024).unwrap();
        assert!((v - 0.993_515_011_283_274_9).abs() < 1e-9);
        let v = nbit_bound_final(1, 2).unwrap();
        assert!((v - 0.854_741_401_323_328_6).abs() < 1e-9);
        // asymptote
        assert!(nbit_bound_final(60, 1 << 24).unwrap() > 0.999_999_9);
        assert!(nbit_bound_final(8, 1).is_err());
        assert!(nbit_bound_final(0, 100).is_err());
    }

    #[test]
    fn nbit_final_monotone_in_bits_and_size() {
        for n_exp in [4u32, 8, 12, 16, 20, 24] {
            let n = 1u64 << n_exp;
            let mut prev = 0.0;
            for m in 1..=16 {
                let v = nbit_bound_final(m, n).unwrap();
                assert!(v > prev, "not increasing in M at M={m}, N={n}");
                prev = v;
            }
        }
        for m in [1u32, 4, 8, 16] {
            let mut prev = 1.0;
            for n_exp in [4u32, 8, 12, 16, 20, 24] {
                let v = nbit_bound_final(m, 1u64 << n_exp).unwrap();
                assert!(v < prev, "not decreasing in N at M={m}, exp={n_exp}");
                prev = v;
            }
        }
    }

    #[test]
    fn nbit_draft_frozen_points() {
        let v = nbit_bound_draft(8, 1_000_000).unwrap();
        assert!((v - 0.960_553_362_042_277_8).abs() < 1e-9);
        assert!(nbit_bound_draft(40, 100).unwrap() > 0.999_999_9);
    }

    #[test]
    fn eps_norm_bound_values() {
        assert!((eps_norm_bound(12, 1.0).unwrap() - 1.0).abs() < 1e-12);
        assert!((eps_norm_bound(1200, 0.1).unwrap() - 1.0).abs() < 1e-12);
        assert!(eps_norm_bound(0, 1.0).is_err());
        assert!(eps_norm_bound(10, 0.0).is_err());
    }

    #[test]
    fn eps_norm_bound_dominates_sampled_mean() {
        // mean ||eps|| over uniform draws stays under sqrt(N/12)*step
        let n = 10_000usize;
        let trials = 1000;
        let delta = 0.7;
        let mut rng = RngState::from_master(7, 0);
        let mut mean = 0.0;
        for _ in 0..trials {
            let mut sq = 0.0;
            for _ in 0..n {
                let e = (rng.uniform() - 0.5) * delta;
                sq += e * e;
            }
            mean += sq.sqrt();
        }
        mean /= trials as f64;
        let bound = eps_norm_bound(n as u64, delta).unwrap();
        assert!(
            mean <= bound + 1e-12,
            "mean {mean} exceeds bound {bound}"
        );
    }

    #[test]
    fn l2_expectation_values_and_direction() {
        assert_eq!(l2_norm_expectation(1, 1.0).unwrap(), 1.0);
        assert_eq!(l2_norm_expectation(10_000, 1.0).unwrap(), 100.0);
        assert_eq!(l2_norm_expectation(100, 2.0).unwrap(), 20.0);
        // single Gaussian: E|x| = 0.7979 <= 1
        assert!(0.797_884_560_802_865_4 <= l2_norm_expectation(1, 1.0).unwrap());
    }

    #[test]
    fn l2_expectation_nearly_tight_at_high_dimension() {
        // chi-distribution mean at N = 10^4 is 99.99750...
        let n = 10_000usize;
        let trials = 200;
        let mut rng = RngState::from_master(1, 0);
        let mut mean = 0.0;
        for _ in 0..trials {
            let mut sq = 0.0;
            for _ in 0..n {
                let z = rng.standard_normal();
                sq += z * z;
            }
            mean += sq.sqrt();
        }
        mean /= trials as f64;
        assert!((99.9..=100.0).contains(&mean), "mean {mean}");
    }

    #[test]
    fn max_gaussian_bound_brackets_truth() {
        let (lo, hi) = max_gaussian_bound(256, 1.0).unwrap();
        assert!((lo - 0.541_608_610_357_118_4).abs() < 1e-12);
        assert!((hi - 3.330_218_444_630_791).abs() < 1e-12);
        // doubling sigma doubles both ends
        let (lo2, hi2) = max_gaussian_bound(256, 2.0).unwrap();
        assert!((lo2 - 2.0 * lo).abs() < 1e-12);
        assert!((hi2 - 2.0 * hi).abs() < 1e-12);
        // sampled mean of the max lands inside
        let mut rng = RngState::from_master(55, 0);
        let trials = 10_000;
        let mut mean = 0.0;
        for _ in 0..trials {
            let mut m = f64::NEG_INFINITY;
            for _ in 0..256 {
                m = m.max(rng.standard_normal());
            }
            mean += m;
        }
        mean /= trials as f64;
        assert!(lo < mean && mean < hi, "mean {mean} outside ({lo}, {hi})");
        assert!(max_gaussian_bound(1, 1.0).is_err());
    }

    #[test]
    fn mse_decompose_cases() {
        let w = WeightVector::new(vec![1.0, 2.0, 3.0], 1.0).unwrap();
        let (mse, b, v) = mse_decompose(&w, &w).unwrap();
        assert_eq!((mse, b, v), (0.0, 0.0, 0.0));

        // constant error: all bias, no variance
        let q = WeightVector::new(vec![0.0, 1.0, 2.0], 1.0).unwrap();
        let (mse, b, v) = mse_decompose(&w, &q).unwrap();
        assert!((mse - 1.0).abs() < 1e-15);
        assert!((b - 1.0).abs() < 1e-15);
        assert!(v.abs() < 1e-15);

        // symmetric error: no bias, all variance
        let w2 = WeightVector::new(vec![1.0, -1.0], 1.0).unwrap();
        let q2 = WeightVector::new(vec![0.0, 0.0], 1.0).unwrap();
        let (mse, b, v) = mse_decompose(&w2, &q2).unwrap();
        assert!((mse - 1.0).abs() < 1e-15);
        assert!(b.abs() < 1e-15);
        assert!((v - 1.0).abs() < 1e-15);

        let short = WeightVector::new(vec![1.0], 1.0).unwrap();
        assert!(mse_decompose(&w, &short).is_err());
    }

    #[test]
    fn mse_identity_on_random_pairs() {
        let mut rng = RngState::from_master(12, 0);
        for _ in 0..1000 {
            let a: Vec<f64> = (0..64).map(|_| rng.standard_normal()).collect();
            let b: Vec<f64> = (0..64).map(|_| rng.standard_normal()).collect();
            let w = WeightVector::new(a, 1.0).unwrap();
            let q = WeightVector::new(b, 1.0).unwrap();
            let (mse, bias_sq, var) = mse_decompose(&w, &q).unwrap();
            let rel = ((mse - (bias_sq + var)) / mse.max(1e-30)).abs();
            assert!(rel <= 1e-10, "identity violated: rel {rel}");
        }
    }

    #[test]
    fn delta_opt_draft_values() {
        let v = delta_opt_draft(2, 4.0, 12).unwrap();
        assert!((v - 0.571_428_571_428_571_4).abs() < 1e-12);
        // vanishes as N grows
        assert!(delta_opt_draft(2, 4.0, 1_000_000_000).unwrap() < 1e-7);
        assert!(delta_opt_draft(0, 4.0, 12).is_err());
        assert!(delta_opt_draft(2, 0.0, 12).is_err());
    }

    #[test]
    fn mse_grid_search_reports_rows() {
        let mut rng = RngState::from_master(3, 0);
        let v: Vec<f64> = (0..512).map(|_| rng.standard_normal()).collect();
        let w = WeightVector::new(v, 1.0).unwrap();
        let deltas: Vec<f64> = (1..40).map(|i| i as f64 * 0.02).collect();
        let rows = mse_grid_search(&w, 3, &deltas).unwrap();
        assert_eq!(rows.len(), deltas.len());
        // brute-force minimum exists strictly inside the grid
        let (best_delta, best_mse) = rows
            .iter()
            .cloned()
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap();
        assert!(best_mse < rows[0].1);
        assert!(best_delta > deltas[0] && best_delta < *deltas.last().unwrap());
    }

    #[test]
    fn evaluate_dispatch_round_trips() {
        let mut params = BTreeMap::new();
        params.insert("M".to_string(), 8.0);
        params.insert("N".to_string(), 10_000.0);
        let b = evaluate(FormulaId::NbitFinal, &params).unwrap();
        assert!((b.value - nbit_bound_final(8, 10_000).unwrap()).abs() < 1e-15);
        assert!(evaluate(FormulaId::TernaryCurve, &params).is_err()); // missing t
    }
}
