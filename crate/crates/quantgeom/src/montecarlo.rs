//! Seeded sampling harness: empirical cosine statistics for a quantizer
//! against Gaussian draws, and parameter sweeps that pair each empirical
//! column with its closed-form theory value.
//!
//! Determinism contract: identical configuration (including the master seed)
//! produces bitwise-identical results, independent of worker count. Per-trial
//! seeds are hashed from (master_seed, trial_index); trial results are
//! reduced in trial order with compensated summation.

use serde::Serialize;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::bounds::{nbit_bound_final, ternary_bound};
use crate::error::{Error, Result};
use crate::geometry::{angle_wrt_noise, cosine_between};
use crate::quantize::{quantize, QuantizerSpec, WeightVector};
use crate::rng::RngState;

// Substream ids: weight draws, quantizer randomness, noise draws.
const STREAM_GAUSS: u64 = 0;
const STREAM_QUANT: u64 = 1;
const STREAM_NOISE: u64 = 2;

/// Hash a trial index into its own seed (SplitMix64 finalizer over the
/// master seed and index).
pub fn derive_trial_seed(master_seed: u64, trial: u64) -> u64 {
    let mut z = master_seed
        .wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(trial.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Monte-Carlo run configuration.
#[derive(Debug, Clone, Serialize)]
pub struct McConfig {
    pub n: usize,
    pub sigma: f64,
    pub trials: usize,
    pub master_seed: u64,
    pub spec: QuantizerSpec,
    /// Worker threads; results do not depend on it.
    pub jobs: usize,
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Domain(format!("n must be >= 2, got {}", self.n)));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::Domain(format!(
                "sigma must be > 0, got {}",
                self.sigma
            )));
        }
        if self.trials == 0 {
            return Err(Error::Domain("trials must be >= 1".into()));
        }
        self.spec.validate()
    }
}

/// Draw an n-dimensional N(0, sigma^2) vector for the given seed:
/// a standard-normal stream scaled by sigma, so the same seed at different
/// sigmas yields proportional vectors.
pub fn sample_gaussian(n: usize, sigma: f64, seed: u64) -> Result<WeightVector> {
    if n == 0 {
        return Err(Error::Domain("n must be >= 1".into()));
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::Domain(format!("sigma must be > 0, got {sigma}")));
    }
    let mut rng = RngState::from_master(seed, STREAM_GAUSS);
    let mut values = vec![0.0; n];
    rng.fill_standard_normal(&mut values);
    for v in values.iter_mut() {
        *v *= sigma;
    }
    WeightVector::new(values, sigma)
}

/// Neumaier-compensated sum; order-stable reduction for determinism.
fn compensated_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for &v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Run `count` independent tasks across up to `jobs` threads; the output
/// vector is ordered by task index regardless of scheduling.
fn run_indexed<T, F>(count: usize, jobs: usize, task: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    let jobs = jobs.max(1).min(count.max(1));
    if jobs == 1 {
        return (0..count).map(&task).collect();
    }
    let slots: Mutex<Vec<Option<Result<T>>>> =
        Mutex::new((0..count).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= count {
                    break;
                }
                let r = task(i);
                slots.lock().unwrap()[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|slot| slot.expect("every task ran"))
        .collect()
}

fn mean_se(cosines: &[f64]) -> (f64, f64) {
    let n = cosines.len() as f64;
    let mean = compensated_sum(cosines) / n;
    if cosines.len() < 2 {
        return (mean, 0.0);
    }
    let sq: Vec<f64> = cosines.iter().map(|c| (c - mean) * (c - mean)).collect();
    let var = compensated_sum(&sq) / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn angle_deg_of(cos: f64) -> f64 {
    cos.clamp(-1.0, 1.0).acos().to_degrees()
}

/// Mean cosine over seeded trials, its standard error, and the angle of the
/// mean cosine.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EmpiricalCosine {
    pub mean_cos: f64,
    pub se: f64,
    pub mean_angle_deg: f64,
}

fn trial_cosine(cfg: &McConfig, trial: usize) -> Result<f64> {
    let seed = derive_trial_seed(cfg.master_seed, trial as u64);
    let w = sample_gaussian(cfg.n, cfg.sigma, seed)?;
    let mut rng = RngState::from_master(seed, STREAM_QUANT);
    let q = quantize(&cfg.spec, &w, Some(&mut rng))?;
    Ok(cosine_between(&w, &q)?.cosine)
}

pub fn empirical_cosine(cfg: &McConfig) -> Result<EmpiricalCosine> {
    cfg.validate()?;
    let cosines = run_indexed(cfg.trials, cfg.jobs, |t| trial_cosine(cfg, t))?;
    let (mean_cos, se) = mean_se(&cosines);
    Ok(EmpiricalCosine {
        mean_cos,
        se,
        mean_angle_deg: angle_deg_of(mean_cos),
    })
}

/// One sweep point: the parameter, empirical mean cosine with standard
/// error, the theory value, and both as angles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub param: f64,
    pub emp_cos: f64,
    pub se: f64,
    pub theory_cos: f64,
    pub emp_angle: f64,
    pub theory_angle: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    /// CSV with the fixed header; '.' decimals, '\n' line endings.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("param,emp_cos,se,theory_cos,emp_angle,theory_angle\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.param, r.emp_cos, r.se, r.theory_cos, r.emp_angle, r.theory_angle
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("sweep serializes")
    }
}

fn check_grid(grid: &[f64], lo_ok: impl Fn(f64) -> bool) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Domain("empty sweep grid".into()));
    }
    if grid.iter().any(|v| !v.is_finite() || !lo_ok(*v)) {
        return Err(Error::Domain("grid value out of range".into()));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Domain("grid must be strictly ascending".into()));
    }
    Ok(())
}

/// Ternary threshold sweep; the grid is in sigma units and the theory column
/// is the closed-form ternary cosine floor. Weight draws are shared across
/// grid points (per-trial seeds), so curves vary smoothly in t.
pub fn sweep_threshold(cfg: &McConfig, t_grid: &[f64]) -> Result<SweepResult> {
    cfg.validate()?;
    check_grid(t_grid, |t| t >= 0.0)?;
    let mut rows = Vec::with_capacity(t_grid.len());
    for (pi, &t) in t_grid.iter().enumerate() {
        let theory = ternary_bound(t)?;
        let cosines = run_indexed(cfg.trials, cfg.jobs, |trial| {
            let seed = derive_trial_seed(cfg.master_seed, trial as u64);
            let w = sample_gaussian(cfg.n, cfg.sigma, seed)?;
            let q = crate::quantize::quantize_ternary(&w, t * cfg.sigma)?;
            Ok(cosine_between(&w, &q)?.cosine)
        })
        .map_err(|e| match e {
            Error::Degenerate(msg) => {
                Error::Degenerate(format!("sweep point {pi} (t={t}): {msg}"))
            }
            other => other,
        })?;
        let (emp_cos, se) = mean_se(&cosines);
        rows.push(SweepRow {
            param: t,
            emp_cos,
            se,
            theory_cos: theory,
            emp_angle: angle_deg_of(emp_cos),
            theory_angle: angle_deg_of(theory),
        });
    }
    Ok(SweepResult { rows })
}

/// Bit-width sweep with the uniform midrise quantizer under nearest
/// rounding; the theory column is the closed-form M-bit cosine floor at
/// N = cfg.n.
pub fn sweep_bits(cfg: &McConfig, m_grid: &[u8]) -> Result<SweepResult> {
    cfg.validate()?;
    if m_grid.is_empty() {
        return Err(Error::Domain("empty sweep grid".into()));
    }
    if m_grid.iter().any(|&m| !(1..=16).contains(&m)) {
        return Err(Error::Domain("bit grid must lie in [1, 16]".into()));
    }
    if m_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Domain("grid must be strictly ascending".into()));
    }
    let mut rows = Vec::with_capacity(m_grid.len());
    for &m in m_grid {
        let theory = nbit_bound_final(u32::from(m), cfg.n as u64)?;
        let cosines = run_indexed(cfg.trials, cfg.jobs, |trial| {
            let seed = derive_trial_seed(cfg.master_seed, trial as u64);
            let w = sample_gaussian(cfg.n, cfg.sigma, seed)?;
            let q = crate::quantize::quantize_uniform_midrise(
                &w,
                m,
                crate::quantize::Rounding::Nearest,
                None,
            )?;
            Ok(cosine_between(&w, &q)?.cosine)
        })?;
        let (emp_cos, se) = mean_se(&cosines);
        rows.push(SweepRow {
            param: f64::from(m),
            emp_cos,
            se,
            theory_cos: theory,
            emp_angle: angle_deg_of(emp_cos),
            theory_angle: angle_deg_of(theory),
        });
    }
    Ok(SweepResult { rows })
}

/// Distribution of the cosine between independent Gaussian and uniform
/// draws; near zero with spread ~1/sqrt(n) in high dimension.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct OrthogonalityReport {
    pub n: usize,
    pub trials: usize,
    pub mean_cos: f64,
    pub std_cos: f64,
    pub se: f64,
    pub expected_std: f64,
    /// |mean| <= 3 se
    pub mean_ok: bool,
    /// std within 25% of 1/sqrt(n) (50% below n = 100, where the normal
    /// approximation to the cosine distribution is loose)
    pub std_ok: bool,
}

/// Assemble the report from already-measured cosines.
pub fn orthogonality_report(n: usize, cosines: &[f64]) -> OrthogonalityReport {
    let trials = cosines.len();
    let (mean_cos, se) = mean_se(cosines);
    let sq: Vec<f64> = cosines
        .iter()
        .map(|c| (c - mean_cos) * (c - mean_cos))
        .collect();
    let std_cos = if trials > 1 {
        (compensated_sum(&sq) / (trials as f64 - 1.0)).sqrt()
    } else {
        0.0
    };
    let expected_std = 1.0 / (n as f64).sqrt();
    let tol = if n >= 100 { 0.25 } else { 0.50 };
    OrthogonalityReport {
        n,
        trials,
        mean_cos,
        std_cos,
        se,
        expected_std,
        mean_ok: mean_cos.abs() <= 3.0 * se,
        std_ok: (std_cos / expected_std - 1.0).abs() <= tol,
    }
}

pub fn eps_orthogonality_check(n: usize, trials: usize, seed: u64) -> Result<OrthogonalityReport> {
    if n < 2 || trials < 2 {
        return Err(Error::Domain("need n >= 2 and trials >= 2".into()));
    }
    let cosines = run_indexed(trials, 1, |trial| {
        let trial_seed = derive_trial_seed(seed, trial as u64);
        let w = sample_gaussian(n, 1.0, trial_seed)?;
        let mut rng = RngState::from_master(trial_seed, STREAM_NOISE);
        let eps: Vec<f64> = (0..n).map(|_| rng.uniform() - 0.5).collect();
        let eps = WeightVector::new(eps, 1.0)?;
        Ok(angle_wrt_noise(&w, &eps)?.cosine)
    })?;
    Ok(orthogonality_report(n, &cosines))
}
