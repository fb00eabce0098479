//! Range batch-normalization and a standard batch-norm reference.
//!
//! Range BN divides each centered feature by C(n) * (max - min) of the
//! centered column, with C(n) = 1/sqrt(2 ln n); for Gaussian activations this
//! tracks the standard deviation without sums of squares. Backward treats the
//! max/min through a one-hot subgradient at the arg-max/arg-min rows.

use crate::error::{Error, Result};

/// Row-major batch of activations: `n` examples by `d` features.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchMatrix {
    data: Vec<f64>,
    n: usize,
    d: usize,
}

impl BatchMatrix {
    pub fn new(data: Vec<f64>, n: usize, d: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Domain(format!("batch size must be >= 2, got {n}")));
        }
        if d == 0 || data.len() != n * d {
            return Err(Error::ShapeMismatch(format!(
                "data length {} != n*d = {}x{}",
                data.len(),
                n,
                d
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite activation".into()));
        }
        Ok(BatchMatrix { data, n, d })
    }

    pub fn rows(&self) -> usize {
        self.n
    }

    pub fn cols(&self) -> usize {
        self.d
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.d + j]
    }

    fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.d + j] = v;
    }
}

/// Affine parameters and the stability epsilon for the standard variant.
/// epsilon 0 selects the exact path used by scale-invariance checks.
#[derive(Debug, Clone, PartialEq)]
pub struct BnParams {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub epsilon_stability: f64,
}

impl BnParams {
    pub fn identity(d: usize) -> Self {
        BnParams {
            gamma: vec![1.0; d],
            beta: vec![0.0; d],
            epsilon_stability: 0.0,
        }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if self.gamma.len() != d || self.beta.len() != d {
            return Err(Error::ShapeMismatch(format!(
                "affine parameters sized {}/{} for {d} features",
                self.gamma.len(),
                self.beta.len()
            )));
        }
        if !(self.epsilon_stability >= 0.0 && self.epsilon_stability <= 1e-2) {
            return Err(Error::Domain(format!(
                "epsilon_stability must be in [0, 1e-2], got {}",
                self.epsilon_stability
            )));
        }
        Ok(())
    }
}

/// Scale adjustment C(n) = 1/sqrt(2 ln n); requires n >= 2.
pub fn c_of_n(n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::Domain(format!(
            "batch size must be >= 2 for the scale adjustment, got {n}"
        )));
    }
    Ok(1.0 / (2.0 * (n as f64).ln()).sqrt())
}

struct ColumnStats {
    mean: f64,
    max_row: usize,
    min_row: usize,
    range: f64,
}

fn column_stats(x: &BatchMatrix, j: usize) -> ColumnStats {
    let n = x.rows();
    let mut mean = 0.0;
    for i in 0..n {
        mean += x.get(i, j);
    }
    mean /= n as f64;
    let mut max_row = 0;
    let mut min_row = 0;
    let mut max_v = x.get(0, j) - mean;
    let mut min_v = max_v;
    for i in 1..n {
        let c = x.get(i, j) - mean;
        // strict comparisons keep ties at the lowest row index
        if c > max_v {
            max_v = c;
            max_row = i;
        }
        if c < min_v {
            min_v = c;
            min_row = i;
        }
    }
    ColumnStats {
        mean,
        max_row,
        min_row,
        range: max_v - min_v,
    }
}

/// Range BN forward: per feature j, (x - mean_j) / (C(n) * range(x - mean_j)),
/// optionally followed by gamma * xhat + beta.
pub fn range_bn_forward(
    x: &BatchMatrix,
    params: &BnParams,
    use_affine: bool,
) -> Result<BatchMatrix> {
    params.validate(x.cols())?;
    let c = c_of_n(x.rows())?;
    let mut out = x.clone();
    for j in 0..x.cols() {
        let stats = column_stats(x, j);
        if stats.range <= 0.0 {
            return Err(Error::Degenerate(format!(
                "feature {j} has zero range; cannot normalize"
            )));
        }
        let denom = c * stats.range;
        for i in 0..x.rows() {
            let mut v = (x.get(i, j) - stats.mean) / denom;
            if use_affine {
                v = params.gamma[j] * v + params.beta[j];
            }
            out.set(i, j, v);
        }
    }
    Ok(out)
}

/// Gradients of the range BN forward.
pub struct BnGrads {
    pub input_grad: BatchMatrix,
    pub gamma_grad: Vec<f64>,
    pub beta_grad: Vec<f64>,
}

/// Backward through range BN. The range's derivative is taken as one-hot at
/// the arg-max and arg-min of each centered column (ties at the lowest row
/// index); the mean is differentiated exactly.
pub fn range_bn_backward(
    x: &BatchMatrix,
    upstream: &BatchMatrix,
    params: &BnParams,
    use_affine: bool,
) -> Result<BnGrads> {
    if x.rows() != upstream.rows() || x.cols() != upstream.cols() {
        return Err(Error::ShapeMismatch(format!(
            "upstream {}x{} vs input {}x{}",
            upstream.rows(),
            upstream.cols(),
            x.rows(),
            x.cols()
        )));
    }
    params.validate(x.cols())?;
    let n = x.rows();
    let c = c_of_n(n)?;
    let mut input_grad = BatchMatrix {
        data: vec![0.0; n * x.cols()],
        n,
        d: x.cols(),
    };
    let mut gamma_grad = vec![0.0; x.cols()];
    let mut beta_grad = vec![0.0; x.cols()];
    for j in 0..x.cols() {
        let stats = column_stats(x, j);
        if stats.range <= 0.0 {
            return Err(Error::Degenerate(format!(
                "feature {j} has zero range; gradient undefined"
            )));
        }
        let denom = c * stats.range;
        let gamma = if use_affine { params.gamma[j] } else { 1.0 };

        // xhat_ij = c_ij / denom with c_ij = x_ij - mean_j
        let mut up_mean = 0.0;
        let mut up_dot_xhat = 0.0;
        for i in 0..n {
            let up = upstream.get(i, j);
            let xhat = (x.get(i, j) - stats.mean) / denom;
            up_mean += up;
            up_dot_xhat += up * xhat;
            if use_affine {
                gamma_grad[j] += up * xhat;
                beta_grad[j] += up;
            }
        }
        up_mean /= n as f64;

        // d xhat_kj / d x_ij = (delta_ki - 1/n)/denom
        //   - xhat_kj/denom * C(n) * (delta_i,argmax - delta_i,argmin)
        // summed against upstream * gamma:
        let range_coeff = gamma * c * up_dot_xhat / denom;
        for i in 0..n {
            let mut g = gamma * (upstream.get(i, j) - up_mean) / denom;
            if i == stats.max_row {
                g -= range_coeff;
            }
            if i == stats.min_row {
                g += range_coeff;
            }
            input_grad.set(i, j, g);
        }
    }
    Ok(BnGrads {
        input_grad,
        gamma_grad,
        beta_grad,
    })
}

/// Classical batch norm with population (1/n) variance:
/// (x - mean) / sqrt(var + epsilon), optional affine.
pub fn standard_bn_forward(
    x: &BatchMatrix,
    params: &BnParams,
    use_affine: bool,
) -> Result<BatchMatrix> {
    params.validate(x.cols())?;
    let n = x.rows() as f64;
    let mut out = x.clone();
    for j in 0..x.cols() {
        let mut mean = 0.0;
        for i in 0..x.rows() {
            mean += x.get(i, j);
        }
        mean /= n;
        let mut var = 0.0;
        for i in 0..x.rows() {
            var += (x.get(i, j) - mean).powi(2);
        }
        var /= n;
        let denom_sq = var + params.epsilon_stability;
        if denom_sq <= 0.0 {
            return Err(Error::Degenerate(format!(
                "feature {j} has zero variance and no stability epsilon"
            )));
        }
        let denom = denom_sq.sqrt();
        for i in 0..x.rows() {
            let mut v = (x.get(i, j) - mean) / denom;
            if use_affine {
                v = params.gamma[j] * v + params.beta[j];
            }
            out.set(i, j, v);
        }
    }
    Ok(out)
}

/// Backward through standard batch norm (population statistics).
pub fn standard_bn_backward(
    x: &BatchMatrix,
    upstream: &BatchMatrix,
    params: &BnParams,
    use_affine: bool,
) -> Result<BnGrads> {
    if x.rows() != upstream.rows() || x.cols() != upstream.cols() {
        return Err(Error::ShapeMismatch(format!(
            "upstream {}x{} vs input {}x{}",
            upstream.rows(),
            upstream.cols(),
            x.rows(),
            x.cols()
        )));
    }
    params.validate(x.cols())?;
    let n = x.rows();
    let nf = n as f64;
    let mut input_grad = BatchMatrix {
        data: vec![0.0; n * x.cols()],
        n,
        d: x.cols(),
    };
    let mut gamma_grad = vec![0.0; x.cols()];
    let mut beta_grad = vec![0.0; x.cols()];
    for j in 0..x.cols() {
        let mut mean = 0.0;
        for i in 0..n {
            mean += x.get(i, j);
        }
        mean /= nf;
        let mut var = 0.0;
        for i in 0..n {
            var += (x.get(i, j) - mean).powi(2);
        }
        var /= nf;
        let denom_sq = var + params.epsilon_stability;
        if denom_sq <= 0.0 {
            return Err(Error::Degenerate(format!(
                "feature {j} has zero variance and no stability epsilon"
            )));
        }
        let denom = denom_sq.sqrt();
        let gamma = if use_affine { params.gamma[j] } else { 1.0 };

        let mut up_mean = 0.0;
        let mut up_dot_xhat = 0.0;
        for i in 0..n {
            let up = upstream.get(i, j);
            let xhat = (x.get(i, j) - mean) / denom;
            up_mean += up;
            up_dot_xhat += up * xhat;
            if use_affine {
                gamma_grad[j] += up * xhat;
                beta_grad[j] += up;
            }
        }
        up_mean /= nf;
        let up_dot_xhat_mean = up_dot_xhat / nf;
        for i in 0..n {
            let xhat = (x.get(i, j) - mean) / denom;
            let g = gamma / denom
                * (upstream.get(i, j) - up_mean - xhat * up_dot_xhat_mean * var / denom_sq);
            input_grad.set(i, j, g);
        }
    }
    Ok(BnGrads {
        input_grad,
        gamma_grad,
        beta_grad,
    })
}

/// Mean over seeded Gaussian N(0, sigma^2) batches of
/// C(n) * range(x - mean) / sigma, averaged over `d` feature columns.
/// The Gaussian max-expectation sandwich puts this in [0.325, 2].
pub fn sandwich_mean_ratio(
    n: usize,
    d: usize,
    sigma: f64,
    batches: usize,
    seed: u64,
) -> Result<f64> {
    if d == 0 || batches == 0 {
        return Err(Error::Domain("need d >= 1 and batches >= 1".into()));
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::Domain(format!("sigma must be > 0, got {sigma}")));
    }
    let c = c_of_n(n)?;
    let mut rng = crate::rng::RngState::from_master(seed, 0);
    let mut total = 0.0;
    let mut col = vec![0.0; n];
    for _ in 0..batches {
        for _ in 0..d {
            let mut sum = 0.0;
            for v in col.iter_mut() {
                *v = sigma * rng.standard_normal();
                sum += *v;
            }
            let mean = sum / n as f64;
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for v in &col {
                let centered = v - mean;
                lo = lo.min(centered);
                hi = hi.max(centered);
            }
            total += c * (hi - lo) / sigma;
        }
    }
    Ok(total / (batches * d) as f64)
}
