//! Desk-scale quantized back-propagation on a small MLP over synthetic data.
//!
//! The forward pass runs with affine-quantized weights and activations and
//! range batch-norm between layers; the backward pass keeps two copies of
//! each layer gradient: a low-precision stochastically-rounded copy that
//! propagates to the previous layer, and a higher-precision copy reserved for
//! the weight gradient (gradient bifurcation). Quantizer derivatives pass
//! through unchanged inside the clamp range and are zero outside. Master
//! weights stay in full precision; updates are never quantized in place.

pub mod data;
pub mod matrix;
pub mod report;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::cosine_between_slices;
use crate::quantize::{
    clamp_range, quantize_gemmlowp, stochastic_ternarize, ClampPolicy, Rounding, WeightVector,
};
use crate::range_bn::{
    range_bn_backward, range_bn_forward, standard_bn_backward, standard_bn_forward, BatchMatrix,
    BnParams,
};
use crate::rng::RngState;
use crate::train::data::{generate, DatasetConfig};
use crate::train::matrix::Matrix;
use crate::train::report::{AngleTrace, Histogram, StepAngles, TrainingReport};

// Substream ids for the independent random pieces of a run.
const STREAM_DATA: u64 = 10;
const STREAM_INIT: u64 = 11;
const STREAM_SHUFFLE: u64 = 12;
const STREAM_GRAD: u64 = 13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BnKind {
    Range,
    Standard,
}

#[derive(Debug, Clone, Serialize)]
pub struct NetConfig {
    /// Sizes including input and output, e.g. [2, 32, 32, 4].
    pub layer_sizes: Vec<usize>,
    pub bn: BnKind,
    pub bn_affine: bool,
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 || self.layer_sizes.contains(&0) {
            return Err(Error::Domain("need at least input and output sizes".into()));
        }
        Ok(())
    }
}

/// Precision placement for the two layer-gradient copies.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BifurcationConfig {
    /// When false, the weight gradient is computed from the low-precision
    /// copy as well (the ablation).
    pub enabled: bool,
    /// Bits for the copy that propagates to the previous layer.
    pub low_bits: u8,
    /// Bits for the weight-gradient copy; None keeps it in full precision.
    pub high_bits: Option<u8>,
}

impl Default for BifurcationConfig {
    fn default() -> Self {
        BifurcationConfig {
            enabled: true,
            low_bits: 8,
            high_bits: None,
        }
    }
}

/// Which tensors get quantized and how.
#[derive(Debug, Clone, Serialize)]
pub struct QuantSimConfig {
    /// Master switch; false runs everything in full precision.
    pub enabled: bool,
    pub weight_bits: u8,
    pub activation_bits: u8,
    /// Chunk count for the activation clamp range average.
    pub activation_chunks: usize,
    pub bifurcation: BifurcationConfig,
    /// Keep the first and last linear layers in full precision.
    pub pin_first_last: bool,
}

impl QuantSimConfig {
    pub fn full_precision() -> Self {
        QuantSimConfig {
            enabled: false,
            weight_bits: 8,
            activation_bits: 8,
            activation_chunks: 4,
            bifurcation: BifurcationConfig::default(),
            pin_first_last: false,
        }
    }

    pub fn eight_bit() -> Self {
        QuantSimConfig {
            enabled: true,
            ..QuantSimConfig::full_precision()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=16).contains(&self.weight_bits)
            || !(1..=16).contains(&self.activation_bits)
            || !(1..=16).contains(&self.bifurcation.low_bits)
        {
            return Err(Error::Domain("bit widths must be in [1, 16]".into()));
        }
        if let Some(hb) = self.bifurcation.high_bits {
            if !(1..=16).contains(&hb) || hb < self.bifurcation.low_bits {
                return Err(Error::Domain(
                    "high-precision copy must have at least as many bits as the low copy".into(),
                ));
            }
        }
        if self.activation_chunks == 0 {
            return Err(Error::Domain("activation_chunks must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainConfig {
    pub dataset: DatasetConfig,
    pub net: NetConfig,
    pub quant: QuantSimConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
    /// Record angle traces every this many steps (0 disables recording).
    pub record_every: usize,
    pub histogram_bins: usize,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        self.net.validate()?;
        self.quant.validate()?;
        if self.epochs == 0 || self.batch_size < 2 {
            return Err(Error::Domain(
                "need epochs >= 1 and batch_size >= 2".into(),
            ));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Domain("learning rate must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Domain("momentum must be in [0, 1)".into()));
        }
        if self.net.layer_sizes[0] != 2 {
            return Err(Error::Domain("datasets here are 2-dimensional".into()));
        }
        if *self.net.layer_sizes.last().unwrap() != self.dataset.classes {
            return Err(Error::Domain(
                "output size must equal the class count".into(),
            ));
        }
        Ok(())
    }
}

struct Linear {
    w: Matrix, // out x in
    b: Vec<f64>,
    vel_w: Matrix,
    vel_b: Vec<f64>,
}

struct BnLayer {
    params: BnParams,
    vel_gamma: Vec<f64>,
    vel_beta: Vec<f64>,
}

/// Multilayer perceptron with batch norm between hidden layers; master
/// parameters always full precision.
pub struct Mlp {
    linears: Vec<Linear>,
    bns: Vec<BnLayer>,
    net: NetConfig,
}

/// Per-layer forward cache: the (possibly quantized) layer input, the
/// weights actually used, and the hidden-stage intermediates.
#[derive(Debug)]
pub struct LayerCache {
    input: Matrix,
    w_used: Matrix,
    weight_cos: f64,
    z: Matrix,
    /// post batch-norm (hidden layers only)
    h: Option<Matrix>,
    /// post relu, before activation quantization
    r: Option<Matrix>,
    /// clamp range of the activation quantizer that produced the NEXT input
    act_clamp: Option<(f64, f64)>,
}

/// Per-layer gradients plus the instrumentation the trace needs.
pub struct BackwardResult {
    pub grad_w: Vec<Matrix>,
    pub grad_b: Vec<Vec<f64>>,
    pub grad_gamma: Vec<Vec<f64>>,
    pub grad_beta: Vec<Vec<f64>>,
    pub angles: Vec<StepAngles>,
    /// low-precision layer gradients, flattened per layer (histograms)
    pub layer_grads_low: Vec<Vec<f64>>,
}

fn cos_or_one(a: &[f64], b: &[f64]) -> f64 {
    match cosine_between_slices(a, b) {
        Ok(r) => r.cosine,
        Err(_) => 1.0, // zero-norm degenerate: treat as aligned
    }
}

/// Quantize a tensor's values with the affine scheme, returning the
/// dequantized tensor; clamp range comes back for STE masking.
fn quantize_tensor(
    values: &[f64],
    bits: u8,
    clamp: &ClampPolicy,
    rounding: Rounding,
    rng: Option<&mut RngState>,
) -> Result<(Vec<f64>, (f64, f64))> {
    let w = WeightVector::new(values.to_vec(), 1.0)?;
    let range = clamp_range(values, clamp)?;
    let q = quantize_gemmlowp(&w, bits, clamp, rounding, rng)?;
    Ok((q.dequantize(), range))
}

/// Gradient-copy quantization: rounding onto a uniform grid with step
/// (max - min)/2^bits. The grid is unclipped, so the stochastic path is
/// exactly unbiased coordinate-wise; a constant tensor passes through
/// unchanged.
fn quantize_grad_tensor(
    values: &[f64],
    bits: u8,
    rounding: Rounding,
    mut rng: Option<&mut RngState>,
) -> Result<Vec<f64>> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let step = (hi - lo) / f64::powi(2.0, i32::from(bits));
    if step <= 0.0 {
        return Ok(values.to_vec());
    }
    match rounding {
        Rounding::Nearest => Ok(values.iter().map(|&v| (v / step).round() * step).collect()),
        Rounding::Stochastic => {
            let rng = rng
                .take()
                .ok_or_else(|| Error::Domain("stochastic rounding needs rng".into()))?;
            values
                .iter()
                .map(|&v| crate::quantize::stochastic_round(v, step, rng))
                .collect()
        }
    }
}

fn to_batch(m: &Matrix, what: &str) -> Result<BatchMatrix> {
    if m.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::TrainAbort(format!("non-finite values in {what}")));
    }
    BatchMatrix::new(m.data().to_vec(), m.rows(), m.cols())
}

fn from_batch(b: &BatchMatrix) -> Matrix {
    Matrix::from_vec(b.rows(), b.cols(), b.data().to_vec())
}

impl Mlp {
    pub fn new(net: NetConfig, rng: &mut RngState) -> Result<Self> {
        net.validate()?;
        let mut linears = Vec::new();
        let mut bns = Vec::new();
        for l in 0..net.layer_sizes.len() - 1 {
            let fan_in = net.layer_sizes[l];
            let fan_out = net.layer_sizes[l + 1];
            let std = (2.0 / fan_in as f64).sqrt();
            let mut w = Matrix::zeros(fan_out, fan_in);
            for v in w.data_mut() {
                *v = std * rng.standard_normal();
            }
            linears.push(Linear {
                vel_w: Matrix::zeros(fan_out, fan_in),
                vel_b: vec![0.0; fan_out],
                w,
                b: vec![0.0; fan_out],
            });
            if l + 2 < net.layer_sizes.len() {
                bns.push(BnLayer {
                    params: BnParams::identity(fan_out),
                    vel_gamma: vec![0.0; fan_out],
                    vel_beta: vec![0.0; fan_out],
                });
            }
        }
        Ok(Mlp { linears, bns, net })
    }

    pub fn layer_count(&self) -> usize {
        self.linears.len()
    }

    pub fn layer_weights(&self, l: usize) -> &Matrix {
        &self.linears[l].w
    }

    fn layer_is_quantized(&self, l: usize, quant: &QuantSimConfig) -> bool {
        if !quant.enabled {
            return false;
        }
        if quant.pin_first_last && (l == 0 || l + 1 == self.linears.len()) {
            return false;
        }
        true
    }

    fn bn_forward(&self, l: usize, z: &Matrix) -> Result<Matrix> {
        let x = to_batch(z, &format!("pre-norm activations of layer {l}"))?;
        let out = match self.net.bn {
            BnKind::Range => range_bn_forward(&x, &self.bns[l].params, self.net.bn_affine)?,
            BnKind::Standard => standard_bn_forward(&x, &self.bns[l].params, self.net.bn_affine)?,
        };
        Ok(from_batch(&out))
    }

    fn bn_backward(&self, l: usize, z: &Matrix, upstream: &Matrix) -> Result<(Matrix, Vec<f64>, Vec<f64>)> {
        let x = to_batch(z, "batch-norm input")?;
        let up = to_batch(upstream, "batch-norm upstream gradient")?;
        let grads = match self.net.bn {
            BnKind::Range => range_bn_backward(&x, &up, &self.bns[l].params, self.net.bn_affine)?,
            BnKind::Standard => {
                standard_bn_backward(&x, &up, &self.bns[l].params, self.net.bn_affine)?
            }
        };
        Ok((
            from_batch(&grads.input_grad),
            grads.gamma_grad,
            grads.beta_grad,
        ))
    }

    /// Quantized forward pass; caches everything backward needs.
    pub fn forward(&self, x: &Matrix, quant: &QuantSimConfig) -> Result<(Matrix, Vec<LayerCache>)> {
        quant.validate()?;
        if x.cols() != self.net.layer_sizes[0] {
            return Err(Error::ShapeMismatch(format!(
                "input has {} features, expected {}",
                x.cols(),
                self.net.layer_sizes[0]
            )));
        }
        let mut caches = Vec::with_capacity(self.linears.len());
        let mut a = x.clone();
        for (l, lin) in self.linears.iter().enumerate() {
            let (w_used, weight_cos) = if self.layer_is_quantized(l, quant) {
                let (deq, _) = quantize_tensor(
                    lin.w.data(),
                    quant.weight_bits,
                    &ClampPolicy::AbsMaxMin,
                    Rounding::Nearest,
                    None,
                )?;
                let cos = cos_or_one(lin.w.data(), &deq);
                (Matrix::from_vec(lin.w.rows(), lin.w.cols(), deq), cos)
            } else {
                (lin.w.clone(), 1.0)
            };
            let z = a.matmul_bt(&w_used).add_row(&lin.b);
            if z.data().iter().any(|v| !v.is_finite()) {
                return Err(Error::TrainAbort(format!(
                    "non-finite pre-activation in layer {l}"
                )));
            }
            let mut cache = LayerCache {
                input: a.clone(),
                w_used,
                weight_cos,
                z: z.clone(),
                h: None,
                r: None,
                act_clamp: None,
            };
            if l + 1 < self.linears.len() {
                let h = self.bn_forward(l, &z)?;
                let r = h.map(|v| v.max(0.0));
                let next = if quant.enabled {
                    let mut chunks = quant.activation_chunks;
                    chunks = chunks.min(r.data().len());
                    let (deq, range) = quantize_tensor(
                        r.data(),
                        quant.activation_bits,
                        &ClampPolicy::ChunkedAverage { chunks },
                        Rounding::Nearest,
                        None,
                    )?;
                    cache.act_clamp = Some(range);
                    Matrix::from_vec(r.rows(), r.cols(), deq)
                } else {
                    r.clone()
                };
                cache.h = Some(h);
                cache.r = Some(r);
                a = next;
            } else {
                a = z;
            }
            caches.push(cache);
        }
        Ok((a, caches))
    }

    /// Softmax cross-entropy; returns the mean loss and d(loss)/d(logits).
    pub fn loss_and_grad(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
        if logits.rows() != labels.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} logit rows vs {} labels",
                logits.rows(),
                labels.len()
            )));
        }
        let n = logits.rows();
        let c = logits.cols();
        let mut grad = Matrix::zeros(n, c);
        let mut loss = 0.0;
        for (i, &label) in labels.iter().enumerate() {
            let mut maxv = f64::NEG_INFINITY;
            for j in 0..c {
                maxv = maxv.max(logits.get(i, j));
            }
            let mut denom = 0.0;
            for j in 0..c {
                denom += (logits.get(i, j) - maxv).exp();
            }
            loss -= (logits.get(i, label) - maxv) - denom.ln();
            for j in 0..c {
                let p = (logits.get(i, j) - maxv).exp() / denom;
                let target = if j == label { 1.0 } else { 0.0 };
                grad.set(i, j, (p - target) / n as f64);
            }
        }
        Ok((loss / n as f64, grad))
    }

    /// Backward pass with gradient bifurcation. `logit_grad` is
    /// d(loss)/d(logits); gradients come back per layer in forward order.
    pub fn backward(
        &self,
        caches: &[LayerCache],
        logit_grad: &Matrix,
        quant: &QuantSimConfig,
        rng: Option<&mut RngState>,
        step: usize,
    ) -> Result<BackwardResult> {
        let layers = self.linears.len();
        let mut grad_w: Vec<Option<Matrix>> = (0..layers).map(|_| None).collect();
        let mut grad_b: Vec<Option<Vec<f64>>> = (0..layers).map(|_| None).collect();
        let mut grad_gamma = vec![Vec::new(); self.bns.len()];
        let mut grad_beta = vec![Vec::new(); self.bns.len()];
        let mut angles = Vec::with_capacity(layers);
        let mut layer_grads_low = Vec::with_capacity(layers);
        let mut rng = rng;

        let mut g = logit_grad.clone(); // d loss / d z_l
        for l in (0..layers).rev() {
            let cache = &caches[l];
            let quantize_grads = self.layer_is_quantized(l, quant);
            let (g_low, layer_grad_cos) = if quantize_grads {
                let r = rng
                    .as_deref_mut()
                    .ok_or_else(|| Error::Domain("gradient quantization needs rng".into()))?;
                let deq = quantize_grad_tensor(
                    g.data(),
                    quant.bifurcation.low_bits,
                    Rounding::Stochastic,
                    Some(r),
                )?;
                let cos = cos_or_one(&deq, g.data());
                (Matrix::from_vec(g.rows(), g.cols(), deq), cos)
            } else {
                (g.clone(), 1.0)
            };

            let g_high = if quantize_grads {
                match quant.bifurcation.high_bits {
                    None => g.clone(),
                    Some(hb) => {
                        let deq = quantize_grad_tensor(g.data(), hb, Rounding::Nearest, None)?;
                        Matrix::from_vec(g.rows(), g.cols(), deq)
                    }
                }
            } else {
                g.clone()
            };

            let g_for_w = if quant.bifurcation.enabled { &g_high } else { &g_low };
            let gw = g_for_w.at_matmul(&cache.input);
            let gb = g_for_w.col_sums();
            let gw_ref = g.at_matmul(&cache.input);
            let weight_grad_cos = cos_or_one(gw.data(), gw_ref.data());
            angles.push(StepAngles {
                step,
                weight_cos: cache.weight_cos,
                layer_grad_cos,
                weight_grad_cos,
            });
            layer_grads_low.push(g_low.data().to_vec());
            grad_w[l] = Some(gw);
            grad_b[l] = Some(gb);

            if l > 0 {
                // d loss / d a_l, using the low-precision copy
                let mut da = g_low.matmul(&cache.w_used);
                let prev = &caches[l - 1];
                // straight-through estimator across the activation
                // quantizer: identity inside the clamp range, zero outside
                if let Some((lo, hi)) = prev.act_clamp {
                    let r = prev.r.as_ref().expect("hidden cache");
                    for (dv, &rv) in da.data_mut().iter_mut().zip(r.data()) {
                        if rv < lo || rv > hi {
                            *dv = 0.0;
                        }
                    }
                }
                // relu
                let h = prev.h.as_ref().expect("hidden cache");
                for (dv, &hv) in da.data_mut().iter_mut().zip(h.data()) {
                    if hv <= 0.0 {
                        *dv = 0.0;
                    }
                }
                // batch norm
                let (dz, dgamma, dbeta) = self.bn_backward(l - 1, &prev.z, &da)?;
                grad_gamma[l - 1] = dgamma;
                grad_beta[l - 1] = dbeta;
                g = dz;
            }
        }
        angles.reverse();
        layer_grads_low.reverse();
        Ok(BackwardResult {
            grad_w: grad_w.into_iter().map(|g| g.unwrap()).collect(),
            grad_b: grad_b.into_iter().map(|g| g.unwrap()).collect(),
            grad_gamma,
            grad_beta,
            angles,
            layer_grads_low,
        })
    }

    fn apply_updates(&mut self, grads: &BackwardResult, lr: f64, momentum: f64) {
        for (l, lin) in self.linears.iter_mut().enumerate() {
            for (i, g) in grads.grad_w[l].data().iter().enumerate() {
                let v = momentum * lin.vel_w.data()[i] + g;
                lin.vel_w.data_mut()[i] = v;
                lin.w.data_mut()[i] -= lr * v;
            }
            for (i, g) in grads.grad_b[l].iter().enumerate() {
                let v = momentum * lin.vel_b[i] + g;
                lin.vel_b[i] = v;
                lin.b[i] -= lr * v;
            }
        }
        if self.net.bn_affine {
            for (l, bn) in self.bns.iter_mut().enumerate() {
                if grads.grad_gamma[l].is_empty() {
                    continue;
                }
                for i in 0..bn.params.gamma.len() {
                    let vg = momentum * bn.vel_gamma[i] + grads.grad_gamma[l][i];
                    bn.vel_gamma[i] = vg;
                    bn.params.gamma[i] -= lr * vg;
                    let vb = momentum * bn.vel_beta[i] + grads.grad_beta[l][i];
                    bn.vel_beta[i] = vb;
                    bn.params.beta[i] -= lr * vb;
                }
            }
        }
    }

    /// Flattened parameter vector: per layer W then b, then per BN layer
    /// gamma then beta (affine only). Order matches `set_params_flat`.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut p = Vec::new();
        for lin in &self.linears {
            p.extend_from_slice(lin.w.data());
            p.extend_from_slice(&lin.b);
        }
        if self.net.bn_affine {
            for bn in &self.bns {
                p.extend_from_slice(&bn.params.gamma);
                p.extend_from_slice(&bn.params.beta);
            }
        }
        p
    }

    pub fn set_params_flat(&mut self, p: &[f64]) -> Result<()> {
        let mut idx = 0;
        let take = |idx: &mut usize, len: usize| -> Result<std::ops::Range<usize>> {
            if *idx + len > p.len() {
                return Err(Error::ShapeMismatch("parameter vector too short".into()));
            }
            let r = *idx..*idx + len;
            *idx += len;
            Ok(r)
        };
        for lin in &mut self.linears {
            let r = take(&mut idx, lin.w.data().len())?;
            lin.w.data_mut().copy_from_slice(&p[r]);
            let r = take(&mut idx, lin.b.len())?;
            lin.b.copy_from_slice(&p[r]);
        }
        if self.net.bn_affine {
            for bn in &mut self.bns {
                let r = take(&mut idx, bn.params.gamma.len())?;
                bn.params.gamma.copy_from_slice(&p[r]);
                let r = take(&mut idx, bn.params.beta.len())?;
                bn.params.beta.copy_from_slice(&p[r]);
            }
        }
        if idx != p.len() {
            return Err(Error::ShapeMismatch("parameter vector too long".into()));
        }
        Ok(())
    }

    pub fn loss_on(&self, x: &Matrix, labels: &[usize], quant: &QuantSimConfig) -> Result<f64> {
        let (logits, _) = self.forward(x, quant)?;
        Ok(Self::loss_and_grad(&logits, labels)?.0)
    }

    /// Loss and flattened analytic gradients in `params_flat` order.
    pub fn grads_flat(
        &self,
        x: &Matrix,
        labels: &[usize],
        quant: &QuantSimConfig,
        rng: Option<&mut RngState>,
    ) -> Result<(f64, Vec<f64>)> {
        let (logits, caches) = self.forward(x, quant)?;
        let (loss, lgrad) = Self::loss_and_grad(&logits, labels)?;
        let back = self.backward(&caches, &lgrad, quant, rng, 0)?;
        let mut g = Vec::new();
        for l in 0..self.linears.len() {
            g.extend_from_slice(back.grad_w[l].data());
            g.extend_from_slice(&back.grad_b[l]);
        }
        if self.net.bn_affine {
            for l in 0..self.bns.len() {
                g.extend_from_slice(&back.grad_gamma[l]);
                g.extend_from_slice(&back.grad_beta[l]);
            }
        }
        Ok((loss, g))
    }

    pub fn accuracy(&self, x: &Matrix, labels: &[usize], quant: &QuantSimConfig) -> Result<f64> {
        let (logits, _) = self.forward(x, quant)?;
        let mut correct = 0usize;
        for (i, &label) in labels.iter().enumerate() {
            let mut best = 0;
            for j in 1..logits.cols() {
                if logits.get(i, j) > logits.get(i, best) {
                    best = j;
                }
            }
            if best == label {
                correct += 1;
            }
        }
        Ok(correct as f64 / labels.len() as f64)
    }
}

/// Average of `samples` independent stochastically-ternarized products:
/// each round ternarizes `g_s` (n x p) and accumulates its transpose times
/// `a` (n x q); the expectation equals the exact product g_s^T a.
pub fn multi_stochastic_ternarization_update(
    g_s: &Matrix,
    a: &Matrix,
    samples: usize,
    rng: &mut RngState,
) -> Result<Matrix> {
    if samples == 0 {
        return Err(Error::Domain("need at least one sample".into()));
    }
    if g_s.rows() != a.rows() {
        return Err(Error::ShapeMismatch(format!(
            "{} vs {} rows",
            g_s.rows(),
            a.rows()
        )));
    }
    let mut acc = Matrix::zeros(g_s.cols(), a.cols());
    for _ in 0..samples {
        let g = WeightVector::new(g_s.data().to_vec(), 1.0);
        let tern = match g {
            Ok(gv) => {
                let q = stochastic_ternarize(&gv, rng);
                Matrix::from_vec(g_s.rows(), g_s.cols(), q.dequantize())
            }
            // all-zero gradient: ternarizes to zero
            Err(_) => Matrix::zeros(g_s.rows(), g_s.cols()),
        };
        let prod = tern.at_matmul(a);
        for (o, p) in acc.data_mut().iter_mut().zip(prod.data()) {
            *o += p;
        }
    }
    for o in acc.data_mut() {
        *o /= samples as f64;
    }
    Ok(acc)
}

/// Pearson correlation over flattened entries.
pub fn pearson_correlation(a: &Matrix, b: &Matrix) -> f64 {
    let n = a.data().len() as f64;
    let ma = a.data().iter().sum::<f64>() / n;
    let mb = b.data().iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (&x, &y) in a.data().iter().zip(b.data()) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return 0.0;
    }
    cov / (va * vb).sqrt()
}

type TensorSnapshot = (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<Vec<f64>>);

/// Full training run; single-task execution, reproducible from the seed.
pub fn train(cfg: &TrainConfig) -> Result<TrainingReport> {
    cfg.validate()?;
    let dataset = generate(&cfg.dataset, &mut RngState::from_master(cfg.seed, STREAM_DATA))?;
    let mut net = Mlp::new(cfg.net.clone(), &mut RngState::from_master(cfg.seed, STREAM_INIT))?;
    let mut shuffle_rng = RngState::from_master(cfg.seed, STREAM_SHUFFLE);
    let mut grad_rng = RngState::from_master(cfg.seed, STREAM_GRAD);

    let n_points = dataset.xs.rows();
    let mut order: Vec<usize> = (0..n_points).collect();
    let mut trace = AngleTrace::new(net.layer_count());
    let mut loss_curve = Vec::with_capacity(cfg.epochs);
    let mut step = 0usize;
    let mut final_loss = f64::NAN;
    // activations, low-precision layer gradients, weight gradients
    let mut last_step_tensors: Option<TensorSnapshot> = None;

    for _epoch in 0..cfg.epochs {
        use rand::seq::SliceRandom;
        order.shuffle(shuffle_rng.raw());
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            if chunk.len() < 2 {
                continue; // batch norm needs at least two examples
            }
            let mut xb = Matrix::zeros(chunk.len(), 2);
            let mut yb = Vec::with_capacity(chunk.len());
            for (row, &idx) in chunk.iter().enumerate() {
                xb.set(row, 0, dataset.xs.get(idx, 0));
                xb.set(row, 1, dataset.xs.get(idx, 1));
                yb.push(dataset.labels[idx]);
            }
            let (logits, caches) = net.forward(&xb, &cfg.quant).map_err(|e| match e {
                Error::TrainAbort(m) => Error::TrainAbort(format!("step {step}: {m}")),
                other => other,
            })?;
            let (loss, lgrad) = Mlp::loss_and_grad(&logits, &yb)?;
            if !loss.is_finite() {
                return Err(Error::TrainAbort(format!(
                    "non-finite loss at step {step}; reduce the learning rate"
                )));
            }
            let back = net
                .backward(&caches, &lgrad, &cfg.quant, Some(&mut grad_rng), step)
                .map_err(|e| match e {
                    Error::TrainAbort(m) => Error::TrainAbort(format!("step {step}: {m}")),
                    other => other,
                })?;
            let record = cfg.record_every > 0 && step.is_multiple_of(cfg.record_every);
            if record {
                for (l, a) in back.angles.iter().enumerate() {
                    trace.record(l, *a);
                }
            }
            // keep the latest tensors for the histogram snapshot
            let acts: Vec<Vec<f64>> = caches.iter().map(|c| c.input.data().to_vec()).collect();
            let gws: Vec<Vec<f64>> = back.grad_w.iter().map(|g| g.data().to_vec()).collect();
            last_step_tensors = Some((acts, back.layer_grads_low.clone(), gws));
            net.apply_updates(&back, cfg.learning_rate, cfg.momentum);
            epoch_loss += loss;
            batches += 1;
            final_loss = loss;
            step += 1;
        }
        loss_curve.push(epoch_loss / batches.max(1) as f64);
    }

    let mut histograms = Vec::new();
    if let Some((acts, gls, gws)) = last_step_tensors {
        for (l, a) in acts.iter().enumerate() {
            histograms.push(Histogram::from_values(
                format!("activation_in_l{l}"),
                a,
                cfg.histogram_bins,
            ));
        }
        for (l, g) in gls.iter().enumerate() {
            histograms.push(Histogram::from_values(
                format!("layer_grad_l{l}"),
                g,
                cfg.histogram_bins,
            ));
        }
        for (l, g) in gws.iter().enumerate() {
            histograms.push(Histogram::from_values(
                format!("weight_grad_l{l}"),
                g,
                cfg.histogram_bins,
            ));
        }
    }

    let final_train_accuracy = net
        .accuracy(&dataset.xs, &dataset.labels, &cfg.quant)
        .map_err(|e| match e {
            Error::TrainAbort(m) => {
                Error::TrainAbort(format!("final evaluation after step {step}: {m}"))
            }
            other => other,
        })?;
    Ok(TrainingReport {
        final_train_accuracy,
        final_loss,
        loss_curve,
        mean_backward_cos: trace.mean_backward_cos(),
        mean_weight_cos: trace.mean_weight_cos(),
        angle_trace: trace,
        histograms,
        steps_run: step,
    })
}
