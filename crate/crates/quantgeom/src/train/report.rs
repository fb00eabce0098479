//! Training instrumentation: per-layer gradient/weight direction traces,
//! tensor histograms, and the serialized training report.

use serde::Serialize;

/// Direction preservation measured at one recorded step for one layer.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct StepAngles {
    pub step: usize,
    /// cos(master weights, quantized weights) used in the forward pass.
    pub weight_cos: f64,
    /// cos(low-precision layer gradient, full-precision layer gradient).
    pub layer_grad_cos: f64,
    /// cos(weight gradient as computed, full-precision weight gradient).
    pub weight_grad_cos: f64,
}

/// One trace per layer, appended at recorded steps.
#[derive(Debug, Clone, Default, Serialize)]
pub struct AngleTrace {
    pub per_layer: Vec<Vec<StepAngles>>,
}

impl AngleTrace {
    pub fn new(layers: usize) -> Self {
        AngleTrace {
            per_layer: vec![Vec::new(); layers],
        }
    }

    pub fn record(&mut self, layer: usize, angles: StepAngles) {
        self.per_layer[layer].push(angles);
    }

    /// Mean over every recorded entry of the two backward cosines.
    pub fn mean_backward_cos(&self) -> f64 {
        let mut sum = 0.0;
        let mut count = 0usize;
        for layer in &self.per_layer {
            for a in layer {
                sum += 0.5 * (a.layer_grad_cos + a.weight_grad_cos);
                count += 1;
            }
        }
        if count == 0 {
            1.0
        } else {
            sum / count as f64
        }
    }

    pub fn mean_weight_cos(&self) -> f64 {
        let mut sum = 0.0;
        let mut count = 0usize;
        for layer in &self.per_layer {
            for a in layer {
                sum += a.weight_cos;
                count += 1;
            }
        }
        if count == 0 {
            1.0
        } else {
            sum / count as f64
        }
    }
}

/// Equal-width bin counts covering the observed range of a tensor.
#[derive(Debug, Clone, Serialize)]
pub struct Histogram {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn from_values(name: impl Into<String>, values: &[f64], bins: usize) -> Self {
        let bins = bins.max(1);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in values {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if values.is_empty() {
            return Histogram {
                name: name.into(),
                lo: 0.0,
                hi: 0.0,
                counts: vec![0; bins],
            };
        }
        let width = hi - lo;
        let mut counts = vec![0u64; bins];
        for &v in values {
            let idx = if width == 0.0 {
                0
            } else {
                (((v - lo) / width) * bins as f64).min(bins as f64 - 1.0) as usize
            };
            counts[idx] += 1;
        }
        Histogram {
            name: name.into(),
            lo,
            hi,
            counts,
        }
    }

    /// CSV rows `bin_lo,bin_hi,count` (plot-ready; log-scale applied by the
    /// plotting side).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_lo,bin_hi,count\n");
        let bins = self.counts.len();
        let width = if bins == 0 { 0.0 } else { (self.hi - self.lo) / bins as f64 };
        for (i, c) in self.counts.iter().enumerate() {
            let b_lo = self.lo + width * i as f64;
            let b_hi = if i + 1 == bins { self.hi } else { self.lo + width * (i + 1) as f64 };
            out.push_str(&format!("{b_lo},{b_hi},{c}\n"));
        }
        out
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Everything a training run reports; serialized as JSON by the CLI.
#[derive(Debug, Clone, Serialize)]
pub struct TrainingReport {
    pub final_train_accuracy: f64,
    pub final_loss: f64,
    /// Mean step loss per epoch.
    pub loss_curve: Vec<f64>,
    pub angle_trace: AngleTrace,
    pub mean_backward_cos: f64,
    pub mean_weight_cos: f64,
    pub histograms: Vec<Histogram>,
    pub steps_run: usize,
}
