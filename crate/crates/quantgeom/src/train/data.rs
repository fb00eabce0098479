//! Synthetic 2-D classification datasets: Gaussian blobs on a circle and
//! concentric rings. No external data.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngState;
use crate::train::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DatasetKind {
    Blobs,
    Rings,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub kind: DatasetKind,
    pub points: usize,
    pub classes: usize,
    pub noise: f64,
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::Domain("need at least 2 classes".into()));
        }
        if self.points < self.classes * 2 {
            return Err(Error::Domain("need at least 2 points per class".into()));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(Error::Domain(format!("noise must be >= 0, got {}", self.noise)));
        }
        Ok(())
    }
}

pub struct Dataset {
    /// points x 2 features
    pub xs: Matrix,
    pub labels: Vec<usize>,
    pub classes: usize,
}

pub fn generate(cfg: &DatasetConfig, rng: &mut RngState) -> Result<Dataset> {
    cfg.validate()?;
    let mut xs = Matrix::zeros(cfg.points, 2);
    let mut labels = Vec::with_capacity(cfg.points);
    for i in 0..cfg.points {
        let class = i % cfg.classes;
        let (x, y) = match cfg.kind {
            DatasetKind::Blobs => {
                let angle = std::f64::consts::TAU * class as f64 / cfg.classes as f64;
                (
                    2.0 * angle.cos() + cfg.noise * rng.standard_normal(),
                    2.0 * angle.sin() + cfg.noise * rng.standard_normal(),
                )
            }
            DatasetKind::Rings => {
                let radius = 1.0 + 1.2 * class as f64 + cfg.noise * rng.standard_normal();
                let angle = std::f64::consts::TAU * rng.uniform();
                (radius * angle.cos(), radius * angle.sin())
            }
        };
        xs.set(i, 0, x);
        xs.set(i, 1, y);
        labels.push(class);
    }
    Ok(Dataset {
        xs,
        labels,
        classes: cfg.classes,
    })
}
