//! Quantization geometry toolkit.
//!
//! Measures how well quantization preserves the direction of high-dimensional
//! Gaussian vectors: binary/ternary/uniform/affine quantizers, closed-form
//! lower bounds on the expected cosine similarity, range batch-normalization,
//! seeded Monte-Carlo sweeps that overlay empirical curves on the theory, and
//! a small quantized back-propagation trainer with gradient bifurcation.

pub mod bounds;
pub mod config;
pub mod error;
pub mod geometry;
pub mod manifest;
pub mod montecarlo;
pub mod quantize;
pub mod range_bn;
pub mod rng;
pub mod stats;
pub mod train;

pub use error::{Error, Result};
