//! Deterministic random-number state used by every stochastic operation.
//!
//! Built on ChaCha8, a counter-mode stream cipher: a master seed is expanded
//! into a 256-bit key with SplitMix64, and independent substreams are selected
//! by a 64-bit stream index. Callers parallelize by handing each task its own
//! `(master_seed, stream)` pair; there is no shared mutable state.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 step, used only to expand seeds into keys.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seeded, counter-addressable generator.
///
/// Gaussian draws use the basic Box-Muller transform: with u1 in (0, 1] and
/// u2 in [0, 1), the pair `r*cos(2*pi*u2)`, `r*sin(2*pi*u2)` with
/// `r = sqrt(-2 ln u1)` gives two independent standard normals. The second
/// value of each pair is cached and returned by the next call.
#[derive(Debug, Clone)]
pub struct RngState {
    rng: ChaCha8Rng,
    spare_normal: Option<f64>,
}

impl RngState {
    /// Derive a generator from a master seed and a stream index.
    ///
    /// Identical `(master_seed, stream)` pairs always yield identical draws;
    /// distinct stream indices yield independent substreams of the same key.
    pub fn from_master(master_seed: u64, stream: u64) -> Self {
        let mut s = master_seed;
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut s).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(stream);
        RngState {
            rng,
            spare_normal: None,
        }
    }

    /// Uniform draw in [0, 1) with 53-bit resolution.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Bernoulli draw: true with probability `p` (clamped to [0, 1]).
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// One standard-normal draw via Box-Muller (see type docs).
    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        // u1 in (0,1] keeps ln(u1) finite.
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    pub fn fill_standard_normal(&mut self, out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = self.standard_normal();
        }
    }

    /// Access the raw generator (batch shuffling, integer draws).
    pub fn raw(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}
