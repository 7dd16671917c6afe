//! Counter-based Gaussian noise.
//!
//! Every coordinate of every perturbation is addressed by
//! `(seed, sample_id, stage_id, index, coordinate)`. The ChaCha20 key holds
//! `(seed, sample_id)`, the 64-bit stream number holds `stage_id`, and the
//! word position is `2·(index·d + coordinate)`. Any chunk of a stage can be
//! regenerated independently, so results do not depend on how draws are
//! split across workers.

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::bounds::gaussian_quantile;
use crate::error::{invalid, Result};

/// Addresses one independent stream of perturbations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StreamKey {
    pub sample_id: u64,
    pub stage_id: u32,
}

impl StreamKey {
    pub fn new(sample_id: u64, stage_id: u32) -> Self {
        Self {
            sample_id,
            stage_id,
        }
    }
}

/// Isotropic Gaussian noise `N(0, σ² I)` drawn from a keyed counter stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSource {
    seed: u64,
    sigma: f64,
}

impl NoiseSource {
    pub fn new(seed: u64, sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(invalid(format!(
                "noise level must be finite and ≥ 0, got {sigma}"
            )));
        }
        Ok(Self { seed, sigma })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Cursor positioned at perturbation `start` of the stream `key`.
    pub fn stream(&self, key: StreamKey, start: u64, dim: usize) -> PerturbationStream {
        let mut raw = [0u8; 32];
        raw[..8].copy_from_slice(&self.seed.to_le_bytes());
        raw[8..16].copy_from_slice(&key.sample_id.to_le_bytes());
        let mut rng = ChaCha20Rng::from_seed(raw);
        rng.set_stream(u64::from(key.stage_id));
        rng.set_word_pos(2 * u128::from(start) * dim as u128);
        PerturbationStream {
            rng,
            dim,
            sigma: self.sigma,
            position: start,
        }
    }

    /// Standard-normal vector addressed by the key and index, before scaling.
    pub fn standard_normals(&self, key: StreamKey, index: u64, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        let mut stream = self.stream(key, index, dim);
        stream.rng_fill(&mut out);
        out
    }
}

/// Sequential reader over one perturbation stream.
pub struct PerturbationStream {
    rng: ChaCha20Rng,
    dim: usize,
    sigma: f64,
    position: u64,
}

impl PerturbationStream {
    /// Index of the next perturbation.
    pub fn position(&self) -> u64 {
        self.position
    }

    /// Write the next perturbation into `out` (length `dim`).
    pub fn next_into(&mut self, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim);
        self.rng_fill(out);
        for v in out.iter_mut() {
            *v *= self.sigma;
        }
    }

    fn rng_fill(&mut self, out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = standard_normal(self.rng.next_u64());
        }
        self.position += 1;
    }
}

// 53-bit uniform strictly inside (0, 1), mapped through Φ⁻¹.
fn standard_normal(bits: u64) -> f64 {
    const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
    let u = ((bits >> 11) as f64 + 0.5) * SCALE;
    gaussian_quantile(u).expect("uniform lies strictly inside (0,1)")
}

/// `σ·ε` for `ε ~ N(0, I_d)`, addressed by `(sample_id, stage_id, index)`.
pub fn sample_perturbation(
    noise: &NoiseSource,
    sample_id: u64,
    stage_id: u32,
    index: u64,
    dim: usize,
) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    noise
        .stream(StreamKey::new(sample_id, stage_id), index, dim)
        .next_into(&mut out);
    out
}
