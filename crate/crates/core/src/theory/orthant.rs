//! Monte Carlo estimate of the orthant probability `P(z̄ > 0)`.

use nalgebra::{Cholesky, DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{psd_factor, MarginStatistics};
use crate::classifiers::{NoiseSource, StreamKey};
use crate::error::{invalid, Result};

const CHUNK: u64 = 8192;

/// Estimated probability with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuccessEstimate {
    pub probability: f64,
    pub std_error: f64,
    pub draws: u64,
}

impl SuccessEstimate {
    fn from_hits(hits: u64, draws: u64) -> Self {
        let p = hits as f64 / draws as f64;
        Self {
            probability: p,
            std_error: (p * (1.0 - p) / draws as f64).sqrt(),
            draws,
        }
    }
}

// Counts draws for which every coordinate of `sample(normals)` is positive.
// Draw `t` reads its normals from chunk `t / CHUNK` of the seeded stream, so
// the count is independent of the thread layout.
fn count_positive<F>(n_mc: u64, seed: u64, width: usize, sample: F) -> u64
where
    F: Fn(&[f64]) -> bool + Sync,
{
    let noise = NoiseSource::new(seed, 1.0).expect("unit noise is valid");
    let chunks = n_mc.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let len = CHUNK.min(n_mc - chunk * CHUNK);
            let mut stream = noise.stream(StreamKey::new(chunk, 0), 0, width);
            let mut buf = vec![0.0; width];
            let mut hits = 0u64;
            for _ in 0..len {
                stream.next_into(&mut buf);
                if sample(&buf) {
                    hits += 1;
                }
            }
            hits
        })
        .sum()
}

fn all_positive(mean: &DVector<f64>, factors: &[(&DMatrix<f64>, &[f64])]) -> bool {
    (0..mean.len()).all(|i| {
        let mut z = mean[i];
        for (a, u) in factors {
            for (j, uj) in u.iter().enumerate() {
                z += a[(i, j)] * uj;
            }
        }
        z > 0.0
    })
}

/// `P(z̄_i > 0 ∀i)` for `z̄ ~ N(mean, covariance)`, from `n_mc` draws.
pub fn success_probability_mc(
    stats: &MarginStatistics,
    n_mc: u64,
    seed: u64,
) -> Result<SuccessEstimate> {
    if n_mc == 0 {
        return Err(invalid("Monte Carlo draw count must be ≥ 1"));
    }
    let a = psd_factor(&stats.covariance, "margin covariance")?;
    let d = stats.mean.len();
    let hits = count_positive(n_mc, seed, d, |u| all_positive(&stats.mean, &[(&a, u)]));
    Ok(SuccessEstimate::from_hits(hits, n_mc))
}

/// Same probability for the covariance `r_p·C_p + r_c·C_c`, where `C_p`
/// and `C_c` are the single-member perturbation and clean margin
/// covariances. Draws are `mean + F w` with `F` the Cholesky factor (a
/// spectral factor if singular) and `w` read from the seeded stream, so
/// reusing `seed` across ensemble sizes gives common random numbers: the
/// estimate varies continuously with the ratios, and monotonically when the
/// covariance shrinks by a scalar factor.
pub fn success_probability_components(
    mean: &DVector<f64>,
    cov_p: &DMatrix<f64>,
    cov_c: &DMatrix<f64>,
    ratio_p: f64,
    ratio_c: f64,
    n_mc: u64,
    seed: u64,
) -> Result<SuccessEstimate> {
    if n_mc == 0 {
        return Err(invalid("Monte Carlo draw count must be ≥ 1"));
    }
    if !(ratio_p >= 0.0 && ratio_c >= 0.0) {
        return Err(invalid("variance ratios must be ≥ 0"));
    }
    let cov = cov_p * ratio_p + cov_c * ratio_c;
    let factor = match Cholesky::new(cov.clone()) {
        Some(ch) => ch.unpack(),
        None => psd_factor(&cov, "margin covariance")?,
    };
    let hits = count_positive(n_mc, seed, mean.len(), |w| {
        all_positive(mean, &[(&factor, w)])
    });
    Ok(SuccessEstimate::from_hits(hits, n_mc))
}
