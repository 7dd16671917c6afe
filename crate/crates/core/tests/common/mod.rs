//! Reference computations that do not go through the library's own
//! numerical routines.

#![allow(dead_code)]

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use statrs::distribution::{Beta, ContinuousCDF, Normal};

use ensmooth::classifiers::{NoiseSource, StreamKey};
use ensmooth::theory::GaussianLogitModel;

/// Clopper-Pearson lower limit from statrs' inverse regularized beta.
pub fn cp_lower(k: u64, n: u64, alpha: f64) -> f64 {
    if k == 0 {
        return 0.0;
    }
    Beta::new(k as f64, (n - k + 1) as f64)
        .unwrap()
        .inverse_cdf(alpha)
}

/// Clopper-Pearson upper limit from statrs' inverse regularized beta.
pub fn cp_upper(k: u64, n: u64, alpha: f64) -> f64 {
    if k == n {
        return 1.0;
    }
    Beta::new((k + 1) as f64, (n - k) as f64)
        .unwrap()
        .inverse_cdf(1.0 - alpha)
}

pub fn normal_quantile(p: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().inverse_cdf(p)
}

pub fn normal_cdf(z: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().cdf(z)
}

/// Binomial pmf as a plain product of powers.
pub fn binomial_pmf_direct(k: u64, n: u64, p: f64) -> f64 {
    let mut choose = 1.0;
    for i in 0..k {
        choose *= (n - i) as f64 / (i + 1) as f64;
    }
    choose * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32)
}

/// Random symmetric PSD matrix `A Aᵀ` (possibly rank deficient) from a flat
/// list of entries in `[-1, 1]`.
pub fn psd_from_entries(m: usize, rank: usize, entries: &[f64]) -> DMatrix<f64> {
    let a = DMatrix::from_fn(m, rank, |i, j| entries[(i * rank + j) % entries.len()]);
    let s = &a * a.transpose();
    (&s + s.transpose()) * 0.5
}

/// Sample covariance of simulated ensemble margins together with the
/// standard error of each entry. Member logits are drawn jointly from the
/// explicit `mk`-dimensional block covariance; the margins are formed by
/// averaging each member's `y_0 − y_i`.
pub struct SimulatedMargins {
    pub covariance: DMatrix<f64>,
    pub std_error: DMatrix<f64>,
}

pub fn simulate_margin_covariance(
    model: &GaussianLogitModel,
    k: usize,
    draws: u64,
    seed: u64,
) -> SimulatedMargins {
    let m = model.classes();
    let dim = m * k;
    let mut joint = DMatrix::zeros(dim, dim);
    for a in 0..k {
        for b in 0..k {
            for i in 0..m {
                for j in 0..m {
                    let (p, c) = (model.sigma_p()[(i, j)], model.sigma_c()[(i, j)]);
                    joint[(a * m + i, b * m + j)] = if a == b {
                        p + c
                    } else {
                        model.zeta_p() * p + model.zeta_c() * c
                    };
                }
            }
        }
    }
    let eig = SymmetricEigen::new(joint);
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let factor = &eig.eigenvectors * DMatrix::from_diagonal(&roots);

    let noise = NoiseSource::new(seed, 1.0).unwrap();
    let d = m - 1;
    const CHUNK: u64 = 16_384;
    let chunks = draws.div_ceil(CHUNK);
    // Raw second and fourth moments per entry; the margins have zero mean.
    let (second, fourth) = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let len = CHUNK.min(draws - chunk * CHUNK);
            let mut stream = noise.stream(StreamKey::new(chunk, 7), 0, dim);
            let mut u = vec![0.0; dim];
            let mut y = vec![0.0; dim];
            let mut z = vec![0.0; d];
            let mut acc2 = DMatrix::<f64>::zeros(d, d);
            let mut acc4 = DMatrix::<f64>::zeros(d, d);
            for _ in 0..len {
                stream.next_into(&mut u);
                for (r, yr) in y.iter_mut().enumerate() {
                    *yr = (0..dim).map(|c| factor[(r, c)] * u[c]).sum();
                }
                for (i, zi) in z.iter_mut().enumerate() {
                    *zi = (0..k).map(|l| y[l * m] - y[l * m + i + 1]).sum::<f64>() / k as f64;
                }
                for i in 0..d {
                    for j in 0..d {
                        let v = z[i] * z[j];
                        acc2[(i, j)] += v;
                        acc4[(i, j)] += v * v;
                    }
                }
            }
            (acc2, acc4)
        })
        .reduce(
            || (DMatrix::zeros(d, d), DMatrix::zeros(d, d)),
            |a, b| (a.0 + b.0, a.1 + b.1),
        );
    let n = draws as f64;
    let covariance = second / n;
    let spread = fourth / n - covariance.map(|c| c * c);
    let std_error = spread.map(|v| (v.max(0.0) / n).sqrt());
    SimulatedMargins {
        covariance,
        std_error,
    }
}
