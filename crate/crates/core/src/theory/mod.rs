//! Gaussian model of ensemble logits under input noise.
//!
//! Each member's logits are `y = y_c + y_p`: a clean component with mean
//! `c` and covariance `Σ_c` (training randomness) and a zero-mean
//! perturbation component with covariance `Σ_p`. Distinct members are
//! correlated through `ζ_c Σ_c` and `ζ_p Σ_p`. Class 0 is the majority
//! class and the margins are `z̄_i = ȳ_0 − ȳ_i` for `i = 1..m−1`.

mod estimate;
mod orthant;
mod radius;
mod sweep;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub use estimate::{
    estimate_model, read_logit_samples, write_logit_samples, LogitDraw, LogitSamples, ModelEstimate,
};
pub use orthant::{success_probability_components, success_probability_mc, SuccessEstimate};
pub use radius::{radius_distribution, RadiusDistribution, RadiusOutcome, RadiusTable};
pub use sweep::{theory_sweep, write_sweep_csv, SweepConfig, SweepRow, SWEEP_HEADER};

const SYMMETRY_TOL: f64 = 1e-10;
const EIGEN_TOL: f64 = 1e-10;

/// `c`, `Σ_c`, `Σ_p`, `ζ_c`, `ζ_p` for one fixed input.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianLogitModel {
    c: DVector<f64>,
    sigma_c: DMatrix<f64>,
    sigma_p: DMatrix<f64>,
    zeta_c: f64,
    zeta_p: f64,
}

/// Plain-array form used in TOML model files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDef {
    pub c: Vec<f64>,
    pub sigma_c: Vec<Vec<f64>>,
    pub sigma_p: Vec<Vec<f64>>,
    pub zeta_c: f64,
    pub zeta_p: f64,
}

fn matrix_from_rows(rows: &[Vec<f64>], m: usize, name: &str) -> Result<DMatrix<f64>> {
    if rows.len() != m || rows.iter().any(|r| r.len() != m) {
        return Err(invalid(format!("{name} must be {m}×{m}")));
    }
    Ok(DMatrix::from_fn(m, m, |i, j| rows[i][j]))
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Eigen-decomposition of a symmetric PSD matrix; tiny negative eigenvalues
/// (≥ −1e-10 relative to the spectrum) are clipped to zero.
pub(crate) fn psd_eigen(
    m: &DMatrix<f64>,
    name: &str,
) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(invalid(format!("{name} has non-finite entries")));
    }
    let scale = m.amax().max(1.0);
    for i in 0..m.nrows() {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_TOL * scale {
                return Err(Error::NotPositiveSemidefinite(format!(
                    "{name} is not symmetric"
                )));
            }
        }
    }
    let mut eig = SymmetricEigen::new(m.clone());
    let lmax = eig.eigenvalues.amax().max(1.0);
    for l in eig.eigenvalues.iter_mut() {
        if *l < -EIGEN_TOL * lmax {
            return Err(Error::NotPositiveSemidefinite(format!(
                "{name} has eigenvalue {l:.3e}"
            )));
        }
        *l = l.max(0.0);
    }
    Ok(eig)
}

/// `A` with `A Aᵀ = M`, from the clipped spectrum.
pub(crate) fn psd_factor(m: &DMatrix<f64>, name: &str) -> Result<DMatrix<f64>> {
    let eig = psd_eigen(m, name)?;
    let roots = eig.eigenvalues.map(f64::sqrt);
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&roots))
}

impl GaussianLogitModel {
    pub fn new(
        c: Vec<f64>,
        sigma_c: DMatrix<f64>,
        sigma_p: DMatrix<f64>,
        zeta_c: f64,
        zeta_p: f64,
    ) -> Result<Self> {
        let m = c.len();
        if m < 2 {
            return Err(invalid("model needs at least 2 classes"));
        }
        if c.iter().any(|v| !v.is_finite()) {
            return Err(invalid("mean logits must be finite"));
        }
        for (name, s) in [("Σ_c", &sigma_c), ("Σ_p", &sigma_p)] {
            if s.nrows() != m || s.ncols() != m {
                return Err(invalid(format!("{name} must be {m}×{m}")));
            }
            psd_eigen(s, name)?;
        }
        for (name, z) in [("ζ_c", zeta_c), ("ζ_p", zeta_p)] {
            if !(0.0..=1.0).contains(&z) {
                return Err(invalid(format!("{name} must lie in [0,1], got {z}")));
            }
        }
        Ok(Self {
            c: DVector::from_vec(c),
            sigma_c,
            sigma_p,
            zeta_c,
            zeta_p,
        })
    }

    pub fn from_def(def: &ModelDef) -> Result<Self> {
        let m = def.c.len();
        Self::new(
            def.c.clone(),
            matrix_from_rows(&def.sigma_c, m, "sigma_c")?,
            matrix_from_rows(&def.sigma_p, m, "sigma_p")?,
            def.zeta_c,
            def.zeta_p,
        )
    }

    pub fn to_def(&self) -> ModelDef {
        ModelDef {
            c: self.c.iter().copied().collect(),
            sigma_c: matrix_rows(&self.sigma_c),
            sigma_p: matrix_rows(&self.sigma_p),
            zeta_c: self.zeta_c,
            zeta_p: self.zeta_p,
        }
    }

    pub fn load_toml(text: &str) -> Result<Self> {
        Self::from_def(&toml::from_str(text)?)
    }

    pub fn classes(&self) -> usize {
        self.c.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.c
    }

    pub fn sigma_c(&self) -> &DMatrix<f64> {
        &self.sigma_c
    }

    pub fn sigma_p(&self) -> &DMatrix<f64> {
        &self.sigma_p
    }

    pub fn zeta_c(&self) -> f64 {
        self.zeta_c
    }

    pub fn zeta_p(&self) -> f64 {
        self.zeta_p
    }

    /// Same model with classes `0` and `class` swapped.
    pub fn with_majority(&self, class: usize) -> Result<Self> {
        let m = self.classes();
        if class >= m {
            return Err(invalid(format!("class {class} out of range")));
        }
        let mut perm: Vec<usize> = (0..m).collect();
        perm.swap(0, class);
        let c = DVector::from_fn(m, |i, _| self.c[perm[i]]);
        let sc = DMatrix::from_fn(m, m, |i, j| self.sigma_c[(perm[i], perm[j])]);
        let sp = DMatrix::from_fn(m, m, |i, j| self.sigma_p[(perm[i], perm[j])]);
        Ok(Self {
            c,
            sigma_c: sc,
            sigma_p: sp,
            ..self.clone()
        })
    }

    /// Same model with the largest mean logit moved to class 0.
    pub fn with_majority_first(&self) -> Self {
        let top = crate::classifiers::argmax(self.c.as_slice());
        self.with_majority(top).expect("argmax is in range")
    }
}

/// Mean and covariance of the ensemble margins `z̄`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginStatistics {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl MarginStatistics {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 || covariance.nrows() != d || covariance.ncols() != d {
            return Err(invalid("margin mean and covariance dimensions disagree"));
        }
        psd_eigen(&covariance, "margin covariance")?;
        Ok(Self { mean, covariance })
    }

    pub fn variances(&self) -> Vec<f64> {
        self.covariance.diagonal().iter().copied().collect()
    }
}

/// Joint covariance `Σ*` of the stacked member logits `[y¹; …; yᵏ]`:
/// diagonal blocks `Σ_p + Σ_c`, off-diagonal blocks `ζ_p Σ_p + ζ_c Σ_c`.
pub fn joint_covariance(model: &GaussianLogitModel, k: usize) -> DMatrix<f64> {
    let m = model.classes();
    let same = &model.sigma_p + &model.sigma_c;
    let cross = &model.sigma_p * model.zeta_p + &model.sigma_c * model.zeta_c;
    let mut out = DMatrix::zeros(m * k, m * k);
    for a in 0..k {
        for b in 0..k {
            let block = if a == b { &same } else { &cross };
            out.view_mut((a * m, b * m), (m, m)).copy_from(block);
        }
    }
    out
}

/// `D ∈ ℝ^{(m−1)×mk}` with `z̄ = D y*`: `+1/k` on every member's class-0
/// entry, `−1/k` on its class-`i` entry in row `i−1`.
pub fn difference_matrix(m: usize, k: usize) -> DMatrix<f64> {
    let w = 1.0 / k as f64;
    let mut d = DMatrix::zeros(m - 1, m * k);
    for row in 0..m - 1 {
        let class = row + 1;
        for member in 0..k {
            d[(row, member * m)] = w;
            d[(row, member * m + class)] = -w;
        }
    }
    d
}

/// Margin statistics of a `k`-member soft-vote ensemble: mean `c_0 − c_i`,
/// covariance `D Σ* Dᵀ`.
pub fn margin_statistics(model: &GaussianLogitModel, k: usize) -> Result<MarginStatistics> {
    if k == 0 {
        return Err(invalid("ensemble size must be ≥ 1"));
    }
    let m = model.classes();
    let d = difference_matrix(m, k);
    let cov = &d * joint_covariance(model, k) * d.transpose();
    let cov = (&cov + cov.transpose()) * 0.5;
    let mean = DVector::from_fn(m - 1, |i, _| model.c[0] - model.c[i + 1]);
    MarginStatistics::new(mean, cov)
}

/// Per-margin variance from the scalar formula
/// `(k + 2·C(k,2)·ζ)/k² · (σ²_0 + σ²_i − 2ρ_{0i}σ_0σ_i)`, summed over the
/// perturbation and clean components.
pub fn margin_variances_closed_form(model: &GaussianLogitModel, k: usize) -> Vec<f64> {
    let kf = k as f64;
    let pairs = kf * (kf - 1.0) / 2.0;
    let factor = |zeta: f64| (kf + 2.0 * pairs * zeta) / (kf * kf);
    let single = |s: &DMatrix<f64>, i: usize| s[(0, 0)] + s[(i, i)] - 2.0 * s[(0, i)];
    (1..model.classes())
        .map(|i| {
            factor(model.zeta_p) * single(&model.sigma_p, i)
                + factor(model.zeta_c) * single(&model.sigma_c, i)
        })
        .collect()
}

/// Variance of an ensemble component relative to a single member,
/// `(1 + ζ(k−1))/k`.
pub fn variance_ratio(k: usize, zeta: f64) -> Result<f64> {
    if k == 0 {
        return Err(invalid("ensemble size must be ≥ 1"));
    }
    if !(0.0..=1.0).contains(&zeta) {
        return Err(invalid(format!("ζ must lie in [0,1], got {zeta}")));
    }
    Ok((1.0 + zeta * (k as f64 - 1.0)) / k as f64)
}

/// Distribution-free bound `p₁ ≥ 1 − Σ_i Var[z̄_i]/(c_0 − c_i)²`, floored
/// at zero.
pub fn chebyshev_lower_bound(stats: &MarginStatistics) -> Result<f64> {
    let mut total = 0.0;
    for (i, (mu, var)) in stats
        .mean
        .iter()
        .zip(stats.covariance.diagonal().iter())
        .enumerate()
    {
        if *mu <= 0.0 {
            return Err(Error::Precondition(format!(
                "margin {} has nonpositive mean {mu}; class 0 must have the strictly largest mean logit",
                i + 1
            )));
        }
        total += var / (mu * mu);
    }
    Ok((1.0 - total).max(0.0))
}
