//! Ensemble-size sweeps of the logit model.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{
    chebyshev_lower_bound, difference_matrix, margin_statistics, success_probability_components,
    variance_ratio, GaussianLogitModel, RadiusTable,
};
use crate::error::{invalid, Result};

pub const SWEEP_HEADER: [&str; 7] = [
    "k",
    "var_ratio_p",
    "var_ratio_c",
    "p1",
    "p1_se",
    "chebyshev",
    "expected_radius",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub k_max: usize,
    pub n: u64,
    pub alpha: f64,
    pub sigma: f64,
    pub n_mc: u64,
    pub seed: u64,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_max == 0 {
            return Err(invalid("k_max must be ≥ 1"));
        }
        if self.n == 0 || self.n_mc == 0 {
            return Err(invalid("sample counts must be ≥ 1"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(invalid(format!(
                "alpha must lie in (0,1), got {}",
                self.alpha
            )));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(invalid(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    pub var_ratio_p: f64,
    pub var_ratio_c: f64,
    pub p1: f64,
    pub p1_se: f64,
    /// `None` when some mean margin is not positive.
    pub chebyshev: Option<f64>,
    pub expected_radius: f64,
}

/// Rows for `k = 1..=k_max`. The class with the largest mean logit is the
/// majority class. `p1` is estimated with the same random numbers for every
/// `k`, so the columns vary smoothly in `k`.
pub fn theory_sweep(model: &GaussianLogitModel, config: &SweepConfig) -> Result<Vec<SweepRow>> {
    config.validate()?;
    let model = model.with_majority_first();
    let m = model.classes();
    let d1 = difference_matrix(m, 1);
    let cov_p = &d1 * model.sigma_p() * d1.transpose();
    let cov_c = &d1 * model.sigma_c() * d1.transpose();
    let mean = margin_statistics(&model, 1)?.mean;
    let table = RadiusTable::new(config.n, config.alpha, config.sigma)?;
    (1..=config.k_max)
        .map(|k| {
            let var_ratio_p = variance_ratio(k, model.zeta_p())?;
            let var_ratio_c = variance_ratio(k, model.zeta_c())?;
            let est = success_probability_components(
                &mean,
                &cov_p,
                &cov_c,
                var_ratio_p,
                var_ratio_c,
                config.n_mc,
                config.seed,
            )?;
            let chebyshev = chebyshev_lower_bound(&margin_statistics(&model, k)?).ok();
            let expected_radius = table.distribution(est.probability)?.expected_radius;
            Ok(SweepRow {
                k,
                var_ratio_p,
                var_ratio_c,
                p1: est.probability,
                p1_se: est.std_error,
                chebyshev,
                expected_radius,
            })
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SWEEP_HEADER)?;
    for r in rows {
        w.write_record([
            r.k.to_string(),
            r.var_ratio_p.to_string(),
            r.var_ratio_c.to_string(),
            r.p1.to_string(),
            r.p1_se.to_string(),
            r.chebyshev.map_or(String::new(), |c| c.to_string()),
            r.expected_radius.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
