//! Exact one-sided binomial confidence bounds and Gaussian primitives.
//!
//! Lower and upper limits are Clopper-Pearson: the lower limit for `k`
//! successes in `n` trials at confidence `1 − α` is the `α`-quantile of
//! `Beta(k, n − k + 1)`, the upper limit the `(1 − α)`-quantile of
//! `Beta(k + 1, n − k)`.

mod beta;
mod normal;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub use beta::regularized_incomplete_beta;
pub use normal::{gaussian_cdf, gaussian_pdf, gaussian_quantile};

/// Confidence `1 − α` of a one-sided bound.
///
/// Stored as the significance `α` so that tiny significances (such as
/// `β / (s − 1)` for a long schedule) keep full precision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceLevel {
    significance: f64,
}

impl ConfidenceLevel {
    /// From a confidence value in (0, 1).
    pub fn new(confidence: f64) -> Result<Self> {
        if !(confidence > 0.0 && confidence < 1.0) {
            return Err(invalid(format!(
                "confidence must lie in (0,1), got {confidence}"
            )));
        }
        Ok(Self {
            significance: 1.0 - confidence,
        })
    }

    /// From a significance `α` in (0, 1); the confidence is `1 − α`.
    pub fn from_significance(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(invalid(format!(
                "significance must lie in (0,1), got {alpha}"
            )));
        }
        Ok(Self {
            significance: alpha,
        })
    }

    pub fn value(&self) -> f64 {
        1.0 - self.significance
    }

    pub fn significance(&self) -> f64 {
        self.significance
    }
}

/// `successes` out of `trials` Bernoulli draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinomialObservation {
    successes: u64,
    trials: u64,
}

impl BinomialObservation {
    pub fn new(successes: u64, trials: u64) -> Result<Self> {
        if trials == 0 {
            return Err(invalid("binomial observation needs at least one trial"));
        }
        if successes > trials {
            return Err(invalid(format!(
                "successes ({successes}) exceed trials ({trials})"
            )));
        }
        Ok(Self { successes, trials })
    }

    pub fn successes(&self) -> u64 {
        self.successes
    }

    pub fn trials(&self) -> u64 {
        self.trials
    }

    pub fn proportion(&self) -> f64 {
        self.successes as f64 / self.trials as f64
    }
}

/// One-sided Clopper-Pearson lower limit.
pub fn lower_conf_bound(obs: BinomialObservation, conf: ConfidenceLevel) -> Result<f64> {
    let k = obs.successes as f64;
    let n = obs.trials as f64;
    let alpha = conf.significance;
    if obs.successes == 0 {
        return Ok(0.0);
    }
    if obs.successes == obs.trials {
        // I_p(n, 1) = p^n
        return Ok((alpha.ln() / n).exp());
    }
    beta::beta_quantile(k, n - k + 1.0, alpha, true)
}

/// One-sided Clopper-Pearson upper limit.
pub fn upper_conf_bound(obs: BinomialObservation, conf: ConfidenceLevel) -> Result<f64> {
    let k = obs.successes as f64;
    let n = obs.trials as f64;
    let alpha = conf.significance;
    if obs.successes == obs.trials {
        return Ok(1.0);
    }
    if obs.successes == 0 {
        // 1 − I_p(1, n) = (1 − p)^n
        return Ok(-(alpha.ln() / n).exp_m1());
    }
    beta::beta_quantile(k + 1.0, n - k, alpha, false)
}

/// `σ·Φ⁻¹(p_lower)`; negative below one half, where nothing is certified.
pub fn certified_radius(p_lower: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(invalid(format!(
            "noise level must be positive, got {sigma}"
        )));
    }
    Ok(sigma * gaussian_quantile(p_lower)?)
}

/// Exact binomial probability of `successes` in `trials` draws.
pub fn binomial_pmf(successes: u64, trials: u64, p: f64) -> Result<f64> {
    if successes > trials {
        return Err(invalid(format!(
            "successes ({successes}) exceed trials ({trials})"
        )));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!(
            "binomial probability {p} outside [0,1]"
        )));
    }
    if trials <= EXACT_CHOOSE_MAX_TRIALS {
        let q = 1.0 - p;
        let choose = (0..successes).fold(1u64, |c, i| c * (trials - i) / (i + 1));
        return Ok(choose as f64 * p.powf(successes as f64) * q.powf((trials - successes) as f64));
    }
    Ok(beta::binomial_density_raw(
        successes as f64,
        trials as f64,
        p,
        1.0 - p,
    ))
}

// Up to here C(n, k) is an exact integer in f64 and the direct product is at
// least as accurate as the saddle-point form.
const EXACT_CHOOSE_MAX_TRIALS: u64 = 50;

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(k: u64, n: u64) -> BinomialObservation {
        BinomialObservation::new(k, n).unwrap()
    }

    fn sig(a: f64) -> ConfidenceLevel {
        ConfidenceLevel::from_significance(a).unwrap()
    }

    const PHI_1: f64 = 0.841_344_746_068_542_9;

    #[test]
    fn zero_successes_lower_is_zero() {
        assert_eq!(lower_conf_bound(obs(0, 1000), sig(0.001)).unwrap(), 0.0);
    }

    #[test]
    fn all_successes_upper_is_one() {
        assert_eq!(upper_conf_bound(obs(1000, 1000), sig(0.001)).unwrap(), 1.0);
    }

    #[test]
    fn all_success_closed_form() {
        // mpmath: 0.001^(1/100000)
        let v = lower_conf_bound(obs(100_000, 100_000), sig(0.001)).unwrap();
        assert!((v - 0.999_930_924_833_009_4).abs() < 1e-12);
        let u = upper_conf_bound(obs(0, 100_000), sig(0.001)).unwrap();
        assert!((u - 6.907_516_699_060_703e-5).abs() < 1e-15);
    }

    #[test]
    fn stage_one_thresholds_of_three_stage_schedule() {
        let certify_conf = sig(0.001 / 3.0);
        assert!(lower_conf_bound(obs(880, 1000), certify_conf).unwrap() >= PHI_1);
        assert!(lower_conf_bound(obs(879, 1000), certify_conf).unwrap() < PHI_1);

        let abort_conf = sig(0.0001 / 2.0);
        assert!(upper_conf_bound(obs(794, 1000), abort_conf).unwrap() < PHI_1);
        assert!(upper_conf_bound(obs(795, 1000), abort_conf).unwrap() >= PHI_1);
    }

    #[test]
    fn observation_validation() {
        assert!(BinomialObservation::new(0, 0).is_err());
        assert!(BinomialObservation::new(5, 4).is_err());
        assert!(ConfidenceLevel::new(1.0).is_err());
        assert!(ConfidenceLevel::new(0.0).is_err());
        assert!(ConfidenceLevel::from_significance(-0.1).is_err());
        assert!((ConfidenceLevel::new(0.999).unwrap().significance() - 0.001).abs() < 1e-15);
    }

    #[test]
    fn radius_examples() {
        assert_eq!(certified_radius(0.5, 0.25).unwrap(), 0.0);
        // 0.5·Φ⁻¹(0.001^(1/1e5)), mpmath
        let r = certified_radius(0.999_930_924_833_009_4, 0.5).unwrap();
        assert!((r - 1.905_728_281_694_976).abs() < 1e-8);
        assert!((certified_radius(PHI_1, 0.25).unwrap() - 0.25).abs() < 1e-12);
        assert!(certified_radius(0.3, 0.25).unwrap() < 0.0);
        assert!(certified_radius(0.9, 0.0).is_err());
    }

    #[test]
    fn pmf_examples() {
        assert_eq!(binomial_pmf(0, 17, 0.0).unwrap(), 1.0);
        assert!((binomial_pmf(1, 2, 0.5).unwrap() - 0.5).abs() < 1e-15);
        assert!((binomial_pmf(3, 10, 0.3).unwrap() - 0.266_827_932).abs() < 1e-14);
        assert!(binomial_pmf(11, 10, 0.3).is_err());
        assert!(binomial_pmf(1, 10, 1.3).is_err());
    }

    #[test]
    fn pmf_sums_to_one_for_large_n() {
        for (n, p) in [(100_000_u64, 0.99), (100_000, 0.5), (1000, 0.013), (1, 0.4)] {
            let total: f64 = (0..=n).map(|k| binomial_pmf(k, n, p).unwrap()).sum();
            assert!((total - 1.0).abs() < 1e-9, "n={n} p={p}: {total}");
        }
    }
}
