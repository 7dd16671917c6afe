//! Distribution of the certified radius when the smoothed classifier's
//! top-class probability is known.

use serde::{Deserialize, Serialize};

use crate::bounds::{
    binomial_pmf, certified_radius, lower_conf_bound, BinomialObservation, ConfidenceLevel,
};
use crate::error::{invalid, Result};

/// Radius certified for each success count `0..=n`; `None` means abstain.
#[derive(Debug, Clone, PartialEq)]
pub struct RadiusTable {
    n: u64,
    sigma: f64,
    radii: Vec<Option<f64>>,
}

impl RadiusTable {
    pub fn new(n: u64, alpha: f64, sigma: f64) -> Result<Self> {
        if n == 0 {
            return Err(invalid("sample count must be ≥ 1"));
        }
        let conf = ConfidenceLevel::from_significance(alpha)?;
        let mut radii = Vec::with_capacity(n as usize + 1);
        for k in 0..=n {
            let p = lower_conf_bound(BinomialObservation::new(k, n)?, conf)?;
            radii.push(if p > 0.5 {
                Some(certified_radius(p, sigma)?)
            } else {
                None
            });
        }
        Ok(Self { n, sigma, radii })
    }

    pub fn trials(&self) -> u64 {
        self.n
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn radius(&self, successes: u64) -> Option<f64> {
        self.radii[successes as usize]
    }

    /// Distribution of the radius when each draw succeeds with `p1`.
    pub fn distribution(&self, p1: f64) -> Result<RadiusDistribution> {
        let mut outcomes = Vec::with_capacity(self.radii.len());
        let (mut abstain, mut expected) = (0.0, 0.0);
        for (k, radius) in self.radii.iter().enumerate() {
            let mass = binomial_pmf(k as u64, self.n, p1)?;
            match radius {
                Some(r) => expected += mass * r,
                None => abstain += mass,
            }
            outcomes.push(RadiusOutcome {
                successes: k as u64,
                mass,
                radius: *radius,
            });
        }
        Ok(RadiusDistribution {
            outcomes,
            abstain_mass: abstain,
            expected_radius: expected,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusOutcome {
    pub successes: u64,
    pub mass: f64,
    pub radius: Option<f64>,
}

/// Point masses per success count, total abstain mass, and `E[R]` with
/// abstentions counted as radius zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusDistribution {
    pub outcomes: Vec<RadiusOutcome>,
    pub abstain_mass: f64,
    pub expected_radius: f64,
}

pub fn radius_distribution(p1: f64, n: u64, alpha: f64, sigma: f64) -> Result<RadiusDistribution> {
    RadiusTable::new(n, alpha, sigma)?.distribution(p1)
}
