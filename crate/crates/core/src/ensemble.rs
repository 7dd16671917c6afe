//! Ensembles of base classifiers.
//!
//! All voting schemes are instances of `Σ_l w_l γ(f_l(x))`:
//!
//! | mode            | γ                      | w_l   |
//! |-----------------|------------------------|-------|
//! | `Soft`          | identity               | 1/k   |
//! | `Hard`          | one-hot of the argmax  | 1/k   |
//! | `SoftmaxSoft`   | softmax                | 1/k   |
//! | `WeightedSoft`  | identity               | given |
//!
//! With K-consensus, members are queried in their given order (best first);
//! if the first `K` agree on the argmax, the soft vote of those `K` is
//! returned and the remaining members are never evaluated.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::classifiers::{argmax, BaseClassifier, LogitVector, Prediction};
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationMode {
    #[default]
    Soft,
    Hard,
    SoftmaxSoft,
    WeightedSoft,
}

impl fmt::Display for AggregationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            AggregationMode::Soft => "soft",
            AggregationMode::Hard => "hard",
            AggregationMode::SoftmaxSoft => "softmax_soft",
            AggregationMode::WeightedSoft => "weighted_soft",
        };
        f.write_str(name)
    }
}

impl std::str::FromStr for AggregationMode {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "soft" => Ok(AggregationMode::Soft),
            "hard" => Ok(AggregationMode::Hard),
            "softmax_soft" | "softmax" => Ok(AggregationMode::SoftmaxSoft),
            "weighted_soft" | "weighted" => Ok(AggregationMode::WeightedSoft),
            other => Err(invalid(format!("unknown aggregation mode `{other}`"))),
        }
    }
}

/// Members (ordered best first), voting mode, weights and consensus size.
#[derive(Clone)]
pub struct EnsembleConfig {
    members: Vec<Arc<dyn BaseClassifier>>,
    mode: AggregationMode,
    weights: Vec<f64>,
    consensus_k: Option<usize>,
    classes: usize,
    dim: usize,
}

impl fmt::Debug for EnsembleConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EnsembleConfig")
            .field("members", &self.members.len())
            .field("mode", &self.mode)
            .field("weights", &self.weights)
            .field("consensus_k", &self.consensus_k)
            .finish()
    }
}

impl EnsembleConfig {
    /// Uniform weights, no consensus.
    pub fn new(members: Vec<Arc<dyn BaseClassifier>>, mode: AggregationMode) -> Result<Self> {
        let Some(first) = members.first() else {
            return Err(invalid("ensemble needs at least one member"));
        };
        let classes = first.class_count();
        let dim = first.input_dim();
        for (i, m) in members.iter().enumerate() {
            if m.class_count() != classes || m.input_dim() != dim {
                return Err(invalid(format!(
                    "member {i} has {} classes / dimension {}, expected {classes} / {dim}",
                    m.class_count(),
                    m.input_dim()
                )));
            }
        }
        let k = members.len();
        Ok(Self {
            members,
            mode,
            weights: vec![1.0 / k as f64; k],
            consensus_k: None,
            classes,
            dim,
        })
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.members.len() {
            return Err(invalid(format!(
                "{} weights for {} members",
                weights.len(),
                self.members.len()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(invalid("weights must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(invalid(format!("weights must sum to 1, got {total}")));
        }
        self.weights = weights;
        Ok(self)
    }

    pub fn with_consensus(mut self, k: usize) -> Result<Self> {
        if k == 0 || k > self.members.len() {
            return Err(invalid(format!(
                "consensus size {k} must lie in [1, {}]",
                self.members.len()
            )));
        }
        self.consensus_k = Some(k);
        Ok(self)
    }

    pub fn members(&self) -> &[Arc<dyn BaseClassifier>] {
        &self.members
    }

    pub fn mode(&self) -> AggregationMode {
        self.mode
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn consensus_k(&self) -> Option<usize> {
        self.consensus_k
    }

    fn combine(&self, member_logits: &[LogitVector]) -> Result<LogitVector> {
        let k = member_logits.len();
        let mut acc = vec![0.0; self.classes];
        // fixed member order keeps the floating-point sum reproducible
        for (l, logits) in member_logits.iter().enumerate() {
            let values = logits.values();
            match self.mode {
                AggregationMode::Soft => {
                    for (a, v) in acc.iter_mut().zip(values) {
                        *a += v;
                    }
                }
                AggregationMode::Hard => acc[argmax(values)] += 1.0,
                AggregationMode::SoftmaxSoft => {
                    for (a, v) in acc.iter_mut().zip(softmax(values)) {
                        *a += v;
                    }
                }
                AggregationMode::WeightedSoft => {
                    let w = self.weights[l];
                    for (a, v) in acc.iter_mut().zip(values) {
                        *a += w * v;
                    }
                }
            }
        }
        if self.mode != AggregationMode::WeightedSoft {
            for a in &mut acc {
                *a /= k as f64;
            }
        }
        LogitVector::new(acc)
    }
}

fn soft_mean(member_logits: &[LogitVector]) -> Result<LogitVector> {
    let classes = member_logits[0].class_count();
    let mut acc = vec![0.0; classes];
    for logits in member_logits {
        for (a, v) in acc.iter_mut().zip(logits.values()) {
            *a += v;
        }
    }
    let k = member_logits.len() as f64;
    LogitVector::new(acc.into_iter().map(|a| a / k).collect())
}

fn softmax(values: &[f64]) -> Vec<f64> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = values.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Aggregated scores and how many members were evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregationOutcome {
    pub logits: LogitVector,
    pub models_evaluated: usize,
    pub consensus_hit: bool,
}

pub fn aggregate(cfg: &EnsembleConfig, x: &[f64]) -> Result<AggregationOutcome> {
    if x.len() != cfg.dim {
        return Err(invalid(format!(
            "input has dimension {}, ensemble expects {}",
            x.len(),
            cfg.dim
        )));
    }
    let k = cfg.members.len();
    let mut evaluated = Vec::with_capacity(k);

    if let Some(kc) = cfg.consensus_k.filter(|&kc| kc < k) {
        for member in &cfg.members[..kc] {
            evaluated.push(member.logits(x)?);
        }
        let first = evaluated[0].argmax();
        if evaluated.iter().all(|l| l.argmax() == first) {
            return Ok(AggregationOutcome {
                logits: soft_mean(&evaluated)?,
                models_evaluated: kc,
                consensus_hit: true,
            });
        }
    }
    for member in &cfg.members[evaluated.len()..] {
        evaluated.push(member.logits(x)?);
    }
    Ok(AggregationOutcome {
        logits: cfg.combine(&evaluated)?,
        models_evaluated: k,
        consensus_hit: false,
    })
}

impl BaseClassifier for EnsembleConfig {
    fn class_count(&self) -> usize {
        self.classes
    }

    fn input_dim(&self) -> usize {
        self.dim
    }

    fn logits(&self, x: &[f64]) -> Result<LogitVector> {
        Ok(aggregate(self, x)?.logits)
    }

    fn member_count(&self) -> usize {
        self.members.len()
    }

    fn predict(&self, x: &[f64]) -> Result<Prediction> {
        let outcome = aggregate(self, x)?;
        Ok(Prediction {
            class: outcome.logits.argmax(),
            models_evaluated: outcome.models_evaluated as u32,
            consensus_hit: outcome.consensus_hit,
        })
    }
}
