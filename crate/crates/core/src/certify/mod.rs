//! Monte Carlo certification of the smoothed classifier
//! `G(x) = argmax_c P(F(x + ε) = c)`, `ε ~ N(0, σ²I)`.
//!
//! [`certify`] is the fixed-budget procedure: pick the top class from `n0`
//! selection draws, bound its probability from `n` fresh draws, and report
//! `σ·Φ⁻¹(p_lower)`. [`certify_adaptive`] targets a fixed radius `r` and
//! tests it in stages of increasing size with Bonferroni-corrected
//! confidences, stopping as soon as it can certify or rule certification
//! out.
//!
//! Stream layout: the selection draws use stage id 0 and stage `i` of a
//! procedure uses stage id `i`, so no two stages share a perturbation.

mod batch;
mod population;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{
    gaussian_cdf, gaussian_quantile, lower_conf_bound, upper_conf_bound, BinomialObservation,
    ConfidenceLevel,
};
use crate::classifiers::{argmax, BaseClassifier, NoiseSource, StreamKey};
use crate::error::{invalid, Result};

pub use batch::{
    batch_certify, BatchReport, BatchSummary, CurvePoint, EngineConfig, InputResult, Procedure,
    CSV_HEADER, SCHEMA_VERSION,
};
pub use population::{read_population, write_population, LabeledInput};

const SELECTION_STAGE: u32 = 0;
const CHUNK: u64 = 1024;

/// Per-class tally of top-class predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingCounts {
    counts: Vec<u64>,
    total: u64,
    models_evaluated: u64,
    consensus_hits: u64,
    stream: StreamKey,
}

impl SamplingCounts {
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn count(&self, class: usize) -> u64 {
        self.counts[class]
    }

    /// Most frequent class; ties go to the lowest index.
    pub fn top_class(&self) -> usize {
        let as_f: Vec<f64> = self.counts.iter().map(|&c| c as f64).collect();
        argmax(&as_f)
    }

    /// Member evaluations spent (equals `total` for a single model).
    pub fn models_evaluated(&self) -> u64 {
        self.models_evaluated
    }

    /// Evaluations resolved by K-consensus.
    pub fn consensus_hits(&self) -> u64 {
        self.consensus_hits
    }

    /// Stream the draws came from; perturbations `0..total` of it were used.
    pub fn stream(&self) -> StreamKey {
        self.stream
    }

    fn merge(mut self, other: Self) -> Self {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total += other.total;
        self.models_evaluated += other.models_evaluated;
        self.consensus_hits += other.consensus_hits;
        self
    }
}

/// Classify `n` perturbed copies `x + ε_0 … x + ε_{n−1}` drawn from `stream`.
///
/// Draws are split into fixed chunks evaluated in parallel; the per-chunk
/// tallies are integer sums, so the result does not depend on the thread
/// count.
pub fn sample_under_noise(
    clf: &dyn BaseClassifier,
    x: &[f64],
    n: u64,
    noise: &NoiseSource,
    stream: StreamKey,
) -> Result<SamplingCounts> {
    if n == 0 {
        return Err(invalid("sample_under_noise needs n ≥ 1"));
    }
    let dim = clf.input_dim();
    if x.len() != dim {
        return Err(invalid(format!(
            "input has dimension {}, classifier expects {dim}",
            x.len()
        )));
    }
    let classes = clf.class_count();
    let empty = SamplingCounts {
        counts: vec![0; classes],
        total: 0,
        models_evaluated: 0,
        consensus_hits: 0,
        stream,
    };
    let chunks = n.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let start = c * CHUNK;
            let end = (start + CHUNK).min(n);
            let mut part = empty.clone();
            let mut cursor = noise.stream(stream, start, dim);
            let mut eps = vec![0.0; dim];
            let mut point = vec![0.0; dim];
            for _ in start..end {
                cursor.next_into(&mut eps);
                for ((p, xi), e) in point.iter_mut().zip(x).zip(&eps) {
                    *p = xi + e;
                }
                let pred = clf.predict(&point)?;
                part.counts[pred.class] += 1;
                part.models_evaluated += u64::from(pred.models_evaluated);
                part.consensus_hits += u64::from(pred.consensus_hit);
            }
            part.total = end - start;
            Ok(part)
        })
        .try_reduce(|| empty.clone(), |a, b| Ok(a.merge(b)))
}

/// Outcome of one certification attempt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificationResult {
    /// `None` means abstain.
    pub predicted_class: Option<usize>,
    /// Certified ℓ2 radius; 0 when abstaining.
    pub radius: f64,
    /// Last lower confidence bound computed for the selected class.
    pub p_lower: f64,
    /// Selection plus estimation draws.
    pub samples_used: u64,
    /// Member evaluations over all draws.
    pub models_evaluated: u64,
    pub consensus_hits: u64,
    /// 1-based stage that produced the result.
    pub stage_returned: Option<u32>,
    /// Streams drawn from, in order.
    #[serde(skip)]
    pub draws: Vec<StreamKey>,
}

impl CertificationResult {
    pub fn is_abstain(&self) -> bool {
        self.predicted_class.is_none()
    }
}

struct Tally {
    samples: u64,
    models: u64,
    hits: u64,
    draws: Vec<StreamKey>,
}

impl Tally {
    fn new() -> Self {
        Self {
            samples: 0,
            models: 0,
            hits: 0,
            draws: Vec::new(),
        }
    }

    fn add(&mut self, c: &SamplingCounts) {
        self.samples += c.total;
        self.models += c.models_evaluated;
        self.hits += c.consensus_hits;
        self.draws.push(c.stream);
    }

    fn finish(
        self,
        predicted_class: Option<usize>,
        radius: f64,
        p_lower: f64,
        stage: u32,
    ) -> CertificationResult {
        CertificationResult {
            predicted_class,
            radius,
            p_lower,
            samples_used: self.samples,
            models_evaluated: self.models,
            consensus_hits: self.hits,
            stage_returned: Some(stage),
            draws: self.draws,
        }
    }
}

/// Fixed-budget certification.
///
/// Selection counts only choose the class; the bound uses the `n` fresh
/// draws alone.
pub fn certify(
    clf: &dyn BaseClassifier,
    x: &[f64],
    n0: u64,
    n: u64,
    alpha: f64,
    noise: &NoiseSource,
    sample_id: u64,
) -> Result<CertificationResult> {
    if n0 == 0 || n == 0 {
        return Err(invalid("certify needs n0 ≥ 1 and n ≥ 1"));
    }
    let conf = ConfidenceLevel::from_significance(alpha)?;
    if noise.sigma() <= 0.0 {
        return Err(invalid("certification needs σ > 0"));
    }
    let mut tally = Tally::new();

    let selection = sample_under_noise(
        clf,
        x,
        n0,
        noise,
        StreamKey::new(sample_id, SELECTION_STAGE),
    )?;
    tally.add(&selection);
    let top = selection.top_class();

    let counts = sample_under_noise(clf, x, n, noise, StreamKey::new(sample_id, 1))?;
    tally.add(&counts);
    let p_lower = lower_conf_bound(BinomialObservation::new(counts.count(top), n)?, conf)?;
    if p_lower > 0.5 {
        let radius = noise.sigma() * gaussian_quantile(p_lower)?;
        Ok(tally.finish(Some(top), radius, p_lower, 1))
    } else {
        Ok(tally.finish(None, 0.0, p_lower, 1))
    }
}

/// Sizes, confidences and target of staged certification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveSchedule {
    pub n0: u64,
    pub stage_sizes: Vec<u64>,
    pub alpha: f64,
    pub beta: f64,
    pub target_radius: f64,
    pub sigma: f64,
}

impl AdaptiveSchedule {
    pub fn new(
        n0: u64,
        stage_sizes: Vec<u64>,
        alpha: f64,
        beta: f64,
        target_radius: f64,
        sigma: f64,
    ) -> Result<Self> {
        let s = Self {
            n0,
            stage_sizes,
            alpha,
            beta,
            target_radius,
            sigma,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n0 == 0 {
            return Err(invalid("n0 must be ≥ 1"));
        }
        if self.stage_sizes.is_empty() {
            return Err(invalid("schedule needs at least one stage"));
        }
        if self.stage_sizes[0] == 0 || self.stage_sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid(format!(
                "stage sizes must be positive and strictly increasing, got {:?}",
                self.stage_sizes
            )));
        }
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(invalid(format!("{name} must lie in (0,1), got {v}")));
            }
        }
        if !(self.target_radius > 0.0 && self.target_radius.is_finite()) {
            return Err(invalid(format!(
                "target radius must be positive, got {}",
                self.target_radius
            )));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(invalid(format!("σ must be positive, got {}", self.sigma)));
        }
        Ok(())
    }

    pub fn stages(&self) -> usize {
        self.stage_sizes.len()
    }

    /// Per-stage certification confidence `1 − α/s`.
    pub fn certify_confidence(&self) -> Result<ConfidenceLevel> {
        ConfidenceLevel::from_significance(self.alpha / self.stages() as f64)
    }

    /// Per-stage abort confidence `1 − β/(s−1)`; `None` for a single stage.
    pub fn abort_confidence(&self) -> Result<Option<ConfidenceLevel>> {
        let s = self.stages();
        if s < 2 {
            return Ok(None);
        }
        ConfidenceLevel::from_significance(self.beta / (s - 1) as f64).map(Some)
    }

    /// `Φ(r/σ)`, the success probability needed to certify radius `r`.
    pub fn required_probability(&self) -> f64 {
        gaussian_cdf(self.target_radius / self.sigma)
    }
}

// σ·Φ⁻¹(p) ≥ r, with the endpoints of [0, 1] handled explicitly.
fn reaches_radius(p: f64, sigma: f64, r: f64) -> bool {
    if p <= 0.0 {
        false
    } else if p >= 1.0 {
        true
    } else {
        sigma * crate::bounds::gaussian_quantile(p).expect("p inside (0,1)") >= r
    }
}

/// Staged certification at a fixed radius.
///
/// At stage `i` the `n_i` fresh draws certify when `σΦ⁻¹(p_lower) ≥ r` at
/// confidence `1 − α/s`, and abort when `σΦ⁻¹(p_upper) < r` at confidence
/// `1 − β/(s−1)`. The abort test is skipped at the last stage, where
/// aborting and falling through both abstain.
pub fn certify_adaptive(
    clf: &dyn BaseClassifier,
    x: &[f64],
    schedule: &AdaptiveSchedule,
    noise: &NoiseSource,
    sample_id: u64,
) -> Result<CertificationResult> {
    schedule.validate()?;
    if (noise.sigma() - schedule.sigma).abs() > 0.0 {
        return Err(invalid(format!(
            "noise σ = {} differs from schedule σ = {}",
            noise.sigma(),
            schedule.sigma
        )));
    }
    let s = schedule.stages();
    let certify_conf = schedule.certify_confidence()?;
    let abort_conf = schedule.abort_confidence()?;
    let (sigma, r) = (schedule.sigma, schedule.target_radius);
    let mut tally = Tally::new();

    let selection = sample_under_noise(
        clf,
        x,
        schedule.n0,
        noise,
        StreamKey::new(sample_id, SELECTION_STAGE),
    )?;
    tally.add(&selection);
    let top = selection.top_class();

    let mut p_lower = 0.0;
    for (i, &n_i) in schedule.stage_sizes.iter().enumerate() {
        let stage = (i + 1) as u32;
        let counts = sample_under_noise(clf, x, n_i, noise, StreamKey::new(sample_id, stage))?;
        tally.add(&counts);
        let obs = BinomialObservation::new(counts.count(top), n_i)?;

        p_lower = lower_conf_bound(obs, certify_conf)?;
        if reaches_radius(p_lower, sigma, r) {
            return Ok(tally.finish(Some(top), r, p_lower, stage));
        }
        if i + 1 < s {
            let conf = abort_conf.expect("s ≥ 2 here");
            let p_upper = upper_conf_bound(obs, conf)?;
            if !reaches_radius(p_upper, sigma, r) {
                return Ok(tally.finish(None, 0.0, p_lower, stage));
            }
        }
    }
    Ok(tally.finish(None, 0.0, p_lower, s as u32))
}

/// Integer decision boundaries of one adaptive stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageThreshold {
    pub stage: u32,
    pub size: u64,
    /// Smallest count that certifies; `None` if no count can.
    pub certify_count: Option<u64>,
    /// Counts strictly below this abort; `None` at the last stage.
    pub abort_count: Option<u64>,
}

// Smallest c in 0..=n with pred(c); pred must be monotone in c.
fn first_count(n: u64, pred: impl Fn(u64) -> Result<bool>) -> Result<Option<u64>> {
    if !pred(n)? {
        return Ok(None);
    }
    let (mut lo, mut hi) = (0u64, n);
    if pred(0)? {
        return Ok(Some(0));
    }
    // pred(lo) false, pred(hi) true
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if pred(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(hi))
}

/// Tabulate, for every stage, the counts of the selected class that
/// certify or abort.
pub fn stage_thresholds(schedule: &AdaptiveSchedule) -> Result<Vec<StageThreshold>> {
    schedule.validate()?;
    let s = schedule.stages();
    let certify_conf = schedule.certify_confidence()?;
    let abort_conf = schedule.abort_confidence()?;
    let (sigma, r) = (schedule.sigma, schedule.target_radius);

    schedule
        .stage_sizes
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let certify_count = first_count(n, |c| {
                let p = lower_conf_bound(BinomialObservation::new(c, n)?, certify_conf)?;
                Ok(reaches_radius(p, sigma, r))
            })?;
            let abort_count = match abort_conf {
                Some(conf) if i + 1 < s => first_count(n, |c| {
                    let p = upper_conf_bound(BinomialObservation::new(c, n)?, conf)?;
                    Ok(reaches_radius(p, sigma, r))
                })?,
                _ => None,
            };
            Ok(StageThreshold {
                stage: (i + 1) as u32,
                size: n,
                certify_count,
                abort_count,
            })
        })
        .collect()
}

/// Smallest final-stage size `⌈n(1 − ln s / ln α)⌉` whose largest
/// certifiable radius at `α/s` matches fixed-budget certification with `n`
/// draws at `α`.
pub fn min_final_stage_size(n: u64, alpha: f64, s: u64) -> Result<u64> {
    if n == 0 || s == 0 {
        return Err(invalid("n and s must be ≥ 1"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid(format!("alpha must lie in (0,1), got {alpha}")));
    }
    let value = n as f64 * (1.0 - (s as f64).ln() / alpha.ln());
    Ok(value.ceil() as u64)
}
