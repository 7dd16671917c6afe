//! Certification over a labelled population and the resulting metrics.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{certify, certify_adaptive, AdaptiveSchedule, CertificationResult, LabeledInput};
use crate::classifiers::{BaseClassifier, NoiseSource};
use crate::error::{invalid, Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

pub const CSV_HEADER: [&str; 7] = [
    "id",
    "prediction",
    "radius",
    "p_lower",
    "samples_used",
    "stage",
    "models_evaluated",
];

/// Fixed baseline budget the sample reduction factor is measured against.
const DEFAULT_BASELINE_N: u64 = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "procedure", rename_all = "snake_case")]
pub enum Procedure {
    Standard {
        n0: u64,
        n: u64,
        alpha: f64,
        sigma: f64,
    },
    Adaptive(AdaptiveSchedule),
}

impl Procedure {
    pub fn sigma(&self) -> f64 {
        match self {
            Procedure::Standard { sigma, .. } => *sigma,
            Procedure::Adaptive(s) => s.sigma,
        }
    }

    pub fn n0(&self) -> u64 {
        match self {
            Procedure::Standard { n0, .. } => *n0,
            Procedure::Adaptive(s) => s.n0,
        }
    }

    pub fn stages(&self) -> usize {
        match self {
            Procedure::Standard { .. } => 1,
            Procedure::Adaptive(s) => s.stages(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub procedure: Procedure,
    pub seed: u64,
    /// Worker threads; 0 picks the number of cores. Results do not depend on it.
    #[serde(default)]
    pub workers: usize,
    /// Per-input draws of the reference procedure; defaults to `n0 + 100000`.
    #[serde(default)]
    pub baseline_samples: Option<u64>,
    /// Radii at which certified accuracy is reported.
    #[serde(default)]
    pub radii: Vec<f64>,
}

impl EngineConfig {
    pub fn new(procedure: Procedure, seed: u64) -> Self {
        Self {
            procedure,
            seed,
            workers: 0,
            baseline_samples: None,
            radii: Vec::new(),
        }
    }

    pub fn baseline(&self) -> u64 {
        self.baseline_samples
            .unwrap_or(self.procedure.n0() + DEFAULT_BASELINE_N)
    }

    /// Sorted, deduplicated accuracy radii (defaults per procedure).
    pub fn curve_radii(&self) -> Vec<f64> {
        let mut radii = if !self.radii.is_empty() {
            self.radii.clone()
        } else {
            match &self.procedure {
                Procedure::Standard { .. } => (0..=8).map(|i| 0.25 * i as f64).collect(),
                Procedure::Adaptive(s) => vec![0.0, s.target_radius],
            }
        };
        radii.sort_by(f64::total_cmp);
        radii.dedup();
        radii
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputResult {
    pub id: String,
    pub label: usize,
    #[serde(flatten)]
    pub result: CertificationResult,
}

impl InputResult {
    pub fn is_correct(&self) -> bool {
        self.result.predicted_class == Some(self.label)
    }

    /// Radius credited to this input: zero unless certified with the true class.
    pub fn credited_radius(&self) -> f64 {
        if self.is_correct() {
            self.result.radius
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub radius: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub inputs: usize,
    /// Average certified radius; abstentions and wrong classes count as 0.
    pub acr: f64,
    pub certified_accuracy: Vec<CurvePoint>,
    pub baseline_samples: u64,
    pub mean_samples: f64,
    /// Baseline draws per input over mean draws per input.
    pub sample_rf: f64,
    /// Baseline member evaluations over actual member evaluations.
    pub time_rf: f64,
    /// Share of classifier invocations settled by K-consensus.
    pub kcr: f64,
    /// Share of inputs returned at each stage.
    pub asr: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub schema_version: u32,
    pub config: EngineConfig,
    pub summary: BatchSummary,
    pub results: Vec<InputResult>,
}

pub fn batch_certify(
    population: &[LabeledInput],
    clf: &dyn BaseClassifier,
    config: &EngineConfig,
) -> Result<BatchReport> {
    if population.is_empty() {
        return Err(invalid("population is empty"));
    }
    if let Procedure::Adaptive(s) = &config.procedure {
        s.validate()?;
    }
    let noise = NoiseSource::new(config.seed, config.procedure.sigma())?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::Numerical(format!("cannot start worker pool: {e}")))?;

    let started = Instant::now();
    let results = pool.install(|| {
        population
            .par_iter()
            .enumerate()
            .map(|(i, input)| {
                let sample_id = i as u64;
                let result = match &config.procedure {
                    Procedure::Standard { n0, n, alpha, .. } => {
                        certify(clf, &input.x, *n0, *n, *alpha, &noise, sample_id)?
                    }
                    Procedure::Adaptive(schedule) => {
                        certify_adaptive(clf, &input.x, schedule, &noise, sample_id)?
                    }
                };
                Ok(InputResult {
                    id: input.id.clone(),
                    label: input.label,
                    result,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    log::info!(
        "certified {} inputs in {:.3}s wall clock",
        results.len(),
        started.elapsed().as_secs_f64()
    );

    let summary = summarize(&results, config, clf.member_count());
    Ok(BatchReport {
        schema_version: SCHEMA_VERSION,
        config: config.clone(),
        summary,
        results,
    })
}

fn summarize(results: &[InputResult], config: &EngineConfig, members: usize) -> BatchSummary {
    let count = results.len() as f64;
    let acr = results
        .iter()
        .map(InputResult::credited_radius)
        .sum::<f64>()
        / count;

    let certified_accuracy = config
        .curve_radii()
        .into_iter()
        .map(|radius| {
            let hits = results
                .iter()
                .filter(|r| r.is_correct() && r.result.radius >= radius)
                .count();
            CurvePoint {
                radius,
                accuracy: hits as f64 / count,
            }
        })
        .collect();

    let samples: u64 = results.iter().map(|r| r.result.samples_used).sum();
    let models: u64 = results.iter().map(|r| r.result.models_evaluated).sum();
    let hits: u64 = results.iter().map(|r| r.result.consensus_hits).sum();
    let baseline = config.baseline();
    let mean_samples = samples as f64 / count;
    let mean_models = models as f64 / count;

    let mut asr = vec![0.0; config.procedure.stages()];
    for r in results {
        if let Some(stage) = r.result.stage_returned {
            asr[stage as usize - 1] += 1.0;
        }
    }
    for a in &mut asr {
        *a /= count;
    }

    BatchSummary {
        inputs: results.len(),
        acr,
        certified_accuracy,
        baseline_samples: baseline,
        mean_samples,
        sample_rf: baseline as f64 / mean_samples,
        time_rf: (baseline as f64 * members as f64) / mean_models,
        kcr: if samples == 0 {
            0.0
        } else {
            hits as f64 / samples as f64
        },
        asr,
    }
}

impl BatchReport {
    /// Accuracy at the given curve radius, if it was tabulated.
    pub fn certified_accuracy_at(&self, radius: f64) -> Option<f64> {
        self.summary
            .certified_accuracy
            .iter()
            .find(|p| p.radius == radius)
            .map(|p| p.accuracy)
    }

    /// One row per input after a `#` comment line carrying schema and seed.
    pub fn write_csv<W: Write>(&self, mut writer: W) -> Result<()> {
        writeln!(
            writer,
            "# ensmooth batch report schema={} seed={}",
            self.schema_version, self.config.seed
        )?;
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(CSV_HEADER)?;
        for r in &self.results {
            let res = &r.result;
            w.write_record([
                r.id.clone(),
                res.predicted_class
                    .map_or_else(|| "abstain".to_string(), |c| c.to_string()),
                res.radius.to_string(),
                res.p_lower.to_string(),
                res.samples_used.to_string(),
                res.stage_returned
                    .map_or_else(String::new, |s| s.to_string()),
                res.models_evaluated.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer_pretty(writer, self)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::TabularClassifier;

    fn input(id: &str, label: usize) -> LabeledInput {
        LabeledInput {
            id: id.into(),
            label,
            x: vec![0.0],
        }
    }

    fn fake(id: &str, label: usize, class: Option<usize>, radius: f64, stage: u32) -> InputResult {
        InputResult {
            id: id.into(),
            label,
            result: CertificationResult {
                predicted_class: class,
                radius,
                p_lower: 0.9,
                samples_used: 1000,
                models_evaluated: 1000,
                consensus_hits: 0,
                stage_returned: Some(stage),
                draws: vec![],
            },
        }
    }

    fn standard_cfg() -> EngineConfig {
        EngineConfig::new(
            Procedure::Standard {
                n0: 100,
                n: 1000,
                alpha: 0.001,
                sigma: 0.5,
            },
            0,
        )
    }

    #[test]
    fn all_abstain_gives_zero_metrics() {
        let results = vec![fake("a", 0, None, 0.0, 1), fake("b", 1, None, 0.0, 1)];
        let s = summarize(&results, &standard_cfg(), 1);
        assert_eq!(s.acr, 0.0);
        assert!(s.certified_accuracy.iter().all(|p| p.accuracy == 0.0));
        assert_eq!(s.asr, vec![1.0]);
    }

    #[test]
    fn single_certified_input() {
        let mut cfg = standard_cfg();
        cfg.radii = vec![1.0, 0.75];
        let s = summarize(&[fake("a", 2, Some(2), 0.8, 1)], &cfg, 1);
        assert_eq!(s.acr, 0.8);
        assert_eq!(
            s.certified_accuracy,
            vec![
                CurvePoint {
                    radius: 0.75,
                    accuracy: 1.0
                },
                CurvePoint {
                    radius: 1.0,
                    accuracy: 0.0
                }
            ]
        );
    }

    #[test]
    fn wrong_class_credits_zero() {
        let s = summarize(&[fake("a", 1, Some(2), 0.8, 1)], &standard_cfg(), 1);
        assert_eq!(s.acr, 0.0);
    }

    #[test]
    fn reduction_factors() {
        let cfg = standard_cfg();
        let s = summarize(&[fake("a", 0, Some(0), 0.3, 1)], &cfg, 1);
        assert_eq!(s.baseline_samples, 100_100);
        assert!((s.sample_rf - 100.1).abs() < 1e-12);
        assert!((s.time_rf - 100.1).abs() < 1e-12);
        assert_eq!(s.kcr, 0.0);
    }

    #[test]
    fn csv_layout() {
        let clf = TabularClassifier::constant(3, 1, 2).unwrap();
        let report =
            batch_certify(&[input("p0", 2), input("p1", 0)], &clf, &standard_cfg()).unwrap();
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "# ensmooth batch report schema=1 seed=0");
        assert_eq!(
            lines[1],
            "id,prediction,radius,p_lower,samples_used,stage,models_evaluated"
        );
        assert!(lines[2].starts_with("p0,2,"));
        assert!(lines[2].ends_with(",1100,1,1100"));
        assert_eq!(lines.len(), 4);
        // the label-0 input is certified but wrong
        assert!((report.summary.acr - report.results[0].result.radius / 2.0).abs() < 1e-15);
    }

    #[test]
    fn empty_population_rejected() {
        let clf = TabularClassifier::constant(3, 1, 2).unwrap();
        assert!(batch_certify(&[], &clf, &standard_cfg()).is_err());
    }
}
