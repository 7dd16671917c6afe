//! Fitting the Gaussian logit model to sampled logits.
//!
//! Dump format (CSV, header required):
//! `draw_id,classifier_id,perturbation_id,class,logit`. `draw_id` is
//! optional and defaults to 0; a draw is one realisation of the training
//! randomness (e.g. one input). `perturbation_id = 0` holds the clean
//! logits and `1..=J` the logits under noise draw `j`, where the same `j`
//! means the same noise for every classifier. Ids must be dense from zero.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::GaussianLogitModel;
use crate::error::{invalid, Error, Result};

const RATIO_FLOOR: f64 = 1e-6;

/// Logits of all classifiers for one draw.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitDraw {
    /// `clean[l]`: m logits of classifier `l` on the clean input.
    pub clean: Vec<Vec<f64>>,
    /// `perturbed[l][j]`: m logits of classifier `l` under noise draw `j`.
    pub perturbed: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogitSamples {
    classes: usize,
    classifiers: usize,
    perturbations: usize,
    draws: Vec<LogitDraw>,
}

impl LogitSamples {
    pub fn new(draws: Vec<LogitDraw>) -> Result<Self> {
        let first = draws.first().ok_or_else(|| invalid("no logit draws"))?;
        let classifiers = first.clean.len();
        let classes = first.clean.first().map_or(0, Vec::len);
        let perturbations = first.perturbed.first().map_or(0, Vec::len);
        if classifiers < 2 {
            return Err(invalid("estimation needs at least 2 classifiers"));
        }
        if perturbations < 2 {
            return Err(invalid(
                "estimation needs at least 2 perturbations per classifier",
            ));
        }
        if classes < 2 {
            return Err(invalid("logits need at least 2 classes"));
        }
        for d in &draws {
            let ok = d.clean.len() == classifiers
                && d.perturbed.len() == classifiers
                && d.clean.iter().all(|v| v.len() == classes)
                && d.perturbed
                    .iter()
                    .all(|p| p.len() == perturbations && p.iter().all(|v| v.len() == classes));
            if !ok {
                return Err(invalid(
                    "every draw must have the same classifier, perturbation and class counts",
                ));
            }
            let finite = d
                .clean
                .iter()
                .flatten()
                .chain(d.perturbed.iter().flatten().flatten())
                .all(|v| v.is_finite());
            if !finite {
                return Err(invalid("logits must be finite"));
            }
        }
        Ok(Self {
            classes,
            classifiers,
            perturbations,
            draws,
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn classifiers(&self) -> usize {
        self.classifiers
    }

    pub fn perturbations(&self) -> usize {
        self.perturbations
    }

    pub fn draws(&self) -> &[LogitDraw] {
        &self.draws
    }
}

/// Fitted model; `zeta_c_identified` is false when a single draw leaves the
/// clean inter-classifier covariance unobservable (ζ_c is then reported as 0
/// and Σ_c is the spread of the clean logits across classifiers).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelEstimate {
    pub model: GaussianLogitModel,
    pub zeta_c_identified: bool,
}

fn outer_add(acc: &mut DMatrix<f64>, a: &DVector<f64>, b: &DVector<f64>) {
    acc.ger(1.0, a, b, 1.0);
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Median of `inter/intra` over the upper triangle, skipping entries whose
/// intra magnitude is below `1e-6·max|intra|`, clamped to `[0, 1]`.
fn correlation_ratio(inter: &DMatrix<f64>, intra: &DMatrix<f64>) -> f64 {
    let floor = RATIO_FLOOR * intra.amax();
    let mut ratios = Vec::new();
    for i in 0..intra.nrows() {
        for j in i..intra.ncols() {
            let d = intra[(i, j)];
            if d.abs() >= floor && d != 0.0 {
                ratios.push(inter[(i, j)] / d);
            }
        }
    }
    median(ratios).map_or(0.0, |r| r.clamp(0.0, 1.0))
}

// Pooled intra- and inter-classifier covariances of centred vectors.
// `groups` yields, per replicate, one centred vector per classifier.
struct CovAccumulator {
    intra: DMatrix<f64>,
    all: DMatrix<f64>,
}

impl CovAccumulator {
    fn new(m: usize) -> Self {
        Self {
            intra: DMatrix::zeros(m, m),
            all: DMatrix::zeros(m, m),
        }
    }

    fn add(&mut self, vectors: &[DVector<f64>]) {
        let mut sum = DVector::zeros(self.intra.nrows());
        for v in vectors {
            outer_add(&mut self.intra, v, v);
            sum += v;
        }
        outer_add(&mut self.all, &sum, &sum);
    }

    // `intra_norm` divides the summed self-products, `inter_norm` the summed
    // cross-products over ordered classifier pairs.
    fn finish(self, intra_norm: f64, inter_norm: f64) -> (DMatrix<f64>, DMatrix<f64>) {
        let cross = &self.all - &self.intra;
        let intra = self.intra / intra_norm;
        let inter = cross / inter_norm;
        let sym = |m: DMatrix<f64>| (&m + m.transpose()) * 0.5;
        (sym(intra), sym(inter))
    }
}

/// Mean `c`, covariances `Σ_c`, `Σ_p` and correlations `ζ_c`, `ζ_p`.
pub fn estimate_model(samples: &LogitSamples) -> Result<ModelEstimate> {
    let m = samples.classes;
    let nl = samples.classifiers;
    let nj = samples.perturbations;
    let nt = samples.draws.len();
    let lf = nl as f64;
    let vec = |v: &[f64]| DVector::from_column_slice(v);

    let mut c = DVector::zeros(m);
    for d in &samples.draws {
        for v in &d.clean {
            c += vec(v);
        }
    }
    c /= (nt * nl) as f64;

    // Perturbation component: deviations from the clean logits, centred per
    // (draw, classifier) over the noise draws.
    let mut pert = CovAccumulator::new(m);
    for d in &samples.draws {
        let dev: Vec<Vec<DVector<f64>>> = (0..nl)
            .map(|l| {
                let clean = vec(&d.clean[l]);
                d.perturbed[l].iter().map(|p| vec(p) - &clean).collect()
            })
            .collect();
        let means: Vec<DVector<f64>> = dev
            .iter()
            .map(|row| row.iter().fold(DVector::zeros(m), |a, v| a + v) / nj as f64)
            .collect();
        for j in 0..nj {
            let centred: Vec<DVector<f64>> = dev
                .iter()
                .zip(&means)
                .map(|(row, mean)| &row[j] - mean)
                .collect();
            pert.add(&centred);
        }
    }
    let reps = (nt * (nj - 1)) as f64;
    let (sigma_p, inter_p) = pert.finish(reps * lf, reps * lf * (lf - 1.0));
    let zeta_p = correlation_ratio(&inter_p, &sigma_p);

    let (sigma_c, zeta_c, identified) = if nt >= 2 {
        let means: Vec<DVector<f64>> = (0..nl)
            .map(|l| {
                samples
                    .draws
                    .iter()
                    .fold(DVector::zeros(m), |a, d| a + vec(&d.clean[l]))
                    / nt as f64
            })
            .collect();
        let mut clean = CovAccumulator::new(m);
        for d in &samples.draws {
            let centred: Vec<DVector<f64>> =
                (0..nl).map(|l| vec(&d.clean[l]) - &means[l]).collect();
            clean.add(&centred);
        }
        let reps = (nt - 1) as f64;
        let (intra, inter) = clean.finish(reps * lf, reps * lf * (lf - 1.0));
        let z = correlation_ratio(&inter, &intra);
        (intra, z, true)
    } else {
        let mut s = DMatrix::zeros(m, m);
        for v in &samples.draws[0].clean {
            let x = vec(v) - &c;
            outer_add(&mut s, &x, &x);
        }
        (s / (lf - 1.0), 0.0, false)
    };

    let model = GaussianLogitModel::new(
        c.iter().copied().collect(),
        sigma_c,
        sigma_p,
        zeta_c,
        zeta_p,
    )?;
    Ok(ModelEstimate {
        model,
        zeta_c_identified: identified,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct LogitRow {
    #[serde(default)]
    draw_id: u64,
    classifier_id: u64,
    perturbation_id: u64,
    class: u64,
    logit: f64,
}

fn dense(ids: impl Iterator<Item = u64>, what: &str) -> Result<usize> {
    let set: std::collections::BTreeSet<u64> = ids.collect();
    let n = set.len();
    if set.iter().enumerate().any(|(i, id)| *id != i as u64) {
        return Err(Error::Format(format!("{what} ids must be dense from 0")));
    }
    Ok(n)
}

/// Reads a logit dump (see the module docs for columns).
pub fn read_logit_samples<R: Read>(reader: R) -> Result<LogitSamples> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut cells: BTreeMap<(u64, u64, u64, u64), f64> = BTreeMap::new();
    for row in rdr.deserialize() {
        let r: LogitRow = row?;
        let key = (r.draw_id, r.classifier_id, r.perturbation_id, r.class);
        if cells.insert(key, r.logit).is_some() {
            return Err(Error::Format(format!("duplicate logit entry {key:?}")));
        }
    }
    let nt = dense(cells.keys().map(|k| k.0), "draw")?;
    let nl = dense(cells.keys().map(|k| k.1), "classifier")?;
    let np = dense(cells.keys().map(|k| k.2), "perturbation")?;
    let m = dense(cells.keys().map(|k| k.3), "class")?;
    if cells.len() != nt * nl * np * m {
        return Err(Error::Format("logit dump is missing entries".into()));
    }
    if np < 1 {
        return Err(Error::Format("logit dump has no clean logits".into()));
    }
    let get = |t: usize, l: usize, p: usize| -> Vec<f64> {
        (0..m)
            .map(|i| cells[&(t as u64, l as u64, p as u64, i as u64)])
            .collect()
    };
    let draws = (0..nt)
        .map(|t| LogitDraw {
            clean: (0..nl).map(|l| get(t, l, 0)).collect(),
            perturbed: (0..nl)
                .map(|l| (1..np).map(|p| get(t, l, p)).collect())
                .collect(),
        })
        .collect();
    LogitSamples::new(draws)
}

pub fn write_logit_samples<W: Write>(samples: &LogitSamples, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for (t, d) in samples.draws.iter().enumerate() {
        for l in 0..samples.classifiers {
            let rows = std::iter::once(&d.clean[l]).chain(d.perturbed[l].iter());
            for (p, logits) in rows.enumerate() {
                for (class, logit) in logits.iter().enumerate() {
                    w.serialize(LogitRow {
                        draw_id: t as u64,
                        classifier_id: l as u64,
                        perturbation_id: p as u64,
                        class: class as u64,
                        logit: *logit,
                    })?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}
