//! Base classifiers evaluated under noise.

mod file;
mod noise;

use std::collections::HashMap;

use crate::bounds::gaussian_cdf;
use crate::error::{invalid, Error, Result};

pub use file::{ClassifierDef, ModelFile, TabularCell};
pub use noise::{sample_perturbation, NoiseSource, PerturbationStream, StreamKey};

/// Pre-softmax scores, one per class.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitVector(Vec<f64>);

impl LogitVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(invalid(format!(
                "need at least 2 classes, got {}",
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite logit {bad}")));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn class_count(&self) -> usize {
        self.0.len()
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Class decision plus how much work it took.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Prediction {
    pub class: usize,
    pub models_evaluated: u32,
    pub consensus_hit: bool,
}

/// A scoring function `f: ℝ^d → ℝ^m` with hard decision `argmax f`.
///
/// Implementations must be deterministic for a fixed input and free of
/// interior mutability that affects results; `logits` may be called from
/// many threads at once.
pub trait BaseClassifier: Send + Sync {
    fn class_count(&self) -> usize;

    fn input_dim(&self) -> usize;

    fn logits(&self, x: &[f64]) -> Result<LogitVector>;

    /// Number of underlying models a full evaluation touches.
    fn member_count(&self) -> usize {
        1
    }

    fn predict(&self, x: &[f64]) -> Result<Prediction> {
        Ok(Prediction {
            class: self.logits(x)?.argmax(),
            models_evaluated: 1,
            consensus_hit: false,
        })
    }
}

fn check_dim(expected: usize, x: &[f64]) -> Result<()> {
    if x.len() != expected {
        return Err(invalid(format!(
            "input has dimension {}, classifier expects {expected}",
            x.len()
        )));
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Binary classifier `class 1 ⟺ w·x + b > 0`.
///
/// Under `N(0, σ²I)` noise the probability of class 1 at `x` is exactly
/// `Φ((w·x + b)/(σ‖w‖))`, which makes it a ground-truth oracle for
/// certification tests.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearGaussianClassifier {
    weight: Vec<f64>,
    bias: f64,
}

impl LinearGaussianClassifier {
    pub fn new(weight: Vec<f64>, bias: f64) -> Result<Self> {
        if weight.is_empty() {
            return Err(invalid("weight vector must be nonempty"));
        }
        if weight
            .iter()
            .chain(std::iter::once(&bias))
            .any(|v| !v.is_finite())
        {
            return Err(invalid("weights and bias must be finite"));
        }
        if weight.iter().all(|w| *w == 0.0) {
            return Err(Error::DegenerateClassifier("zero weight vector".into()));
        }
        Ok(Self { weight, bias })
    }

    /// Input placed so that the class-1 probability under `N(0, σ²I)` is `p`.
    /// Moves from the origin along `w`.
    pub fn input_with_success_prob(&self, p: f64, sigma: f64) -> Result<Vec<f64>> {
        let z = crate::bounds::gaussian_quantile(p)?;
        let norm = self.weight_norm();
        // w·x + b = z σ ‖w‖ with x = t w
        let t = (z * sigma * norm - self.bias) / (norm * norm);
        Ok(self.weight.iter().map(|w| t * w).collect())
    }

    pub fn weight(&self) -> &[f64] {
        &self.weight
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn weight_norm(&self) -> f64 {
        dot(&self.weight, &self.weight).sqrt()
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        dot(&self.weight, x) + self.bias
    }
}

impl BaseClassifier for LinearGaussianClassifier {
    fn class_count(&self) -> usize {
        2
    }

    fn input_dim(&self) -> usize {
        self.weight.len()
    }

    fn logits(&self, x: &[f64]) -> Result<LogitVector> {
        check_dim(self.weight.len(), x)?;
        LogitVector::new(vec![0.0, self.score(x)])
    }
}

/// True probability that the linear classifier outputs class 1 at `x`
/// under `N(0, σ²I)` noise.
pub fn linear_true_success_prob(
    clf: &LinearGaussianClassifier,
    x: &[f64],
    sigma: f64,
) -> Result<f64> {
    check_dim(clf.weight.len(), x)?;
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(invalid(format!(
            "noise level must be positive, got {sigma}"
        )));
    }
    let norm = clf.weight_norm();
    if norm == 0.0 {
        return Err(Error::DegenerateClassifier("zero weight vector".into()));
    }
    Ok(gaussian_cdf(clf.score(x) / (sigma * norm)))
}

/// Multi-class affine scorer `f(x) = W x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineClassifier {
    weights: Vec<Vec<f64>>,
    biases: Vec<f64>,
    dim: usize,
}

impl AffineClassifier {
    pub fn new(weights: Vec<Vec<f64>>, biases: Vec<f64>) -> Result<Self> {
        if weights.len() < 2 {
            return Err(invalid("affine classifier needs at least 2 classes"));
        }
        if biases.len() != weights.len() {
            return Err(invalid(format!(
                "{} weight rows but {} biases",
                weights.len(),
                biases.len()
            )));
        }
        let dim = weights[0].len();
        if dim == 0 || weights.iter().any(|row| row.len() != dim) {
            return Err(invalid("weight rows must share one nonzero length"));
        }
        if weights
            .iter()
            .flatten()
            .chain(&biases)
            .any(|v| !v.is_finite())
        {
            return Err(invalid("weights and biases must be finite"));
        }
        Ok(Self {
            weights,
            biases,
            dim,
        })
    }
}

impl BaseClassifier for AffineClassifier {
    fn class_count(&self) -> usize {
        self.weights.len()
    }

    fn input_dim(&self) -> usize {
        self.dim
    }

    fn logits(&self, x: &[f64]) -> Result<LogitVector> {
        check_dim(self.dim, x)?;
        let values = self
            .weights
            .iter()
            .zip(&self.biases)
            .map(|(row, b)| dot(row, x) + b)
            .collect();
        LogitVector::new(values)
    }
}

/// Lookup from a grid cell `⌊x / cell_width⌋` to a class, with a default
/// class for cells not in the table. An empty table is the constant
/// classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularClassifier {
    classes: usize,
    dim: usize,
    cell_width: f64,
    table: HashMap<Vec<i64>, usize>,
    default_class: usize,
}

impl TabularClassifier {
    pub fn new(
        classes: usize,
        dim: usize,
        cell_width: f64,
        table: HashMap<Vec<i64>, usize>,
        default_class: usize,
    ) -> Result<Self> {
        if classes < 2 {
            return Err(invalid("tabular classifier needs at least 2 classes"));
        }
        if dim == 0 {
            return Err(invalid("input dimension must be ≥ 1"));
        }
        if !(cell_width > 0.0 && cell_width.is_finite()) {
            return Err(invalid(format!(
                "cell width must be positive, got {cell_width}"
            )));
        }
        if default_class >= classes {
            return Err(invalid(format!(
                "default class {default_class} out of range"
            )));
        }
        for (cell, class) in &table {
            if cell.len() != dim {
                return Err(invalid(format!(
                    "cell {cell:?} does not have {dim} coordinates"
                )));
            }
            if *class >= classes {
                return Err(invalid(format!("class {class} out of range")));
            }
        }
        Ok(Self {
            classes,
            dim,
            cell_width,
            table,
            default_class,
        })
    }

    pub fn constant(classes: usize, dim: usize, class: usize) -> Result<Self> {
        Self::new(classes, dim, 1.0, HashMap::new(), class)
    }

    pub fn cell_of(&self, x: &[f64]) -> Vec<i64> {
        x.iter()
            .map(|v| (v / self.cell_width).floor() as i64)
            .collect()
    }

    pub fn class_at(&self, x: &[f64]) -> usize {
        if self.table.is_empty() {
            return self.default_class;
        }
        *self
            .table
            .get(&self.cell_of(x))
            .unwrap_or(&self.default_class)
    }
}

impl BaseClassifier for TabularClassifier {
    fn class_count(&self) -> usize {
        self.classes
    }

    fn input_dim(&self) -> usize {
        self.dim
    }

    fn logits(&self, x: &[f64]) -> Result<LogitVector> {
        check_dim(self.dim, x)?;
        let mut values = vec![0.0; self.classes];
        values[self.class_at(x)] = 1.0;
        LogitVector::new(values)
    }
}
