//! TOML definition files for classifiers and ensembles.
//!
//! ```toml
//! [[classifiers]]
//! id = "lin"
//! kind = "linear_gaussian"
//! weight = [1.0, 0.0]
//! bias = 0.0
//!
//! [[classifiers]]
//! id = "always-3"
//! kind = "constant"
//! classes = 10
//! dim = 2
//! class = 3
//!
//! [ensemble]            # optional
//! members = ["lin", "always-3"]
//! mode = "soft"
//! consensus_k = 1
//! ```
//!
//! Without an `[ensemble]` table the file must define exactly one classifier.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{AffineClassifier, BaseClassifier, LinearGaussianClassifier, TabularClassifier};
use crate::ensemble::{AggregationMode, EnsembleConfig};
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularCell {
    pub cell: Vec<i64>,
    pub class: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClassifierDef {
    LinearGaussian {
        id: String,
        weight: Vec<f64>,
        #[serde(default)]
        bias: f64,
    },
    Affine {
        id: String,
        weights: Vec<Vec<f64>>,
        biases: Vec<f64>,
    },
    Constant {
        id: String,
        classes: usize,
        dim: usize,
        class: usize,
    },
    Tabular {
        id: String,
        classes: usize,
        dim: usize,
        cell_width: f64,
        default_class: usize,
        #[serde(default)]
        cells: Vec<TabularCell>,
    },
}

impl ClassifierDef {
    pub fn id(&self) -> &str {
        match self {
            ClassifierDef::LinearGaussian { id, .. }
            | ClassifierDef::Affine { id, .. }
            | ClassifierDef::Constant { id, .. }
            | ClassifierDef::Tabular { id, .. } => id,
        }
    }

    pub fn build(&self) -> Result<Arc<dyn BaseClassifier>> {
        Ok(match self {
            ClassifierDef::LinearGaussian { weight, bias, .. } => {
                Arc::new(LinearGaussianClassifier::new(weight.clone(), *bias)?)
            }
            ClassifierDef::Affine {
                weights, biases, ..
            } => Arc::new(AffineClassifier::new(weights.clone(), biases.clone())?),
            ClassifierDef::Constant {
                classes,
                dim,
                class,
                ..
            } => Arc::new(TabularClassifier::constant(*classes, *dim, *class)?),
            ClassifierDef::Tabular {
                classes,
                dim,
                cell_width,
                default_class,
                cells,
                ..
            } => {
                let mut table = HashMap::with_capacity(cells.len());
                for c in cells {
                    if table.insert(c.cell.clone(), c.class).is_some() {
                        return Err(invalid(format!("cell {:?} listed twice", c.cell)));
                    }
                }
                Arc::new(TabularClassifier::new(
                    *classes,
                    *dim,
                    *cell_width,
                    table,
                    *default_class,
                )?)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleDef {
    pub members: Vec<String>,
    #[serde(default)]
    pub mode: AggregationMode,
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
    #[serde(default)]
    pub consensus_k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub classifiers: Vec<ClassifierDef>,
    #[serde(default)]
    pub ensemble: Option<EnsembleDef>,
}

impl ModelFile {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Build the classifier under certification.
    pub fn build(&self) -> Result<Arc<dyn BaseClassifier>> {
        let mut by_id = HashMap::new();
        for def in &self.classifiers {
            if by_id.insert(def.id(), def).is_some() {
                return Err(invalid(format!(
                    "classifier id `{}` defined twice",
                    def.id()
                )));
            }
        }
        let Some(ens) = &self.ensemble else {
            return match self.classifiers.as_slice() {
                [only] => only.build(),
                _ => Err(invalid(
                    "a file with several classifiers needs an [ensemble] table",
                )),
            };
        };
        let members = ens
            .members
            .iter()
            .map(|id| {
                by_id
                    .get(id.as_str())
                    .ok_or_else(|| Error::Format(format!("ensemble member `{id}` is not defined")))
                    .and_then(|def| def.build())
            })
            .collect::<Result<Vec<_>>>()?;
        let mut cfg = EnsembleConfig::new(members, ens.mode)?;
        if let Some(w) = &ens.weights {
            cfg = cfg.with_weights(w.clone())?;
        }
        if let Some(k) = ens.consensus_k {
            cfg = cfg.with_consensus(k)?;
        }
        Ok(Arc::new(cfg))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_single_classifier() {
        let f = ModelFile::parse(
            r#"
            [[classifiers]]
            id = "lin"
            kind = "linear_gaussian"
            weight = [1.0, 2.0]
            bias = -0.5
            "#,
        )
        .unwrap();
        let clf = f.build().unwrap();
        assert_eq!(clf.class_count(), 2);
        assert_eq!(clf.input_dim(), 2);
        assert_eq!(clf.predict(&[1.0, 0.0]).unwrap().class, 1);
    }

    #[test]
    fn parses_ensemble_with_consensus() {
        let f = ModelFile::parse(
            r#"
            [[classifiers]]
            id = "a"
            kind = "constant"
            classes = 3
            dim = 2
            class = 1

            [[classifiers]]
            id = "b"
            kind = "tabular"
            classes = 3
            dim = 2
            cell_width = 0.5
            default_class = 2
            cells = [{ cell = [0, 0], class = 1 }]

            [ensemble]
            members = ["a", "b", "a"]
            mode = "hard"
            consensus_k = 2
            "#,
        )
        .unwrap();
        let clf = f.build().unwrap();
        assert_eq!(clf.member_count(), 3);
        let p = clf.predict(&[0.1, 0.1]).unwrap();
        assert_eq!((p.class, p.models_evaluated, p.consensus_hit), (1, 2, true));
        let p = clf.predict(&[3.0, 3.0]).unwrap();
        assert_eq!(
            (p.class, p.models_evaluated, p.consensus_hit),
            (1, 3, false)
        );
    }

    #[test]
    fn rejects_bad_files() {
        let unknown = "[[classifiers]]\nid='x'\nkind='mystery'\n";
        assert!(ModelFile::parse(unknown).is_err());
        let two = r#"
            [[classifiers]]
            id = "a"
            kind = "constant"
            classes = 2
            dim = 1
            class = 0
            [[classifiers]]
            id = "b"
            kind = "constant"
            classes = 2
            dim = 1
            class = 1
        "#;
        assert!(ModelFile::parse(two).unwrap().build().is_err());
        let missing = format!("{two}\n[ensemble]\nmembers = [\"a\", \"zzz\"]\n");
        assert!(ModelFile::parse(&missing).unwrap().build().is_err());
    }
}
