//! Command-line flags and config files.
//!
//! Every subcommand accepts `--config FILE`, a TOML table whose keys are the
//! flag names with `-` replaced by `_`. A flag given on the command line
//! overrides the same key in the file.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use ensmooth::ensemble::AggregationMode;

#[derive(Debug, Parser)]
#[command(
    name = "ensmooth",
    version,
    about = "Randomized-smoothing certification for classifier ensembles"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Certify a population with a fixed sample budget.
    Certify(CertifyArgs),
    /// Certify a population at one target radius with staged sampling.
    Adaptive(AdaptiveArgs),
    /// Sweep the Gaussian logit model over ensemble sizes.
    Theory(TheoryArgs),
    /// Print the per-stage certify/abort counts of a staged schedule.
    Thresholds(ThresholdArgs),
}

// Fills every `None` field of `$flags` from `$file`.
macro_rules! merge_fields {
    ($flags:ident, $file:ident; $($field:ident),+ $(,)?) => {
        $( if $flags.$field.is_none() { $flags.$field = $file.$field; } )+
    };
}

/// Options shared by the population commands.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct RunArgs {
    /// Classifier/ensemble definition (TOML).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Labelled inputs (CSV: id,label,x0,x1,...).
    #[arg(long)]
    pub population: Option<PathBuf>,
    /// Master seed; required.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (0 = all cores). Output does not depend on it.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Noise level σ.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Draws used to select the candidate class.
    #[arg(long)]
    pub n0: Option<u64>,
    /// Significance of the certificate.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Override the ensemble aggregation mode.
    #[arg(long)]
    pub mode: Option<AggregationMode>,
    /// Override the K-consensus prefix size.
    #[arg(long)]
    pub consensus_k: Option<usize>,
    /// Reference budget for the sample reduction factor.
    #[arg(long)]
    pub baseline_samples: Option<u64>,
    /// Radii of the certified-accuracy table, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub radii: Option<Vec<f64>>,
    /// Output prefix; writes PREFIX.json and PREFIX.csv.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

impl RunArgs {
    fn merge(&mut self, file: RunArgs) {
        merge_fields!(self, file; model, population, seed, workers, sigma, n0, alpha,
            mode, consensus_k, baseline_samples, radii, output);
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct CertifyArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub run: RunArgs,
    /// Draws used for the certificate.
    #[arg(long)]
    pub n: Option<u64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct AdaptiveArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub run: RunArgs,
    /// Cumulative stage sizes, comma separated and strictly increasing.
    #[arg(long, value_delimiter = ',')]
    pub stages: Option<Vec<u64>>,
    /// Significance of the early-abort tests.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Radius to certify.
    #[arg(long)]
    pub radius: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct TheoryArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Gaussian logit model (TOML: c, sigma_c, sigma_p, zeta_c, zeta_p).
    #[arg(long, conflicts_with = "logits")]
    pub model: Option<PathBuf>,
    /// Logit dump to fit the model from (CSV).
    #[arg(long)]
    pub logits: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Largest ensemble size in the sweep.
    #[arg(long)]
    pub k_max: Option<usize>,
    /// Certification budget behind the expected radius.
    #[arg(long)]
    pub n: Option<u64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Monte Carlo draws per ensemble size.
    #[arg(long)]
    pub n_mc: Option<u64>,
    /// Output prefix; writes PREFIX.csv and PREFIX.json.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct ThresholdArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub stages: Option<Vec<u64>>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub radius: Option<f64>,
    /// Print JSON instead of a table.
    #[arg(long)]
    #[serde(default)]
    pub json: bool,
}

/// Parses a config file, rejecting keys that are not flags of `T`.
pub fn read_config<T>(path: Option<&Path>) -> Result<T, String>
where
    T: for<'de> Deserialize<'de> + Serialize + Default,
{
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let table: toml::Table =
        toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    let known = serde_json::to_value(T::default()).map_err(|e| e.to_string())?;
    for key in table.keys() {
        if known.get(key).is_none() {
            return Err(format!("{}: unknown key `{key}`", path.display()));
        }
    }
    table
        .try_into()
        .map_err(|e| format!("{}: {e}", path.display()))
}

impl CertifyArgs {
    pub fn resolve(mut self) -> Result<Self, String> {
        let file: Self = read_config(self.config.as_deref())?;
        self.run.merge(file.run);
        merge_fields!(self, file; n);
        Ok(self)
    }
}

impl AdaptiveArgs {
    pub fn resolve(mut self) -> Result<Self, String> {
        let file: Self = read_config(self.config.as_deref())?;
        self.run.merge(file.run);
        merge_fields!(self, file; stages, beta, radius);
        Ok(self)
    }
}

impl TheoryArgs {
    pub fn resolve(mut self) -> Result<Self, String> {
        let file: Self = read_config(self.config.as_deref())?;
        if self.model.is_some() || self.logits.is_some() {
            // a source on the command line replaces the file's source
        } else {
            merge_fields!(self, file; model, logits);
        }
        merge_fields!(self, file; seed, k_max, n, alpha, sigma, n_mc, output);
        Ok(self)
    }
}

impl ThresholdArgs {
    pub fn resolve(mut self) -> Result<Self, String> {
        let file: Self = read_config(self.config.as_deref())?;
        merge_fields!(self, file; stages, alpha, beta, sigma, radius);
        self.json |= file.json;
        Ok(self)
    }
}
