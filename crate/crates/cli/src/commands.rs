//! Subcommand runners.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use ensmooth::certify::{
    batch_certify, read_population, stage_thresholds, AdaptiveSchedule, BatchReport, EngineConfig,
    Procedure, StageThreshold, SCHEMA_VERSION,
};
use ensmooth::classifiers::ModelFile;
use ensmooth::theory::{
    estimate_model, read_logit_samples, theory_sweep, write_sweep_csv, GaussianLogitModel,
    ModelDef, SweepConfig, SweepRow,
};
use ensmooth::Error;

use crate::args::{AdaptiveArgs, CertifyArgs, RunArgs, TheoryArgs, ThresholdArgs};

const DEFAULT_N0: u64 = 100;
const DEFAULT_N: u64 = 100_000;
const DEFAULT_ALPHA: f64 = 0.001;
const DEFAULT_BETA: f64 = 0.001;
const DEFAULT_STAGES: [u64; 4] = [100, 1_000, 10_000, 120_000];
const DEFAULT_SIGMA: f64 = 0.25;
const DEFAULT_K_MAX: usize = 50;
const DEFAULT_THEORY_N: u64 = 100_000;
const DEFAULT_N_MC: u64 = 100_000;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config or input files.
    Usage(String),
    /// The computation itself failed.
    Numerical(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Numerical(m) => f.write_str(m),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Numerical(_) => CliError::Numerical(e.to_string()),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<String> for CliError {
    fn from(m: String) -> Self {
        CliError::Usage(m)
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn required<T>(value: Option<T>, flag: &str) -> Result<T> {
    value.ok_or_else(|| CliError::Usage(format!("missing required option --{flag}")))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Usage(format!("cannot create {}: {e}", path.display())))
}

fn with_extension(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

/// JSON report written next to every CSV.
#[derive(Serialize)]
struct Envelope<'a, A: Serialize, R: Serialize> {
    schema_version: u32,
    command: &'a str,
    resolved: &'a A,
    report: &'a R,
}

fn write_envelope<A: Serialize, R: Serialize>(
    path: &Path,
    command: &str,
    resolved: &A,
    report: &R,
) -> Result<()> {
    let env = Envelope {
        schema_version: SCHEMA_VERSION,
        command,
        resolved,
        report,
    };
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, &env).map_err(|e| CliError::Usage(e.to_string()))?;
    writeln!(w)
        .and_then(|_| w.flush())
        .map_err(|e| CliError::Usage(e.to_string()))
}

fn load_population_and_model(
    run: &RunArgs,
) -> Result<(Vec<ensmooth::certify::LabeledInput>, ModelFile)> {
    let model_path = required(run.model.as_ref(), "model")?;
    let pop_path = required(run.population.as_ref(), "population")?;
    let mut model = ModelFile::load(model_path)
        .map_err(|e| CliError::Usage(format!("{}: {e}", model_path.display())))?;
    if run.mode.is_some() || run.consensus_k.is_some() {
        let ens = model.ensemble.as_mut().ok_or_else(|| {
            CliError::Usage(
                "--mode/--consensus-k need a model file with an [ensemble] table".into(),
            )
        })?;
        if let Some(mode) = run.mode {
            ens.mode = mode;
        }
        if run.consensus_k.is_some() {
            ens.consensus_k = run.consensus_k;
        }
    }
    let file = File::open(pop_path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", pop_path.display())))?;
    let population = read_population(file)
        .map_err(|e| CliError::Usage(format!("{}: {e}", pop_path.display())))?;
    Ok((population, model))
}

fn run_batch<A: Serialize>(
    command: &str,
    run: &RunArgs,
    procedure: Procedure,
    resolved: &A,
) -> Result<BatchReport> {
    let seed = required(run.seed, "seed")?;
    let (population, model) = load_population_and_model(run)?;
    let clf = model.build()?;
    let mut config = EngineConfig::new(procedure, seed);
    config.workers = run.workers.unwrap_or(0);
    config.baseline_samples = run.baseline_samples;
    config.radii = run.radii.clone().unwrap_or_default();
    let report = batch_certify(&population, clf.as_ref(), &config)?;

    let prefix = run
        .output
        .clone()
        .unwrap_or_else(|| PathBuf::from("report"));
    let mut csv = create(&with_extension(&prefix, "csv"))?;
    report.write_csv(&mut csv)?;
    csv.flush().map_err(|e| CliError::Usage(e.to_string()))?;
    write_envelope(&with_extension(&prefix, "json"), command, resolved, &report)?;
    print_summary(&report);
    Ok(report)
}

fn print_summary(report: &BatchReport) {
    let s = &report.summary;
    println!("inputs: {}", s.inputs);
    println!("ACR: {:.4}", s.acr);
    println!("radius  certified_accuracy");
    for p in &s.certified_accuracy {
        println!("{:>6.3}  {:.4}", p.radius, p.accuracy);
    }
    println!(
        "mean samples: {:.1} (baseline {}), SampleRF {:.3}, TimeRF {:.3}",
        s.mean_samples, s.baseline_samples, s.sample_rf, s.time_rf
    );
    if s.kcr > 0.0 {
        println!("KCR: {:.4}", s.kcr);
    }
    if s.asr.len() > 1 {
        let asr: Vec<String> = s.asr.iter().map(|a| format!("{a:.4}")).collect();
        println!("ASR by stage: {}", asr.join(" "));
    }
}

pub fn certify(args: CertifyArgs) -> Result<()> {
    let a = args.resolve()?;
    let r = &a.run;
    let procedure = Procedure::Standard {
        n0: r.n0.unwrap_or(DEFAULT_N0),
        n: a.n.unwrap_or(DEFAULT_N),
        alpha: r.alpha.unwrap_or(DEFAULT_ALPHA),
        sigma: r.sigma.unwrap_or(DEFAULT_SIGMA),
    };
    run_batch("certify", r, procedure, &a)?;
    Ok(())
}

fn schedule_from(
    n0: Option<u64>,
    stages: Option<Vec<u64>>,
    alpha: Option<f64>,
    beta: Option<f64>,
    radius: Option<f64>,
    sigma: Option<f64>,
) -> Result<AdaptiveSchedule> {
    Ok(AdaptiveSchedule::new(
        n0.unwrap_or(DEFAULT_N0),
        stages.unwrap_or_else(|| DEFAULT_STAGES.to_vec()),
        alpha.unwrap_or(DEFAULT_ALPHA),
        beta.unwrap_or(DEFAULT_BETA),
        required(radius, "radius")?,
        sigma.unwrap_or(DEFAULT_SIGMA),
    )?)
}

fn print_thresholds(rows: &[StageThreshold]) {
    println!("stage  size      certify_at  abort_below");
    for t in rows {
        let fmt = |c: Option<u64>| c.map_or_else(|| "-".to_string(), |c| c.to_string());
        println!(
            "{:<6} {:<9} {:<11} {}",
            t.stage,
            t.size,
            fmt(t.certify_count),
            fmt(t.abort_count)
        );
    }
}

pub fn adaptive(args: AdaptiveArgs) -> Result<()> {
    let a = args.resolve()?;
    let r = &a.run;
    let schedule = schedule_from(r.n0, a.stages.clone(), r.alpha, a.beta, a.radius, r.sigma)?;
    print_thresholds(&stage_thresholds(&schedule)?);
    run_batch("adaptive", r, Procedure::Adaptive(schedule), &a)?;
    Ok(())
}

pub fn thresholds(args: ThresholdArgs) -> Result<()> {
    let a = args.resolve()?;
    let schedule = schedule_from(None, a.stages.clone(), a.alpha, a.beta, a.radius, a.sigma)?;
    let rows = stage_thresholds(&schedule)?;
    if a.json {
        let text =
            serde_json::to_string_pretty(&rows).map_err(|e| CliError::Usage(e.to_string()))?;
        println!("{text}");
    } else {
        print_thresholds(&rows);
    }
    Ok(())
}

#[derive(Serialize)]
struct TheoryReport<'a> {
    model: ModelDef,
    zeta_c_identified: bool,
    sweep: &'a SweepConfig,
    rows: &'a [SweepRow],
}

pub fn theory(args: TheoryArgs) -> Result<()> {
    let a = args.resolve()?;
    let seed = required(a.seed, "seed")?;
    let (model, identified) = match (&a.model, &a.logits) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
            let model = GaussianLogitModel::load_toml(&text)
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            (model, true)
        }
        (None, Some(path)) => {
            let file = File::open(path)
                .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
            let samples = read_logit_samples(file)
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            let est = estimate_model(&samples)?;
            if !est.zeta_c_identified {
                log::warn!(
                    "single draw in {}: clean correlation not identifiable, using ζ_c = 0",
                    path.display()
                );
            }
            (est.model, est.zeta_c_identified)
        }
        (None, None) => {
            return Err(CliError::Usage(
                "missing required option --model or --logits".into(),
            ))
        }
    };
    let config = SweepConfig {
        k_max: a.k_max.unwrap_or(DEFAULT_K_MAX),
        n: a.n.unwrap_or(DEFAULT_THEORY_N),
        alpha: a.alpha.unwrap_or(DEFAULT_ALPHA),
        sigma: a.sigma.unwrap_or(DEFAULT_SIGMA),
        n_mc: a.n_mc.unwrap_or(DEFAULT_N_MC),
        seed,
    };
    let rows = theory_sweep(&model, &config)?;

    let prefix = a.output.clone().unwrap_or_else(|| PathBuf::from("theory"));
    let mut csv = create(&with_extension(&prefix, "csv"))?;
    write_sweep_csv(&rows, &mut csv)?;
    csv.flush().map_err(|e| CliError::Usage(e.to_string()))?;
    let report = TheoryReport {
        model: model.to_def(),
        zeta_c_identified: identified,
        sweep: &config,
        rows: &rows,
    };
    write_envelope(&with_extension(&prefix, "json"), "theory", &a, &report)?;

    println!("ζ_p = {:.4}, ζ_c = {:.4}", model.zeta_p(), model.zeta_c());
    println!("k     p1       expected_radius");
    for r in &rows {
        println!("{:<5} {:.5}  {:.5}", r.k, r.p1, r.expected_radius);
    }
    Ok(())
}
