use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn ensmooth(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ensmooth"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn setup() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "constant.toml",
        "[[classifiers]]\nid = \"c\"\nkind = \"constant\"\nclasses = 3\ndim = 2\nclass = 1\n",
    );
    write(
        dir.path(),
        "pop.csv",
        "id,label,x0,x1\na,1,0.0,0.0\nb,1,1.0,-1.0\nc,0,2.0,0.5\n",
    );
    write(
        dir.path(),
        "ensemble.toml",
        "[[classifiers]]\nid = \"a\"\nkind = \"linear_gaussian\"\nweight = [1.0, 0.0]\nbias = 0.2\n\n\
         [[classifiers]]\nid = \"b\"\nkind = \"linear_gaussian\"\nweight = [1.0, 0.3]\nbias = 0.1\n\n\
         [ensemble]\nmembers = [\"a\", \"a\", \"b\"]\nmode = \"soft\"\n",
    );
    dir
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn constant_classifier_certifies_at_max_radius() {
    let dir = setup();
    let o = ensmooth(
        &[
            "certify",
            "--model",
            "constant.toml",
            "--population",
            "pop.csv",
            "--sigma",
            "0.25",
            "--n",
            "100000",
            "--alpha",
            "0.001",
            "--seed",
            "0",
            "--output",
            "run",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("run.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(2).collect();
    assert_eq!(rows.len(), 3);
    let want = 0.25 * 3.811456563389952;
    for row in rows {
        let f: Vec<&str> = row.split(',').collect();
        assert_eq!(f[1], "1");
        let r: f64 = f[2].parse().unwrap();
        assert!((r - want).abs() < 1e-9, "{r}");
    }
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("run.json")).unwrap())
            .unwrap();
    assert_eq!(json["schema_version"], 1);
    assert_eq!(json["resolved"]["seed"], 0);
    assert_eq!(json["report"]["config"]["procedure"]["n"], 100000);
    assert!(stdout(&o).contains("ACR"));
}

#[test]
fn missing_seed_is_a_usage_error() {
    let dir = setup();
    let o = ensmooth(
        &[
            "certify",
            "--model",
            "constant.toml",
            "--population",
            "pop.csv",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--seed"));
}

#[test]
fn missing_model_file_is_a_usage_error() {
    let dir = setup();
    let o = ensmooth(
        &[
            "certify",
            "--model",
            "nope.toml",
            "--population",
            "pop.csv",
            "--seed",
            "1",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn reruns_and_worker_counts_give_identical_csv() {
    let dir = setup();
    let run = |out: &str, workers: &str| {
        let o = ensmooth(
            &[
                "certify",
                "--model",
                "ensemble.toml",
                "--population",
                "pop.csv",
                "--n",
                "5000",
                "--alpha",
                "0.01",
                "--sigma",
                "0.5",
                "--seed",
                "42",
                "--workers",
                workers,
                "--output",
                out,
            ],
            dir.path(),
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read(dir.path().join(format!("{out}.csv"))).unwrap()
    };
    let first = run("a", "1");
    assert_eq!(first, run("b", "1"));
    assert_eq!(first, run("c", "4"));
}

#[test]
fn config_file_values_are_overridden_by_flags() {
    let dir = setup();
    write(
        dir.path(),
        "run.toml",
        "model = \"constant.toml\"\npopulation = \"pop.csv\"\nseed = 3\nn = 1000\nalpha = 0.05\nsigma = 1.0\noutput = \"cfg\"\n",
    );
    let o = ensmooth(
        &["certify", "--config", "run.toml", "--sigma", "0.5"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("cfg.json")).unwrap())
            .unwrap();
    let proc_ = &json["report"]["config"]["procedure"];
    assert_eq!(proc_["sigma"], 0.5);
    assert_eq!(proc_["n"], 1000);
    assert_eq!(json["report"]["config"]["seed"], 3);
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = setup();
    write(dir.path(), "bad.toml", "seed = 1\nsigmaa = 0.3\n");
    let o = ensmooth(&["certify", "--config", "bad.toml"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sigmaa"));
}

#[test]
fn thresholds_match_reference_schedule() {
    let dir = setup();
    let o = ensmooth(
        &[
            "thresholds",
            "--stages",
            "1000,10000,125000",
            "--alpha",
            "0.001",
            "--beta",
            "0.0001",
            "--sigma",
            "0.25",
            "--radius",
            "0.25",
            "--json",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let certify: Vec<u64> = (0..3)
        .map(|i| rows[i]["certify_count"].as_u64().unwrap())
        .collect();
    let abort: Vec<u64> = (0..2)
        .map(|i| rows[i]["abort_count"].as_u64().unwrap())
        .collect();
    assert_eq!(certify, vec![880, 8538, 105607]);
    assert_eq!(abort, vec![795, 8270]);
    assert!(rows[2]["abort_count"].is_null());
}

#[test]
fn adaptive_rejects_non_increasing_stages() {
    let dir = setup();
    let o = ensmooth(
        &[
            "adaptive",
            "--model",
            "constant.toml",
            "--population",
            "pop.csv",
            "--seed",
            "0",
            "--stages",
            "100,100,1000",
            "--radius",
            "0.25",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn adaptive_prints_thresholds_and_stage_rates() {
    let dir = setup();
    let o = ensmooth(
        &[
            "adaptive",
            "--model",
            "constant.toml",
            "--population",
            "pop.csv",
            "--seed",
            "0",
            "--radius",
            "0.25",
            "--sigma",
            "0.25",
            "--output",
            "adp",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.contains("certify_at"));
    assert!(out.contains("ASR by stage"));
    let csv = std::fs::read_to_string(dir.path().join("adp.csv")).unwrap();
    // the constant classifier certifies already at the first stage
    for row in csv.lines().skip(2) {
        assert_eq!(row.split(',').nth(5), Some("1"));
    }
}

const CORRELATED: &str =
    "c = [1.0, 0.0]\nsigma_c = [[1.0, 0.0], [0.0, 1.0]]\nsigma_p = [[1.0, 0.0], [0.0, 1.0]]\n";

#[test]
fn theory_sweep_without_variance_reduction_is_flat() {
    let dir = setup();
    write(
        dir.path(),
        "model.toml",
        &format!("{CORRELATED}zeta_c = 1.0\nzeta_p = 1.0\n"),
    );
    let o = ensmooth(
        &[
            "theory",
            "--model",
            "model.toml",
            "--seed",
            "1",
            "--n",
            "1000",
            "--n-mc",
            "20000",
            "--output",
            "sw",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("sw.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("k,var_ratio_p,var_ratio_c,p1,p1_se,chebyshev,expected_radius")
    );
    let rows: Vec<Vec<String>> = lines
        .map(|l| l.split(',').map(String::from).collect())
        .collect();
    assert_eq!(rows.len(), 50);
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r[0], (i + 1).to_string());
        assert_eq!(r[6], rows[0][6]);
    }
}

#[test]
fn theory_sweep_grows_with_partial_correlation() {
    let dir = setup();
    write(
        dir.path(),
        "model.toml",
        &format!("{CORRELATED}zeta_c = 0.0\nzeta_p = 0.82\n"),
    );
    let o = ensmooth(
        &[
            "theory",
            "--model",
            "model.toml",
            "--seed",
            "1",
            "--n",
            "1000",
            "--n-mc",
            "20000",
            "--k-max",
            "20",
            "--output",
            "sw",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("sw.csv")).unwrap();
    let radii: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(radii.len(), 20);
    assert!(radii.windows(2).all(|w| w[1] >= w[0]));
    assert!(radii[19] > radii[0]);
}

#[test]
fn theory_rejects_non_psd_model() {
    let dir = setup();
    write(
        dir.path(),
        "bad.toml",
        "c = [1.0, 0.0]\nsigma_c = [[1.0, 2.0], [2.0, 1.0]]\nsigma_p = [[1.0, 0.0], [0.0, 1.0]]\nzeta_c = 0.0\nzeta_p = 0.5\n",
    );
    let o = ensmooth(
        &["theory", "--model", "bad.toml", "--seed", "1"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let dir = setup();
    assert_eq!(ensmooth(&["frobnicate"], dir.path()).status.code(), Some(2));
}

fn docs_examples() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    let src = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/examples");
    for entry in std::fs::read_dir(src).unwrap() {
        let entry = entry.unwrap();
        std::fs::copy(entry.path(), dir.path().join(entry.file_name())).unwrap();
    }
    dir
}

#[test]
fn documented_examples_run() {
    let dir = docs_examples();
    let runs: [&[&str]; 5] = [
        &["certify", "--config", "certify.toml"],
        &[
            "adaptive",
            "--config",
            "adaptive.toml",
            "--stages",
            "100,1000,10000",
        ],
        &[
            "theory",
            "--model",
            "theory_model.toml",
            "--seed",
            "0",
            "--k-max",
            "5",
            "--n",
            "1000",
            "--n-mc",
            "10000",
        ],
        &[
            "theory",
            "--logits",
            "logits.csv",
            "--seed",
            "0",
            "--k-max",
            "3",
            "--n",
            "1000",
            "--n-mc",
            "10000",
            "--output",
            "fitted",
        ],
        &[
            "thresholds",
            "--stages",
            "1000,10000,125000",
            "--alpha",
            "0.001",
            "--beta",
            "0.0001",
            "--sigma",
            "0.25",
            "--radius",
            "0.25",
        ],
    ];
    for args in runs {
        let o = ensmooth(args, dir.path());
        assert!(
            o.status.success(),
            "{args:?}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
    for file in [
        "certify-report.csv",
        "certify-report.json",
        "adaptive-report.csv",
        "theory.csv",
        "fitted.json",
    ] {
        assert!(dir.path().join(file).exists(), "{file}");
    }
}
