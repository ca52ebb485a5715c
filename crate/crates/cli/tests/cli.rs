//! Command-level behaviour: determinism, provenance, exit codes and the
//! returns transform.

mod common;

use std::path::Path;
use std::process::Command;

use slrid_cli::{cmd_identify, cmd_returns, cmd_score, cmd_simulate, CliError, RunConfig, BUILTIN_MODEL};

fn simulate_config(out: &Path, seed: u64, n_samples: usize) -> RunConfig {
    let mut cfg = RunConfig {
        model: Some(BUILTIN_MODEL.into()),
        n_samples,
        output: out.to_path_buf(),
        ..RunConfig::default()
    };
    cfg.identify.seed = seed;
    cfg
}

/// Two weights, coarse grid and few Monte Carlo runs.
fn quick_identify(trajectory: &Path, out: &Path) -> RunConfig {
    let mut cfg = RunConfig {
        trajectory: Some(trajectory.to_path_buf()),
        truth: Some(BUILTIN_MODEL.into()),
        output: out.to_path_buf(),
        ..RunConfig::default()
    };
    cfg.identify.lambdas = vec![0.84, 0.6];
    cfg.identify.grid_size = 128;
    cfg.identify.mc_runs = 50;
    cfg.identify.reweight_iters = 5;
    cfg
}

/// Numeric columns of a CSV written by the tools, comments and the leading
/// index column skipped.
pub fn read_rows(path: &Path) -> Vec<Vec<f64>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').skip(1).map(|v| v.parse().unwrap()).collect())
        .collect()
}

#[test]
fn simulation_is_byte_identical_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let read = |seed| {
        cmd_simulate(&simulate_config(dir.path(), seed, 300)).unwrap();
        std::fs::read(dir.path().join("trajectory.csv")).unwrap()
    };
    let first = read(7);
    assert_eq!(first, read(7));
    assert_ne!(first, read(8));
}

#[test]
fn outputs_carry_config_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let y = cmd_simulate(&simulate_config(dir.path(), 5, 200)).unwrap();
    assert_eq!((y.len(), y.dim()), (200, 10));
    let text = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# config: {"));
    assert_eq!(lines.next().unwrap(), "# seed: 5");
    let model: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("model.json")).unwrap()).unwrap();
    assert_eq!(model["seed"], 5);
    assert!(model["config"].is_object());
    assert!(model["model"].is_object());
}

#[test]
fn returns_fill_missing_cells_with_zero() {
    let dir = tempfile::tempdir().unwrap();
    let prices = dir.path().join("prices.csv");
    let missing = common::write_price_panel(&prices, 120, 5, 3);
    assert!(!missing.is_empty());
    let cfg = RunConfig {
        prices: Some(prices),
        output: dir.path().to_path_buf(),
        ..RunConfig::default()
    };
    let y = cmd_returns(&cfg).unwrap();
    assert_eq!((y.len(), y.dim()), (119, 5));
    for &(r, c) in &missing {
        assert_eq!(y.samples()[(r - 1, c)], 0.0);
    }
    let rows = read_rows(&dir.path().join("returns.csv"));
    assert_eq!(rows.len(), 119);
    assert!(rows.iter().all(|r| r.len() == 5));
}

#[test]
fn identify_writes_bundle_and_rescoring_agrees() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    cmd_simulate(&simulate_config(&sim, 1, 2000)).unwrap();
    let out = dir.path().join("fit");
    let cfg = quick_identify(&sim.join("trajectory.csv"), &out);
    let summary = cmd_identify(&cfg).unwrap();
    assert_eq!(summary.table.len(), 2);
    assert_eq!(summary.table[0].lambda, 0.6);
    for name in ["scores.csv", "edge_counts.csv", "singular_values.csv", "selected.json", "ar_error.csv"] {
        assert!(out.join(name).exists(), "{name}");
    }
    for sub in ["lambda_0.6000", "lambda_0.8400"] {
        for name in ["topology.json", "latent.json", "scored.json"] {
            assert!(out.join(sub).join(name).exists(), "{sub}/{name}");
        }
    }
    let rescored = cmd_score(&cfg).unwrap();
    assert_eq!(rescored.selected_lambda, summary.selected_lambda);
    for (a, b) in rescored.table.iter().zip(&summary.table) {
        assert!((a.score - b.score).abs() <= 1e-9 * (1.0 + b.score.abs()));
    }
}

#[test]
fn errors_map_to_exit_codes() {
    let bad = RunConfig::from_toml("tau = \"wide\"");
    assert!(matches!(bad, Err(CliError::Config(_))));
    assert_eq!(bad.unwrap_err().exit_code(), 2);
    let missing = RunConfig {
        trajectory: Some("/nonexistent/trajectory.csv".into()),
        ..RunConfig::default()
    };
    assert_eq!(cmd_identify(&missing).unwrap_err().exit_code(), 3);
}

#[test]
fn binary_reports_failures_through_exit_status() {
    let bin = env!("CARGO_BIN_EXE_slrid");
    let dir = tempfile::tempdir().unwrap();
    let status = |args: &[&str]| Command::new(bin).args(args).output().unwrap().status.code();
    assert_eq!(status(&["identify", "--tau", "-1", "--trajectory", "x.csv"]), Some(2));
    assert_eq!(status(&["identify", "--trajectory", "/nonexistent.csv"]), Some(3));
    let out = dir.path().to_str().unwrap();
    assert_eq!(status(&["simulate", "--model", BUILTIN_MODEL, "--n-samples", "50", "-o", out]), Some(0));
    let help = Command::new(bin).args(["identify", "--help"]).output().unwrap();
    let text = String::from_utf8(help.stdout).unwrap();
    for flag in ["--seed", "--lambda-grid", "--tau", "--eta", "--mc-runs", "--alphas", "--grid-size"] {
        assert!(text.contains(flag), "{flag}");
    }
}

#[test]
fn documented_config_parses() {
    let text = r#"
p1 = 2
p2 = 1
lambdas = [0.12, 0.24, 0.36, 0.48, 0.60, 0.72, 0.84]
tau = 0.1
grid_size = 512
eps = 1e-3
reweight_iters = 50
alphas = [0.95]
mc_runs = 200
seed = 0
eta = 0.05
support_count = "unordered"
inflation_step = 1.5
max_inflations = 30

[reweight_admm]
max_iters = 2000
"#;
    let cfg = RunConfig::from_toml(text).unwrap();
    assert_eq!(cfg, RunConfig::default());
    cfg.validate().unwrap();
}
