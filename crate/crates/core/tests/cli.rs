//! End-to-end runs of the `gmml` binary.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn gmml(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gmml"))
        .args(args)
        .env_remove("GMML_THREADS")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

const MC: &[&str] = &[
    "mc-failure",
    "--kind",
    "tree",
    "--count",
    "4",
    "--trials",
    "12",
    "--seed",
    "7",
];

#[test]
fn mc_failure_is_bit_identical_across_runs_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let runs: Vec<_> = [("a", "1"), ("b", "2"), ("c", "1")]
        .iter()
        .map(|(name, threads)| {
            let out = dir.path().join(name);
            let mut args = MC.to_vec();
            args.extend(["--threads", threads, "--out", out.to_str().unwrap()]);
            let o = gmml(&args);
            assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
            (
                std::fs::read(out.join("trials.csv")).unwrap(),
                std::fs::read(out.join("summary.json")).unwrap(),
            )
        })
        .collect();
    assert!(runs.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn mc_summary_has_the_documented_fields() {
    let o = gmml(MC);
    assert_eq!(code(&o), 0);
    let summary: Value = serde_json::from_slice(&o.stdout).unwrap();
    for key in [
        "trials",
        "successes",
        "success_rate",
        "wilson_low",
        "wilson_high",
        "good_inits",
        "good_init_rate",
        "event_e_count",
        "necessity_violations",
        "c_gap",
    ] {
        assert!(summary.get(key).is_some(), "missing {key}");
    }
    assert_eq!(summary["trials"], 12);
}

#[test]
fn trials_csv_uses_seventeen_significant_digits() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = MC.to_vec();
    args.extend(["--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&gmml(&args)), 0);
    let csv = std::fs::read_to_string(dir.path().join("trials.csv")).unwrap();
    let mut lines = csv.lines();
    let column = lines
        .next()
        .unwrap()
        .split(',')
        .position(|h| h == "final_loglik")
        .unwrap();
    let float = lines.next().unwrap().split(',').nth(column).unwrap();
    let mantissa = float
        .split('e')
        .next()
        .unwrap()
        .trim_start_matches('-')
        .replace('.', "");
    assert_eq!(mantissa.len(), 17, "{float}");
}

#[test]
fn resolved_config_is_echoed_and_reusable() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let mut args = MC.to_vec();
    args.extend(["--out", first.to_str().unwrap()]);
    assert_eq!(code(&gmml(&args)), 0);
    let cfg = read_json(&first.join("config.json"));
    assert_eq!(cfg["master_seed"], 7);
    assert_eq!(cfg["mc_failure"]["trials"], 12);

    let second = dir.path().join("second");
    let o = gmml(&[
        "mc-failure",
        "--config",
        first.join("config.json").to_str().unwrap(),
        "--out",
        second.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    assert_eq!(
        std::fs::read(first.join("trials.csv")).unwrap(),
        std::fs::read(second.join("trials.csv")).unwrap()
    );
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    std::fs::write(&path, r#"{"master_seed": 1, "mc_failure": {"trials": 3}}"#).unwrap();
    let out = dir.path().join("out");
    let o = gmml(&[
        "mc-failure",
        "--config",
        path.to_str().unwrap(),
        "--kind",
        "tree",
        "--count",
        "2",
        "--seed",
        "9",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let cfg = read_json(&out.join("config.json"));
    assert_eq!(cfg["master_seed"], 9);
    assert_eq!(cfg["mc_failure"]["trials"], 3);
    assert_eq!(read_json(&out.join("summary.json"))["trials"], 3);
}

#[test]
fn surface_marks_critical_points() {
    let o = gmml(&[
        "surface",
        "--centers=-4,4",
        "--lo=-6",
        "--hi",
        "6",
        "--step",
        "0.5",
    ]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().next(), Some("mu_1,mu_2,loglik,grad_norm,flag"));
    assert!(
        text.lines().any(|l| l.ends_with(",local-maximum")),
        "no maximum flagged"
    );
}

#[test]
fn run_reports_convergence_through_the_exit_code() {
    let ok = gmml(&[
        "run",
        "--kind",
        "centers",
        "--centers=-4,4",
        "--init=-1,2",
        "--stepper",
        "em",
    ]);
    assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stderr));
    let capped = gmml(&[
        "run",
        "--kind",
        "centers",
        "--centers=-4,4",
        "--init=-1,2",
        "--max-iters",
        "3",
    ]);
    assert_eq!(code(&capped), 2);
}

#[test]
fn violated_hypotheses_exit_with_three() {
    let o = gmml(&[
        "construct",
        "--kind",
        "diffuse",
        "--c",
        "25",
        "--delta",
        "5",
        "--inner-left=-30",
        "--inner-right",
        "125",
    ]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    let o = gmml(&[
        "lemma-suite",
        "--per-lemma",
        "0",
        "--check",
        r#"{"lemma":"center-negative","r":1.0,"candidates":[0.0,5.0],"index":0}"#,
    ]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(code(&gmml(&["no-such-command"])), 1);
    assert_eq!(code(&gmml(&["surface", "--step", "banana"])), 1);
    assert_eq!(
        code(&gmml(&["run", "--kind", "centers", "--centers=-4,4"])),
        1
    );
    assert_eq!(code(&gmml(&["surface", "--quad-order", "3"])), 1);
}

#[test]
fn construct_and_classify_emit_json() {
    let o = gmml(&["construct", "--kind", "pruned", "--count", "5"]);
    assert_eq!(code(&o), 0);
    let model: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(model["centers"].as_array().unwrap().len(), 5);

    let o = gmml(&[
        "classify-init",
        "--kind",
        "tree",
        "--count",
        "4",
        "--seed",
        "3",
    ]);
    assert_eq!(code(&o), 0);
    let out: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(out["points"].as_array().unwrap().len(), 4);
    assert!(out["classification"]["good"].is_boolean());
}

#[test]
fn boundary_values_report_a_positive_margin() {
    let o = gmml(&["boundary-values"]);
    assert_eq!(code(&o), 0);
    let bv: Value = serde_json::from_slice(&o.stdout).unwrap();
    let v0 = bv["v0"].as_f64().unwrap();
    let others = ["v1", "v2", "v3"].map(|k| bv[k].as_f64().unwrap());
    assert!(others.iter().all(|&v| v < v0));
}

#[test]
fn saddle_trials_reach_no_strict_saddle() {
    let o = gmml(&["saddle-trials", "--centers=-4,4", "--trials", "4"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(s["strict_saddles"], 0);
    assert_eq!(s["converged"], 4);
}

#[test]
fn thread_cap_comes_from_the_environment() {
    let o = Command::new(env!("CARGO_BIN_EXE_gmml"))
        .args(MC)
        .args(["--threads", "8"])
        .env("GMML_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert_eq!(o.stdout, gmml(MC).stdout);
}
