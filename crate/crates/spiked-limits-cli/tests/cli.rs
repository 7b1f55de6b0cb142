//! End-to-end checks of the command-line interface: exit codes, output
//! reproducibility, config-file merging, and the observation file format.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spiked-limits"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout_json(output: &Output) -> serde_json::Value {
    serde_json::from_slice(&output.stdout).expect("stdout is JSON")
}

fn temp_path(name: &str) -> PathBuf {
    let mut p = std::env::temp_dir();
    p.push(format!("spiked-limits-test-{}-{name}", std::process::id()));
    p
}

#[test]
fn threshold_rademacher_reports_unit_lambda_c() {
    let out = run(&[
        "threshold",
        "--prior",
        "rademacher",
        "--grid-points",
        "5",
        "--grid-max",
        "2.0",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let json = stdout_json(&out);
    let lambda_c = json["result"]["report"]["lambda_c"].as_f64().unwrap();
    assert!((lambda_c - 1.0).abs() < 1e-3, "lambda_c = {lambda_c}");
    assert_eq!(
        json["result"]["report"]["spectral_threshold"].as_f64(),
        Some(1.0)
    );
    assert!(json["config_sha256"].as_str().unwrap().len() == 64);
}

#[test]
fn threshold_rejects_degenerate_prior() {
    let out = run(&[
        "threshold",
        "--prior",
        r#"{"atoms": [0.0], "weights": [1.0]}"#,
    ]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("zero variance"), "stderr: {stderr}");
}

#[test]
fn curves_rejects_grid_beyond_validity() {
    // lambda = 0.9 is below 1 but above the sparse prior's threshold.
    let out = run(&[
        "curves",
        "--prior",
        "sparse:0.05",
        "--grid-min",
        "0.1",
        "--grid-max",
        "0.9",
        "--grid-points",
        "3",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn clt_rejects_lambda_above_threshold() {
    let out = run(&[
        "clt",
        "--prior",
        "rademacher",
        "--lambda",
        "1.5",
        "--n",
        "8",
        "--replicates",
        "10",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("not below the reconstruction threshold"),
        "{stderr}"
    );
}

#[test]
fn test_error_csv_is_byte_identical_across_runs() {
    let csv_a = temp_path("te-a.csv");
    let csv_b = temp_path("te-b.csv");
    let args = |out: &PathBuf| {
        vec![
            "test-error".to_string(),
            "--prior".into(),
            "rademacher".into(),
            "--lambda".into(),
            "0.4".into(),
            "--n".into(),
            "8".into(),
            "--replicates".into(),
            "60".into(),
            "--seed".into(),
            "9".into(),
            "--out".into(),
            out.display().to_string(),
        ]
    };
    let a = bin().args(args(&csv_a)).output().unwrap();
    let b = bin().args(args(&csv_b)).output().unwrap();
    assert!(a.status.success() && b.status.success());
    assert_eq!(fs::read(&csv_a).unwrap(), fs::read(&csv_b).unwrap());
    // The stdout summaries agree except for the echoed output path.
    assert_eq!(stdout_json(&a)["result"], stdout_json(&b)["result"]);
    assert_eq!(
        stdout_json(&a)["config_sha256"],
        stdout_json(&b)["config_sha256"]
    );
    fs::remove_file(csv_a).ok();
    fs::remove_file(csv_b).ok();
}

#[test]
fn config_file_fields_merge_with_flag_overrides() {
    let config_path = temp_path("config.json");
    fs::write(
        &config_path,
        r#"{
            "prior": "rademacher",
            "lambda": 0.4,
            "n": 8,
            "replicates": 40,
            "seed": 5,
            "method": "mc",
            "mc_samples": 2000
        }"#,
    )
    .unwrap();
    let out = run(&[
        "test-error",
        "--config",
        config_path.to_str().unwrap(),
        "--replicates",
        "25",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let json = stdout_json(&out);
    assert_eq!(json["config"]["replicates"].as_u64(), Some(25));
    assert_eq!(json["config"]["lambda"].as_f64(), Some(0.4));
    assert_eq!(json["config"]["lr_method"].as_str(), Some("mc"));
    assert_eq!(json["result"]["replicates"].as_u64(), Some(25));
    fs::remove_file(config_path).ok();
}

#[test]
fn simulate_round_trips_through_the_binary_format() {
    let obs_path = temp_path("obs.bin");
    let out = run(&[
        "simulate",
        "--prior",
        "sparse:0.25",
        "--n",
        "12",
        "--lambda",
        "0.7",
        "--sigma",
        "1.5",
        "--seed",
        "31",
        "--out",
        obs_path.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let written = stdout_json(&out);
    assert_eq!(written["result"]["n"].as_u64(), Some(12));
    assert_eq!(written["result"]["has_diagonal"].as_bool(), Some(true));

    let loaded = run(&["simulate", "--load", obs_path.to_str().unwrap()]);
    assert!(loaded.status.success());
    let json = stdout_json(&loaded);
    assert_eq!(json["result"]["origin"].as_str(), Some("loaded"));
    assert_eq!(json["result"]["n"].as_u64(), Some(12));
    assert_eq!(json["result"]["lambda_true"].as_f64(), Some(0.7));
    assert_eq!(json["result"]["seed"].as_u64(), Some(31));
    assert_eq!(json["result"]["sigma"].as_f64(), Some(1.5));

    // Header layout: n, sigma, lambda_true, seed as LE 64-bit words, then
    // 12 * 11 / 2 upper entries plus 12 diagonal entries.
    let bytes = fs::read(&obs_path).unwrap();
    assert_eq!(bytes.len(), 8 * (4 + 66 + 12));
    assert_eq!(u64::from_le_bytes(bytes[0..8].try_into().unwrap()), 12);
    assert_eq!(f64::from_le_bytes(bytes[8..16].try_into().unwrap()), 1.5);
    fs::remove_file(obs_path).ok();
}

#[test]
fn mc_method_runs_end_to_end() {
    let out = run(&[
        "clt",
        "--prior",
        "rademacher",
        "--lambda",
        "0.3",
        "--n",
        "8",
        "--replicates",
        "20",
        "--seed",
        "2",
        "--method",
        "mc",
        "--mc-samples",
        "2000",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let json = stdout_json(&out);
    assert!(json["result"]["theory_mu"].as_f64().unwrap() > 0.0);
}

#[test]
fn overlap_gibbs_method_runs_beyond_enumeration_sizes() {
    // The chain sampler must not trip the exact-enumeration cap check.
    let out = run(&[
        "overlap",
        "--prior",
        "rademacher",
        "--lambda",
        "0.5",
        "--n",
        "24",
        "--replicates",
        "1",
        "--seed",
        "6",
        "--overlap-method",
        "gibbs",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let json = stdout_json(&out);
    assert_eq!(json["result"][0]["n"].as_u64(), Some(24));
    assert!(json["result"][0]["e_r1star_sq"].as_f64().unwrap() > 0.0);
}

#[test]
fn overlap_emits_one_row_per_size() {
    let csv = temp_path("overlap.csv");
    let out = run(&[
        "overlap",
        "--prior",
        "rademacher",
        "--lambda",
        "0.5",
        "--n",
        "6,8",
        "--replicates",
        "10",
        "--seed",
        "3",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 3, "{text}");
    assert!(text.starts_with("n,replicates,"));
    fs::remove_file(csv).ok();
}

#[test]
fn thread_cap_env_is_accepted() {
    let out = bin()
        .env("SPIKED_LIMITS_THREADS", "1")
        .args([
            "test-error",
            "--prior",
            "rademacher",
            "--lambda",
            "0.4",
            "--n",
            "6",
            "--replicates",
            "20",
            "--seed",
            "4",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
}
