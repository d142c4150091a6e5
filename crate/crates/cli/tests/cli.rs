use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn quasar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quasar")).args(args).output().expect("spawn quasar")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn generate(dir: &Path, n: usize, sigma: f64, ratio: f64, seed: u64) -> std::path::PathBuf {
    let out = dir.join(format!("inst_{n}_{seed}.json"));
    let o = quasar(&[
        "generate",
        "--n",
        &n.to_string(),
        "--sigma",
        &sigma.to_string(),
        "--outlier-ratio",
        &ratio.to_string(),
        "--seed",
        &seed.to_string(),
        "--out",
        path(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    out
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn generate_writes_instance_schema() {
    let dir = tempfile::tempdir().unwrap();
    let inst = read_json(&generate(dir.path(), 8, 0.01, 0.25, 3));
    assert_eq!(inst["n"], 8);
    assert!(inst["cbar_sq"].as_f64().unwrap() > 0.0);
    let corrs = inst["correspondences"].as_array().unwrap();
    assert_eq!(corrs.len(), 8);
    assert_eq!(corrs[0]["a"].as_array().unwrap().len(), 3);
    assert_eq!(corrs[0]["sigma"], 0.01);
    assert_eq!(inst["truth"]["q"].as_array().unwrap().len(), 4);
    let theta = inst["truth"]["theta"].as_array().unwrap();
    assert_eq!(theta.iter().filter(|t| t.as_i64() == Some(-1)).count(), 2);
}

#[test]
fn solve_then_certify_quasar() {
    let dir = tempfile::tempdir().unwrap();
    let inst = generate(dir.path(), 8, 0.01, 0.25, 1);
    let report = dir.path().join("sol.json");
    let sdpa = dir.path().join("prob.dat-s");
    let o = quasar(&[
        "solve",
        "--in",
        path(&inst),
        "--method",
        "quasar",
        "--report",
        path(&report),
        "--sdpa-out",
        path(&sdpa),
        "--require-tight",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&report);
    assert_eq!(r["method"], "quasar");
    assert_eq!(r["certified"], true);
    assert_eq!(r["sdp"]["certificate"]["rank"], 1);
    assert!(r["rotation_error_rad"].as_f64().unwrap() < 2f64.to_radians());
    assert!(std::fs::read_to_string(&sdpa).unwrap().lines().count() > 10);

    let o = quasar(&["certify", "--in", path(&inst), "--solution", path(&report), "--require-tight"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let c: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(c["consistent"], true);
    assert_eq!(c["certified"], true);
    assert!(c["relative_gap"].as_f64().unwrap() <= 1e-6);
}

#[test]
fn certify_detects_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let inst = generate(dir.path(), 6, 0.01, 0.0, 2);
    let report = dir.path().join("sol.json");
    let o = quasar(&["solve", "--in", path(&inst), "--report", path(&report)]);
    assert_eq!(code(&o), 0);

    let mut r = read_json(&report);
    r["f_tls"] = Value::from(r["f_tls"].as_f64().unwrap() - 1.0);
    let forged = dir.path().join("forged.json");
    std::fs::write(&forged, serde_json::to_string(&r).unwrap()).unwrap();
    let o = quasar(&["certify", "--in", path(&inst), "--solution", path(&forged)]);
    assert_eq!(code(&o), 3);

    // a zero dual vector proves nothing for a noisy instance
    let mut r = read_json(&report);
    let m = r["dual_y"].as_array().unwrap().len();
    r["dual_y"] = Value::from(vec![0.0; m]);
    std::fs::write(&forged, serde_json::to_string(&r).unwrap()).unwrap();
    let o = quasar(&["certify", "--in", path(&inst), "--solution", path(&forged), "--require-tight"]);
    assert_eq!(code(&o), 3, "claims a certificate it cannot back");
}

#[test]
fn baselines_and_require_tight() {
    let dir = tempfile::tempdir().unwrap();
    let inst = generate(dir.path(), 8, 0.01, 0.25, 4);
    let report = dir.path().join("w.json");
    let o = quasar(&["solve", "--in", path(&inst), "--method", "wahba", "--report", path(&report)]);
    assert_eq!(code(&o), 0);
    assert_eq!(read_json(&report)["certified"], false);
    let o = quasar(&["solve", "--in", path(&inst), "--method", "wahba", "--report", path(&report), "--require-tight"]);
    assert_eq!(code(&o), 4);

    let o = quasar(&["solve", "--in", path(&inst), "--method", "ransac", "--report", path(&report)]);
    assert_eq!(code(&o), 0);
    assert_eq!(read_json(&report)["ransac"]["status"], "success");

    let o = quasar(&["solve", "--in", path(&inst), "--method", "brute", "--report", path(&report), "--require-tight"]);
    assert_eq!(code(&o), 0);
    let o = quasar(&["certify", "--in", path(&inst), "--solution", path(&report), "--require-tight"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let o = quasar(&["solve", "--in", path(&inst), "--method", "wahba", "--sdpa-out", "x.dat-s"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn csv_input() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("c.csv");
    // rotation of π/2 about z
    std::fs::write(
        &csv,
        "ax,ay,az,bx,by,bz\n1,0,0,0,1,0\n0,1,0,-1,0,0\n0,0,1,0,0,1\n1,1,0,-1,1,0\n",
    )
    .unwrap();
    let o = quasar(&["solve", "--csv", path(&csv), "--sigma", "0.01", "--require-tight"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r: Value = serde_json::from_slice(&o.stdout).unwrap();
    let m = &r["R"];
    assert!((m[0][1].as_f64().unwrap() + 1.0).abs() < 1e-6);
    assert!((m[1][0].as_f64().unwrap() - 1.0).abs() < 1e-6);

    // no sigma column and no --sigma
    let o = quasar(&["solve", "--csv", path(&csv)]);
    assert_eq!(code(&o), 2);
}

#[test]
fn parse_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"n\": 3, \"cbar_sq\": ").unwrap();
    assert_eq!(code(&quasar(&["solve", "--in", path(&bad)])), 2);
    assert_eq!(code(&quasar(&["solve", "--in", "/nonexistent/x.json"])), 2);
    assert_eq!(code(&quasar(&["solve", "--method", "magic", "--in", path(&bad)])), 2);
    assert_eq!(code(&quasar(&["generate", "--n", "1", "--sigma", "0", "--out", path(&bad)])), 2);

    let csv = dir.path().join("c.csv");
    std::fs::write(&csv, "ax,ay,az,bx,by,bz,sigma\n1,0,0,1,0,0,0.1\n0,1,0,oops,1,0,0.1\n").unwrap();
    let o = quasar(&["solve", "--csv", path(&csv)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn sweep_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.json");
    std::fs::write(
        &cfg,
        r#"{"n": 6, "outlier_ratios": [0.0, 0.5], "sigmas": [0.01], "mc_runs": 2, "methods": ["quasar", "wahba", "brute"]}"#,
    )
    .unwrap();
    let out = dir.path().join("report.csv");
    let o = quasar(&["sweep", "--config", path(&cfg), "--out", path(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let rows = text.lines().skip(1).filter(|l| l.starts_with("run,")).count();
    assert_eq!(rows, 2 * 3 * 2);
    let report = quasar_core::BenchReport::read_csv(text.as_bytes()).unwrap();
    assert_eq!(report.runs.len(), 12);

    std::fs::write(&cfg, r#"{"n": 20, "outlier_ratios": [0.0], "sigmas": [0.01], "mc_runs": 1, "methods": ["brute"]}"#).unwrap();
    assert_eq!(code(&quasar(&["sweep", "--config", path(&cfg), "--out", path(&out)])), 2);
}
