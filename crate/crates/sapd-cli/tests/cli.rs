use std::path::Path;
use std::process::{Command, Output};

use sapd::bench::{read_csv, summarize, SummaryRow, TraceRow};
use serde_json::Value;

const BILINEAR: &str = r#"{"mu_x":1,"mu_y":1,"l_xx":0,"l_xy":10,"l_yx":10,"l_yy":0}"#;

const SMALL_BENCH: &str = r#"{
  "version": 1,
  "problem": {"kind": "quadratic", "d": 10, "spectral_norm": 5.0, "mu_x": 1.0, "mu_y": 1.0, "delta": 1.0, "seed": 3},
  "solvers": [
    {"kind": "sapd", "tuning": {"mode": "explicit"}},
    {"kind": "sogda"},
    {"kind": "smp"}
  ],
  "iters": 300,
  "paths": 6,
  "record_every": 50
}"#;

fn sapd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sapd")).args(args).env_remove("SAPD_THREADS").output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("stdout is not JSON ({e}): {}", String::from_utf8_lossy(&o.stdout)))
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("config.json");
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn rho_star_of_bilinear_profile() {
    let o = sapd(&["rho-star", "--profile", BILINEAR]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    let rho = v["rho"].as_f64().unwrap();
    assert!((rho - 0.9049).abs() < 1e-3, "rho* = {rho}");
    assert_eq!(v["feasible"], true);
}

#[test]
fn tune_modes_return_feasible_certificates() {
    let o = sapd(&["tune", "--profile", BILINEAR, "--mode", "scsc"]);
    assert_eq!(code(&o), 0);
    let v = stdout_json(&o);
    assert_eq!(v["feasible"], true);
    assert!((v["theta"].as_f64().unwrap() - v["rho"].as_f64().unwrap()).abs() < 1e-12);

    let mc = r#"{"mu_x":0,"mu_y":0,"l_xx":1,"l_xy":10,"l_yx":10,"l_yy":1}"#;
    let o = sapd(&["tune", "--profile", mc, "--mode", "mc", "--eps", "0.1"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    assert_eq!(v["feasible"], true);
    assert_eq!(v["rho"].as_f64().unwrap(), 1.0);
    assert_eq!(v["theta"].as_f64().unwrap(), 1.0);
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&sapd(&["tune", "--profile", "{not json"])), 2);
    assert_eq!(code(&sapd(&["tune", "--profile", BILINEAR, "--mode", "mc"])), 2);
    assert_eq!(code(&sapd(&["--threads", "0", "rho-star", "--profile", BILINEAR])), 2);
    assert_eq!(code(&sapd(&["no-such-command"])), 2);
    assert_eq!(code(&sapd(&["bench", "--config", "/nonexistent/config.json"])), 2);
}

#[test]
fn infeasible_certificate_exits_1() {
    let o = sapd(&["certify", "--profile", BILINEAR, "--tau", "1", "--sigma", "1", "--theta", "1", "--rho", "0.5"]);
    assert_eq!(code(&o), 1);
    let v = stdout_json(&o);
    assert_eq!(v["feasible"], false);
    assert!(v["psd_margin"].as_f64().unwrap() < 0.0);
    assert!(String::from_utf8_lossy(&o.stderr).contains("infeasible"));
}

#[test]
fn feasible_certificate_exits_0() {
    let o = sapd(&["tune", "--profile", BILINEAR, "--mode", "scsc"]);
    let v = stdout_json(&o);
    let arg = |k: &str| v[k].as_f64().unwrap().to_string();
    let o = sapd(&[
        "certify", "--profile", BILINEAR, "--tau", &arg("tau"), "--sigma", &arg("sigma"), "--theta", &arg("theta"), "--rho",
        &arg("rho"),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn bench_writes_manifest_and_consistent_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL_BENCH);
    let out = tmp.path().join("run");
    let o = sapd(&["bench", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let m = read_json(&out.join("manifest.json"));
    assert_eq!(m["command"], "bench");
    assert_eq!(m["status"], "success");
    assert_eq!(m["config"]["paths"], 6);
    assert_eq!(m["config_sha256"].as_str().unwrap().len(), 64);
    let outputs: Vec<&str> = m["outputs"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    for f in ["traces.csv", "summary.csv", "final.json"] {
        assert!(outputs.contains(&f), "{f} missing from {outputs:?}");
    }

    let traces: Vec<TraceRow> = read_csv(&out.join("traces.csv")).unwrap();
    assert_eq!(traces.len(), 3 * 6 * 7);
    let summary: Vec<SummaryRow> = read_csv(&out.join("summary.csv")).unwrap();
    let recomputed = summarize(&traces);
    assert_eq!(summary.len(), recomputed.len());
    for (a, b) in summary.iter().zip(&recomputed) {
        assert_eq!((&a.solver, a.k, a.paths), (&b.solver, b.k, b.paths));
        for (x, y) in [(a.mean_dist_sq, b.mean_dist_sq), (a.median_dist_sq, b.median_dist_sq), (a.se_dist_sq, b.se_dist_sq)] {
            assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0), "{x} vs {y}");
        }
    }

    let again = sapd(&["bench", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&again), 2, "existing run directories are not overwritten");
}

#[test]
fn bench_rejects_zero_paths() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL_BENCH);
    let o = sapd(&["bench", "--config", &cfg, "--paths", "0", "--out", tmp.path().join("r").to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    let unknown = write_config(tmp.path(), &SMALL_BENCH.replace("\"paths\": 6", "\"paths\": 6, \"path\": 1"));
    assert_eq!(code(&sapd(&["bench", "--config", &unknown, "--out", tmp.path().join("u").to_str().unwrap()])), 2);
}

#[test]
fn bench_per_path_traces() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL_BENCH);
    let out = tmp.path().join("run");
    let o = sapd(&["bench", "--config", &cfg, "--paths", "2", "--per-path", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let n = std::fs::read_dir(out.join("traces")).unwrap().count();
    assert_eq!(n, 3 * 2);
}

#[test]
fn solve_is_byte_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL_BENCH);
    let run = |name: &str| {
        let out = tmp.path().join(name);
        let o = sapd(&["solve", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let (a, b) = (run("a"), run("b"));
    let mut files: Vec<_> = std::fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    files.sort();
    assert!(files.len() >= 5);
    for f in files.iter().filter(|f| *f != "manifest.json") {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f:?} differs");
    }
    let fin = read_json(&a.join("final.json"));
    for s in fin.as_array().unwrap() {
        assert!(s["final_dist_sq"].as_f64().unwrap().is_finite());
        assert!(s["average_gap"].as_f64().unwrap() >= -1e-9);
    }
}

#[test]
fn threads_do_not_change_results() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL_BENCH);
    let run = |name: &str, threads: &str| {
        let out = tmp.path().join(name);
        let o = sapd(&["--threads", threads, "bench", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0);
        std::fs::read(out.join("traces.csv")).unwrap()
    };
    assert_eq!(run("one", "1"), run("four", "4"));
}

#[test]
fn scan_smoke() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("scan");
    let o = sapd(&["scan", "--dim", "8", "--counts", "8", "8", "4", "--bins", "20", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout_json(&o);
    let rho = s["min_rho_true"].as_f64().unwrap();
    assert!(rho > 0.0 && rho < 1.0);
    assert_eq!(s["points"].as_u64().unwrap() + s["unstable"].as_u64().unwrap(), 8 * 8 * 4);
    for f in ["points.csv", "envelope.csv", "levels.csv", "summary.json", "manifest.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn pareto_smoke() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("pareto");
    let o = sapd(&[
        "pareto", "--dim", "8", "--rho", "0.95,0.99", "--k-c", "10", "--k-theta", "20", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows: Vec<std::collections::HashMap<String, String>> = read_csv(&out.join("pareto.csv")).unwrap();
    assert_eq!(rows.len(), 2);
    for r in &rows {
        let rho: f64 = r["rho"].parse().unwrap();
        let rho_true: f64 = r["rho_true"].parse().unwrap();
        let j: f64 = r["j"].parse().unwrap();
        let r_bar: f64 = r["r_bar"].parse().unwrap();
        assert!(rho_true <= rho + 1e-9);
        assert!(j <= r_bar * (1.0 + 1e-9));
    }
    let o = sapd(&["pareto", "--profile", BILINEAR, "--rho", "0.8", "--out", tmp.path().join("bad").to_str().unwrap()]);
    assert_eq!(code(&o), 1, "a rate below rho* cannot be tuned");
}

#[test]
fn project_smoke() {
    let tmp = tempfile::tempdir().unwrap();
    let req = tmp.path().join("req.json");
    std::fs::write(&req, r#"{"v": [1.0, 0.0], "set": {"kind": "simplex-ball", "radius": 0.1414213562373095}}"#).unwrap();
    let o = sapd(&["project", "--input", req.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let v = stdout_json(&o);
    assert!((v["p"][0].as_f64().unwrap() - 0.6).abs() < 1e-12);
    assert!(v["kkt_residual"].as_f64().unwrap() < 1e-12);

    std::fs::write(&req, r#"{"v": [3.0, 4.0], "set": {"kind": "ball", "radius": 1.0}}"#).unwrap();
    let v = stdout_json(&sapd(&["project", "--input", req.to_str().unwrap()]));
    assert!((v["p"][0].as_f64().unwrap() - 0.6).abs() < 1e-12);

    std::fs::write(&req, r#"{"v": [1.0], "set": {"kind": "cube"}}"#).unwrap();
    assert_eq!(code(&sapd(&["project", "--input", req.to_str().unwrap()])), 2);
}

#[test]
fn dro_smoke() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("dro");
    let o = sapd(&[
        "dro", "--synthetic", "200,5,0,3", "--mu-x", "0.01", "--eps", "1", "--iters", "500", "--paths", "2", "--record-every", "100",
        "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let fin = read_json(&out.join("final.json"));
    assert_eq!(fin["n_train"], 160);
    assert_eq!(fin["n_holdout"], 40);
    assert_eq!(fin["paths"].as_array().unwrap().len(), 2);
    let trace = std::fs::read_to_string(out.join("traces/path_0000.csv")).unwrap();
    assert_eq!(trace.lines().next().unwrap(), "k,dist_sq,train_err,test_err");
    assert_eq!(trace.lines().count(), 1 + 6);

    let csv = tmp.path().join("data.csv");
    std::fs::write(&csv, "a,b,label\n0,1,1\n1,0,-1\n0.5,0.5,1\n1,1,-1\n0.2,0.9,1\n").unwrap();
    let o = sapd(&[
        "dro", "--data", csv.to_str().unwrap(), "--mu-x", "0.1", "--holdout", "0", "--iters", "50", "--paths", "1", "--out",
        tmp.path().join("csv").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    assert_eq!(code(&sapd(&["dro", "--mu-x", "0.1"])), 2, "a data source is required");
    let o = sapd(&["dro", "--synthetic", "50,3,0,1", "--mu-x", "-1", "--out", tmp.path().join("neg").to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn shipped_configs_run() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let tmp = tempfile::tempdir().unwrap();
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_stem().unwrap().to_str().unwrap().to_string();
        let out = tmp.path().join(&name);
        let o = sapd(&["bench", "--config", path.to_str().unwrap(), "--iters", "20", "--paths", "2", "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{name}: {}", String::from_utf8_lossy(&o.stderr));
    }
}
