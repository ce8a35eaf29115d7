use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn config_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/experiment.json")
}

fn psbrm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_psbrm"))
        .arg("--quiet")
        .args(args)
        .output()
        .unwrap()
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Writes a reduced copy of the pinned config with `patch` merged on top.
fn small_config(dir: &Path, patch: Value) -> PathBuf {
    let mut cfg: Value = serde_json::from_str(&std::fs::read_to_string(config_path()).unwrap()).unwrap();
    for run in cfg["compare"].as_array_mut().unwrap() {
        run["max_iter"] = json!(50);
    }
    for run in cfg["ablation"].as_array_mut().unwrap() {
        run["max_iter"] = json!(50);
    }
    cfg["seed_candidates"] = json!([9]);
    for (k, v) in patch.as_object().unwrap() {
        cfg[k] = v.clone();
    }
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(str::to_owned).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(str::to_owned).collect())
        .collect();
    (header, rows)
}

#[test]
fn malformed_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    let out = psbrm(&["compare", "--config", arg(&bad), "--out", arg(dir.path())]);
    assert_eq!(out.status.code(), Some(2));

    let odd = small_config(dir.path(), json!({ "ablation": [{"id": "x", "p": 3, "step": {"kind": "constant", "alpha": 0.1}, "max_iter": 5}] }));
    let out = psbrm(&["ablate", "--config", arg(&odd), "--out", arg(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}

#[test]
fn missing_config_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    let out = psbrm(&["fixed-point", "--config", arg(&missing), "--out", arg(dir.path())]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn unwritable_output_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let cfg = small_config(dir.path(), json!({}));
    let out = psbrm(&["fixed-point", "--config", arg(&cfg), "--out", arg(&blocker.join("sub"))]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn non_finite_psbrm_run_exits_3_after_writing_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(
        dir.path(),
        json!({ "compare": [{
            "algorithm": "psbrm", "id": "blowup", "p": 2,
            "step": {"kind": "constant", "alpha": 1.7e308}, "max_iter": 50
        }] }),
    );
    let out_dir = dir.path().join("out");
    let out = psbrm(&["solve", "--config", arg(&cfg), "--out", arg(&out_dir)]);
    assert_eq!(out.status.code(), Some(3));
    let (_, rows) = read_csv(&out_dir.join("blowup.csv"));
    assert_eq!(rows.last().unwrap()[6], "1");
    assert!(rows[..rows.len() - 1].iter().all(|r| r[6] == "0"));
    let meta = read_json(&out_dir.join("blowup.meta.json"));
    assert_eq!(meta["run"]["termination"], "diverged");
}

#[test]
fn solve_writes_csv_meta_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), json!({ "log_every": 10 }));
    let out_dir = dir.path().join("out");
    let out = psbrm(&["solve", "--config", arg(&cfg), "--out", arg(&out_dir), "--run", "psbrm_p80"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = read_csv(&out_dir.join("psbrm_p80.csv"));
    assert_eq!(header, ["iteration", "f_p", "J_p", "J_inf", "err_linf", "err_l2u", "diverged_flag"]);
    let ks: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(ks, ["0", "10", "20", "30", "40", "50"]);
    assert!(out_dir.join("psbrm_p80.plot.py").exists());

    let meta = read_json(&out_dir.join("psbrm_p80.meta.json"));
    assert_eq!(meta["tool"], "psbrm");
    assert_eq!(meta["tool_version"], env!("CARGO_PKG_VERSION"));
    assert!(meta["rng"].as_str().unwrap().starts_with("xoshiro256++"));
    assert_eq!(meta["phi_seed"], 9);
    assert_eq!(meta["run"]["p"], 80);
    assert_eq!(meta["run"]["regime"]["in_regime"], true);
    assert_eq!(meta["weights_defaulted_uniform"], true);
    assert_eq!(meta["config_hash_sha256"].as_str().unwrap().len(), 64);

    // a PVI id is not solvable
    let out = psbrm(&["solve", "--config", arg(&cfg), "--out", arg(&out_dir), "--run", "l2_pvi"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), json!({}));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(psbrm(&["solve", "--config", arg(&cfg), "--out", arg(&a)]).status.success());
    assert!(psbrm(&["solve", "--config", arg(&cfg), "--out", arg(&b), "--seed", "3"]).status.success());
    let ma = read_json(&a.join("l2_sbrm.meta.json"));
    let mb = read_json(&b.join("l2_sbrm.meta.json"));
    assert_eq!(mb["phi_seed"], 3);
    assert_ne!(ma["config_hash_sha256"], mb["config_hash_sha256"]);
    assert_ne!(std::fs::read(a.join("l2_sbrm.csv")).unwrap(), std::fs::read(b.join("l2_sbrm.csv")).unwrap());
}

#[test]
fn cp_curve_marks_regime_and_decreases() {
    let dir = tempfile::tempdir().unwrap();
    let out = psbrm(&["cp-curve", "--out", arg(dir.path()), "--points", "200"]);
    assert!(out.status.success());
    let (header, rows) = read_csv(&dir.path().join("cp_curve.csv"));
    assert_eq!(header, ["p", "gamma_pw", "C_p"]);
    assert_eq!(rows.len(), 200);
    let meta = read_json(&dir.path().join("cp_curve.meta.json"));
    let p_bar = meta["p_bar"].as_f64().unwrap();
    assert!((p_bar - 48.44506).abs() < 1e-4);
    let mut prev = f64::INFINITY;
    for r in &rows {
        let p: f64 = r[0].parse().unwrap();
        if p <= p_bar {
            assert_eq!(r[2], "out_of_regime", "p = {p}");
        } else {
            let c: f64 = r[2].parse().unwrap();
            assert!(c < prev);
            prev = c;
        }
    }
    assert!((prev - 39.0).abs() / 39.0 < 0.02);

    let out = psbrm(&["cp-curve", "--out", arg(dir.path()), "--p-min", "10", "--p-max", "5"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn ablation_summary_marks_p32_out_of_regime() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), json!({}));
    let out = psbrm(&["ablate", "--config", arg(&cfg), "--out", arg(dir.path())]);
    assert!(out.status.success());
    let (header, rows) = read_csv(&dir.path().join("ablation_summary.csv"));
    assert_eq!(header[..3], ["p", "gamma_pw", "C_p"]);
    let ps: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(ps, ["2", "8", "32", "80"]);
    for r in &rows[..3] {
        assert_eq!(r[2], "out_of_regime");
    }
    let c80: f64 = rows[3][2].parse().unwrap();
    assert!((c80 - 98.85686).abs() < 1e-4);
    let meta = read_json(&dir.path().join("ablation_p32.meta.json"));
    assert_eq!(meta["run"]["regime"]["C_p"], "out_of_regime");
    assert!(meta["run"]["theorem_checks"].is_null());
}

#[test]
fn p2_ablation_matches_l2_sbrm_comparison_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), json!({}));
    for sub in ["compare", "ablate"] {
        assert!(psbrm(&[sub, "--config", arg(&cfg), "--out", arg(dir.path())]).status.success());
    }
    let a = std::fs::read(dir.path().join("ablation_p2.csv")).unwrap();
    let b = std::fs::read(dir.path().join("l2_sbrm.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn fixed_point_and_probe_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), json!({ "probe": {"p": 80, "trials": 20, "seed": 7} }));
    assert!(psbrm(&["fixed-point", "--config", arg(&cfg), "--out", arg(dir.path())]).status.success());
    let (header, rows) = read_csv(&dir.path().join("fixed_point.csv"));
    assert_eq!(header, ["state", "action", "q"]);
    assert_eq!(rows.len(), 12);
    assert_eq!(rows[5][..2], ["2", "1"]);
    assert!(rows.iter().all(|r| r[2].parse::<f64>().unwrap().is_finite()));

    assert!(psbrm(&["probe-projection", "--config", arg(&cfg), "--out", arg(dir.path())]).status.success());
    let probe = read_json(&dir.path().join("probe.json"));
    assert_eq!(probe["probe"]["settings"]["trials"], 20);
    let ratio = probe["probe"]["max_ratio"].as_f64().unwrap();
    assert_eq!(probe["probe"]["expansive"], ratio > 1.0);

    let no_probe = small_config(dir.path(), json!({ "probe": null }));
    let out = psbrm(&["probe-projection", "--config", arg(&no_probe), "--out", arg(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn search_seed_writes_scores() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), json!({}));
    assert!(psbrm(&["search-seed", "--config", arg(&cfg), "--out", arg(dir.path())]).status.success());
    let v = read_json(&dir.path().join("seed_search.json"));
    assert_eq!(v["scores"].as_array().unwrap().len(), 1);
    assert_eq!(v["scores"][0]["phi_seed"], 9);
}
