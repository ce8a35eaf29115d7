//! CSV artifacts, JSON metadata sidecars and plotting scripts.
//!
//! Reals are written with 17 significant digits so they round-trip; nothing
//! time- or host-dependent is written, so reruns are byte-identical.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use super::{CpPoint, Experiment, RunOutcome, RunSpec};
use crate::baselines::ProbeResult;
use crate::error::Result;
use crate::norms::QuasiOptimality;
use crate::rng::GENERATOR_NAME;

pub const TOOL_NAME: &str = "psbrm";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const RUN_COLUMNS: [&str; 7] = ["iteration", "f_p", "J_p", "J_inf", "err_linf", "err_l2u", "diverged_flag"];

pub fn real(x: f64) -> String {
    format!("{x:.16e}")
}

fn sidecar(csv: &Path, suffix: &str) -> PathBuf {
    let stem = csv.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    csv.with_file_name(format!("{stem}{suffix}"))
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn regime_json(q: &QuasiOptimality) -> Value {
    match q.constant() {
        Some(c) => json!({"gamma_pw": q.gamma_pw(), "C_p": c, "in_regime": true}),
        None => json!({"gamma_pw": q.gamma_pw(), "C_p": "out_of_regime", "in_regime": false}),
    }
}

/// Fields shared by every artifact derived from `exp`.
pub fn experiment_metadata(exp: &Experiment) -> Value {
    json!({
        "tool": TOOL_NAME,
        "tool_version": TOOL_VERSION,
        "config": exp.config,
        "config_hash_sha256": exp.config_hash,
        "rng": GENERATOR_NAME,
        "phi_seed": exp.config.phi_seed,
        "phi_seed_used": exp.phi_seed_used,
        "phi_shape": [exp.phi.n(), exp.phi.d()],
        "lambda": exp.lambda.value(),
        "weights": exp.weights.as_vector().as_slice(),
        "weights_defaulted_uniform": exp.config.weights.is_uniform(),
        "gamma": exp.mdp.discount(),
        "p_bar": exp.contraction_threshold(),
        "oracle": {
            "tol": exp.config.oracle_tol,
            "iterations": exp.fixed_point.iterations,
            "final_sup_gap": exp.fixed_point.final_sup_gap,
        },
    })
}

pub fn run_metadata(exp: &Experiment, outcome: &RunOutcome) -> Value {
    let mut meta = experiment_metadata(exp);
    let last = outcome.trajectory.last();
    meta["run"] = json!({
        "id": outcome.id(),
        "label": outcome.spec.label(),
        "descriptor": outcome.spec,
        "p": outcome.p.get(),
        "regime": regime_json(&outcome.regime),
        "termination": outcome.trajectory.termination,
        "iterations": outcome.trajectory.iterations(),
        "final": {
            "J_p": last.j_p,
            "J_inf": last.j_inf,
            "err_linf": last.error.map(|e| e.linf),
            "err_l2u": last.error.map(|e| e.l2_uniform),
        },
        "theorem_checks": outcome.checks.map(|c| json!({
            "all_satisfied": c.all_satisfied(),
            "detail": c,
        })),
        "seed": match &outcome.spec {
            RunSpec::Psbrm(s) => Some(s.seed),
            RunSpec::Pvi(_) => None,
        },
    });
    meta
}

/// Writes `<id>.csv`, `<id>.meta.json` and `<id>.plot.py` under `dir`.
pub fn write_run(dir: &Path, exp: &Experiment, outcome: &RunOutcome) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(format!("{}.csv", outcome.id()));
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(RUN_COLUMNS)?;
    let every = exp.config.log_every;
    let records = &outcome.trajectory.records;
    let diverged = outcome.trajectory.diverged();
    for (i, r) in records.iter().enumerate() {
        let is_last = i + 1 == records.len();
        if r.k % every != 0 && !is_last {
            continue;
        }
        let (linf, l2u) = r.error.map_or((f64::NAN, f64::NAN), |e| (e.linf, e.l2_uniform));
        w.write_record([
            r.k.to_string(),
            real(r.f_p),
            real(r.j_p),
            real(r.j_inf),
            real(linf),
            real(l2u),
            u8::from(diverged && is_last).to_string(),
        ])?;
    }
    w.flush()?;
    write_json(&sidecar(&path, ".meta.json"), &run_metadata(exp, outcome))?;
    fs::write(sidecar(&path, ".plot.py"), run_plot_script(&path, &outcome.spec.label()))?;
    Ok(path)
}

/// Summary of an ablation: one row per run, ordered by `p`.
pub fn write_ablation_summary(dir: &Path, exp: &Experiment, outcomes: &[RunOutcome]) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join("ablation_summary.csv");
    let mut rows: Vec<&RunOutcome> = outcomes.iter().collect();
    rows.sort_by_key(|o| o.p);
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record([
        "p",
        "gamma_pw",
        "C_p",
        "final_err_linf",
        "final_err_l2u",
        "final_J_inf",
        "iterations",
        "termination",
    ])?;
    for o in &rows {
        let last = o.trajectory.last();
        let (linf, l2u) = last.error.map_or((f64::NAN, f64::NAN), |e| (e.linf, e.l2_uniform));
        w.write_record([
            o.p.get().to_string(),
            real(o.regime.gamma_pw()),
            o.regime.constant().map_or_else(|| "out_of_regime".to_owned(), real),
            real(linf),
            real(l2u),
            real(last.j_inf),
            o.trajectory.iterations().to_string(),
            serde_json::to_value(o.trajectory.termination)?
                .as_str()
                .unwrap_or_default()
                .to_owned(),
        ])?;
    }
    w.flush()?;
    let mut meta = experiment_metadata(exp);
    meta["runs"] = rows.iter().map(|o| Value::from(o.id())).collect();
    write_json(&sidecar(&path, ".meta.json"), &meta)?;
    fs::write(sidecar(&path, ".plot.py"), ablation_plot_script(&path))?;
    Ok(path)
}

pub fn write_cp_curve(path: &Path, rows: &[CpPoint], meta: Value) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["p", "gamma_pw", "C_p"])?;
    for r in rows {
        w.write_record([
            real(r.p),
            real(r.gamma_pw),
            r.c_p.map_or_else(|| "out_of_regime".to_owned(), real),
        ])?;
    }
    w.flush()?;
    write_json(&sidecar(path, ".meta.json"), &meta)?;
    fs::write(sidecar(path, ".plot.py"), cp_plot_script(path))?;
    Ok(())
}

/// `fixed_point.csv`: `state, action, q`.
pub fn write_fixed_point(dir: &Path, exp: &Experiment) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join("fixed_point.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["state", "action", "q"])?;
    let a = exp.mdp.num_actions();
    for (i, q) in exp.q_star().iter().enumerate() {
        w.write_record([(i / a).to_string(), (i % a).to_string(), real(*q)])?;
    }
    w.flush()?;
    write_json(&sidecar(&path, ".meta.json"), &experiment_metadata(exp))?;
    Ok(path)
}

pub fn write_probe(dir: &Path, exp: &Experiment, result: &ProbeResult) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join("probe.json");
    let mut meta = experiment_metadata(exp);
    meta["probe"] = json!({
        "settings": exp.config.probe,
        "max_ratio": result.max_ratio,
        "pairs": result.pairs,
        "expansive": result.max_ratio > 1.0,
    });
    write_json(&path, &meta)?;
    Ok(path)
}

fn file_name(path: &Path) -> String {
    path.file_name().and_then(|s| s.to_str()).unwrap_or_default().to_owned()
}

fn run_plot_script(csv: &Path, label: &str) -> String {
    format!(
        r#"import csv
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))
with open(os.path.join(here, "{name}")) as f:
    rows = list(csv.DictReader(f))
k = [int(r["iteration"]) for r in rows]
fig, ax = plt.subplots(figsize=(6, 4))
ax.semilogy(k, [float(r["err_linf"]) for r in rows], label="sup-norm error")
ax.semilogy(k, [float(r["err_l2u"]) for r in rows], label="uniform L2 error", linestyle="--")
ax.set_xlabel("iteration")
ax.set_ylabel("error to soft fixed point")
ax.set_title("{label}")
ax.legend()
fig.tight_layout()
fig.savefig(os.path.join(here, "{stem}.png"), dpi=150)
"#,
        name = file_name(csv),
        stem = csv.file_stem().and_then(|s| s.to_str()).unwrap_or("out"),
    )
}

fn ablation_plot_script(csv: &Path) -> String {
    format!(
        r#"import csv
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))
with open(os.path.join(here, "{name}")) as f:
    rows = list(csv.DictReader(f))
p = [int(r["p"]) for r in rows]
fig, ax = plt.subplots(figsize=(6, 4))
ax.plot(p, [float(r["final_err_linf"]) for r in rows], marker="o", label="sup-norm error")
ax.plot(p, [float(r["final_err_l2u"]) for r in rows], marker="s", linestyle="--", label="uniform L2 error")
ax.set_xscale("log", base=2)
ax.set_xlabel("p")
ax.set_ylabel("final error")
ax.legend()
fig.tight_layout()
fig.savefig(os.path.join(here, "ablation_summary.png"), dpi=150)
"#,
        name = file_name(csv),
    )
}

fn cp_plot_script(csv: &Path) -> String {
    format!(
        r#"import csv
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))
with open(os.path.join(here, "{name}")) as f:
    rows = [r for r in csv.DictReader(f) if r["C_p"] != "out_of_regime"]
fig, ax = plt.subplots(figsize=(6, 4))
ax.plot([float(r["p"]) for r in rows], [float(r["C_p"]) for r in rows])
ax.set_xscale("log")
ax.set_yscale("log")
ax.set_xlabel("p")
ax.set_ylabel("C(p)")
fig.tight_layout()
fig.savefig(os.path.join(here, "{stem}.png"), dpi=150)
"#,
        name = file_name(csv),
        stem = csv.file_stem().and_then(|s| s.to_str()).unwrap_or("cp_curve"),
    )
}
