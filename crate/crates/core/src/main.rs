use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{error, info, warn};
use serde_json::json;

use psbrm_core::experiment::{self, output, Experiment, ExperimentConfig, RunOutcome, RunSpec};
use psbrm_core::norms::{contraction_threshold, limiting_constant, WeightVector};
use psbrm_core::{Error, Result};

const EXIT_INVALID_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;
const EXIT_IO: u8 = 4;

/// Soft Bellman residual minimization experiments.
#[derive(Parser)]
#[command(name = "psbrm", version)]
struct Cli {
    /// Only log errors.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the config's feature seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// One PSBRM run from the config's `compare` list.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Run id; defaults to the first PSBRM descriptor.
        #[arg(long)]
        run: Option<String>,
    },
    /// All runs in `compare`.
    Compare {
        #[command(flatten)]
        common: Common,
    },
    /// All runs in `ablation`, plus a summary table.
    Ablate {
        #[command(flatten)]
        common: Common,
    },
    /// γ_{p,w} and C(p) over log-spaced p.
    CpCurve {
        /// Takes γ, n and weights from this config instead of the flags.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, default_value_t = 0.95)]
        gamma: f64,
        /// Dimension |S|·|A| (uniform weights).
        #[arg(long, default_value_t = 12)]
        n: usize,
        #[arg(long, default_value_t = 2.0)]
        p_min: f64,
        #[arg(long, default_value_t = 5000.0)]
        p_max: f64,
        #[arg(long, default_value_t = 400)]
        points: usize,
    },
    /// Empirical expansiveness of the L_{p,w} projection onto the feature span.
    ProbeProjection {
        #[command(flatten)]
        common: Common,
    },
    /// Dumps the soft fixed point Q*.
    FixedPoint {
        #[command(flatten)]
        common: Common,
    },
    /// Scores the config's `seed_candidates` against the qualitative targets.
    SearchSeed {
        #[command(flatten)]
        common: Common,
    },
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.phi_seed = seed;
    }
    Ok(cfg)
}

fn prepare(common: &Common) -> Result<Experiment> {
    let exp = Experiment::prepare(load(common)?)?;
    info!(
        "Φ seed {} (used {}), p̄ = {:.6}, oracle converged in {} sweeps",
        exp.config.phi_seed,
        exp.phi_seed_used,
        exp.contraction_threshold(),
        exp.fixed_point.iterations
    );
    Ok(exp)
}

fn report(outcome: &RunOutcome, path: &Path) {
    let last = outcome.trajectory.last();
    info!(
        "{:<16} {:?} after {} iterations, err_inf = {:.6e} -> {}",
        outcome.spec.label(),
        outcome.trajectory.termination,
        outcome.trajectory.iterations(),
        last.error.map_or(f64::NAN, |e| e.linf),
        path.display()
    );
    if let Some(c) = outcome.checks {
        if !c.all_satisfied() {
            warn!("{}: theorem checks not satisfied: {c:?}", outcome.id());
        }
    }
}

/// Writes every outcome, then fails if any PSBRM run produced non-finite iterates.
fn write_all(out: &Path, exp: &Experiment, outcomes: &[RunOutcome]) -> Result<()> {
    for o in outcomes {
        let path = output::write_run(out, exp, o)?;
        report(o, &path);
    }
    if let Some(bad) = outcomes.iter().find(|o| o.is_failure()) {
        return Err(Error::Diverged {
            run: bad.id().to_owned(),
            iteration: bad.trajectory.iterations(),
        });
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Solve { common, run } => {
            let exp = prepare(&common)?;
            let spec = exp
                .config
                .compare
                .iter()
                .find(|s| match &run {
                    Some(id) => s.id() == id,
                    None => matches!(s, RunSpec::Psbrm(_)),
                })
                .filter(|s| matches!(s, RunSpec::Psbrm(_)))
                .cloned()
                .ok_or_else(|| Error::Config(format!("no PSBRM run {run:?} in compare")))?;
            let outcome = exp.run(&spec)?;
            write_all(&common.out, &exp, std::slice::from_ref(&outcome))
        }
        Command::Compare { common } => {
            let exp = prepare(&common)?;
            let outcomes = exp.compare()?;
            write_all(&common.out, &exp, &outcomes)
        }
        Command::Ablate { common } => {
            let exp = prepare(&common)?;
            let outcomes = exp.ablate()?;
            write_all(&common.out, &exp, &outcomes)?;
            let path = output::write_ablation_summary(&common.out, &exp, &outcomes)?;
            info!("summary -> {}", path.display());
            Ok(())
        }
        Command::CpCurve {
            config,
            out,
            gamma,
            n,
            p_min,
            p_max,
            points,
        } => {
            let (gamma, n, w) = match config {
                Some(path) => {
                    let cfg = ExperimentConfig::load(path)?;
                    let exp = Experiment::prepare(cfg)?;
                    (exp.mdp.discount(), exp.mdp.n(), exp.weights)
                }
                None => (gamma, n, WeightVector::uniform(n.max(1))),
            };
            let rows = experiment::cp_curve(gamma, n, &w, p_min, p_max, points)?;
            let meta = json!({
                "tool": output::TOOL_NAME,
                "tool_version": output::TOOL_VERSION,
                "gamma": gamma,
                "n": n,
                "weights": w.as_vector().as_slice(),
                "p_min": p_min,
                "p_max": p_max,
                "points": points,
                "p_bar": contraction_threshold(gamma, n, &w),
                "C_limit": limiting_constant(gamma),
            });
            let path = out.join("cp_curve.csv");
            output::write_cp_curve(&path, &rows, meta)?;
            info!("{} rows -> {}", rows.len(), path.display());
            Ok(())
        }
        Command::ProbeProjection { common } => {
            let exp = prepare(&common)?;
            let result = exp
                .probe()?
                .ok_or_else(|| Error::Config("config has no probe section".into()))?;
            let path = output::write_probe(&common.out, &exp, &result)?;
            info!("max ratio {:.12} over {} pairs -> {}", result.max_ratio, result.pairs, path.display());
            Ok(())
        }
        Command::FixedPoint { common } => {
            let exp = prepare(&common)?;
            let path = output::write_fixed_point(&common.out, &exp)?;
            info!("Q* -> {}", path.display());
            Ok(())
        }
        Command::SearchSeed { common } => {
            let cfg = load(&common)?;
            let scores = experiment::search_seeds(&cfg)?;
            std::fs::create_dir_all(&common.out)?;
            let path = common.out.join("seed_search.json");
            let accepted: Vec<u64> = scores.iter().filter(|s| s.accepted()).map(|s| s.phi_seed).collect();
            let text = serde_json::to_string_pretty(&json!({ "scores": scores, "accepted": accepted }))?;
            std::fs::write(&path, text + "\n")?;
            for s in &scores {
                info!("{s:?} accepted={}", s.accepted());
            }
            info!("{} of {} seeds accepted -> {}", accepted.len(), scores.len(), path.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            let code = if e.is_io() {
                EXIT_IO
            } else if e.is_invalid_input() {
                EXIT_INVALID_CONFIG
            } else {
                EXIT_RUNTIME
            };
            ExitCode::from(code)
        }
    }
}
