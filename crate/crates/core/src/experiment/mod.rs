//! Experiment driver behind the `psbrm` binary: a shared (MDP, Φ, Q*) setup,
//! method comparison, p-ablation, the C(p) curve and feature-seed search.

mod benchmark;
mod config;
pub mod output;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

pub use benchmark::benchmark_mdp;
pub use config::{
    psbrm_config, pvi_config, ExperimentConfig, MdpSource, ProbeSpec, PsbrmRunSpec, PviRunSpec, RunSpec, WeightsSpec,
};

use crate::baselines::{expansiveness_probe, pvi_iterate, ProbeResult};
use crate::error::{Error, Result};
use crate::features::{random_feature_matrix, FeatureMap};
use crate::mdp::{QTable, TabularMdp, Temperature};
use crate::norms::{
    contraction_threshold, effective_contraction_rate, quasi_optimality_constant, EvenP, PNorm, QuasiOptimality,
    WeightVector,
};
use crate::oracle::{
    best_approximation, check_quasi_optimality, check_sandwich, soft_fixed_point, FixedPointResult,
    QuasiOptimalityReport,
};
use crate::psbrm::{run_psbrm, SoftResidual};
use crate::trajectory::{max_upward_excursion, RunTrajectory};

/// Scaled-gradient tolerance for the best approximation used in theorem checks.
pub const BEST_APPROXIMATION_TOL: f64 = 1e-10;

/// Everything the runs of one config share.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub mdp: TabularMdp,
    pub phi: FeatureMap,
    /// Seed that actually produced Φ (differs from `phi_seed` after a rank-deficient draw).
    pub phi_seed_used: u64,
    pub lambda: Temperature,
    pub weights: WeightVector,
    pub fixed_point: FixedPointResult,
    pub config_hash: String,
}

impl Experiment {
    pub fn prepare(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let mdp = match &config.mdp {
            MdpSource::Named(_) => benchmark_mdp(),
            MdpSource::File { path } => TabularMdp::load(path)?,
        };
        let (n, d) = config.phi_shape;
        if n != mdp.n() {
            return Err(Error::Config(format!(
                "phi_shape n = {n} but the MDP has |S|·|A| = {}",
                mdp.n()
            )));
        }
        let lambda = Temperature::new(config.lambda)?;
        let weights = config.weights.build(n)?;
        let (phi, phi_seed_used) = random_feature_matrix(config.phi_seed, n, d)?;
        let fixed_point = soft_fixed_point(&mdp, lambda, config.oracle_tol, config.oracle_max_iter)?;
        let config_hash = config.hash();
        Ok(Self {
            config,
            mdp,
            phi,
            phi_seed_used,
            lambda,
            weights,
            fixed_point,
            config_hash,
        })
    }

    pub fn q_star(&self) -> &QTable {
        &self.fixed_point.q_star
    }

    pub fn contraction_threshold(&self) -> f64 {
        contraction_threshold(self.mdp.discount(), self.mdp.n(), &self.weights)
    }

    pub fn regime(&self, p: EvenP) -> QuasiOptimality {
        quasi_optimality_constant(self.mdp.discount(), p.norm(), self.mdp.n(), &self.weights)
    }

    pub fn run(&self, spec: &RunSpec) -> Result<RunOutcome> {
        let p = spec.p()?;
        let regime = self.regime(p);
        let trajectory = match spec {
            RunSpec::Psbrm(s) => {
                let cfg = psbrm_config(s, self.lambda, self.weights.clone())?;
                run_psbrm(&self.mdp, &self.phi, &cfg, Some(self.q_star()))?
            }
            RunSpec::Pvi(s) => {
                let cfg = pvi_config(s, self.lambda, self.weights.clone());
                pvi_iterate(&self.mdp, &self.phi, &cfg, &QTable::zeros(self.mdp.n()), Some(self.q_star()))?
            }
        };
        let checks = match spec {
            RunSpec::Psbrm(_) if regime.in_regime() && !trajectory.diverged() => {
                Some(self.theorem_checks(&trajectory, p, regime.gamma_pw())?)
            }
            _ => None,
        };
        Ok(RunOutcome {
            spec: spec.clone(),
            p,
            regime,
            trajectory,
            checks,
        })
    }

    fn theorem_checks(&self, trajectory: &RunTrajectory, p: EvenP, gamma_pw: f64) -> Result<TheoremChecks> {
        let model = SoftResidual::new(&self.mdp, self.lambda, &self.phi)?;
        let q_star = self.q_star();
        let mut points = 0;
        let mut violations = 0;
        let mut min_lower_slack = f64::INFINITY;
        let mut min_upper_slack = f64::INFINITY;
        for theta in trajectory.records.iter().filter_map(|r| r.theta.as_ref()) {
            let report = check_sandwich(theta, &model, p, &self.weights, q_star)?;
            points += 1;
            if !report.satisfied() {
                violations += 1;
            }
            min_lower_slack = min_lower_slack.min(report.lower.slack);
            min_upper_slack = min_upper_slack.min(report.upper.slack);
        }
        let theta_best = best_approximation(q_star, &self.phi, p, &self.weights, BEST_APPROXIMATION_TOL)?;
        let theta_final: &DVector<f64> = trajectory
            .final_theta()
            .ok_or_else(|| Error::Shape("PSBRM trajectory without parameters".into()))?;
        let quasi =
            check_quasi_optimality(theta_final, &theta_best, q_star, &self.phi, p, &self.weights, gamma_pw)?;
        Ok(TheoremChecks {
            sandwich_points: points,
            sandwich_violations: violations,
            sandwich_min_lower_slack: min_lower_slack,
            sandwich_min_upper_slack: min_upper_slack,
            quasi_optimality: quasi,
        })
    }

    /// Runs every descriptor in `compare`, concurrently, in config order.
    pub fn compare(&self) -> Result<Vec<RunOutcome>> {
        self.config.compare.par_iter().map(|s| self.run(s)).collect()
    }

    /// Runs every descriptor in `ablation`, concurrently, in config order.
    pub fn ablate(&self) -> Result<Vec<RunOutcome>> {
        self.config
            .ablation
            .par_iter()
            .map(|s| self.run(&RunSpec::Psbrm(s.clone())))
            .collect()
    }

    pub fn probe(&self) -> Result<Option<ProbeResult>> {
        let Some(probe) = &self.config.probe else {
            return Ok(None);
        };
        let p = EvenP::new(probe.p)?;
        expansiveness_probe(&self.phi, p, &self.weights, probe.trials, probe.seed, probe.inner_tol).map(Some)
    }
}

/// Bound checks for an in-regime PSBRM run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TheoremChecks {
    /// Iterates at which the residual/error sandwich was evaluated.
    pub sandwich_points: usize,
    pub sandwich_violations: usize,
    pub sandwich_min_lower_slack: f64,
    pub sandwich_min_upper_slack: f64,
    /// Final iterate against the best approximation in the same norm.
    pub quasi_optimality: QuasiOptimalityReport,
}

impl TheoremChecks {
    pub fn all_satisfied(&self) -> bool {
        self.sandwich_violations == 0 && self.quasi_optimality.satisfied()
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub spec: RunSpec,
    pub p: EvenP,
    pub regime: QuasiOptimality,
    pub trajectory: RunTrajectory,
    pub checks: Option<TheoremChecks>,
}

impl RunOutcome {
    pub fn id(&self) -> &str {
        self.spec.id()
    }

    /// Non-finite PSBRM iterates; unlike a baseline's divergence this is a failure.
    pub fn is_failure(&self) -> bool {
        matches!(self.spec, RunSpec::Psbrm(_)) && self.trajectory.diverged()
    }

    pub fn final_linf_error(&self) -> f64 {
        self.trajectory.last().error.map_or(f64::NAN, |e| e.linf)
    }
}

/// One row of the C(p) curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CpPoint {
    pub p: f64,
    pub gamma_pw: f64,
    /// `None` out of regime.
    pub c_p: Option<f64>,
}

/// `num_points` log-spaced exponents on `[p_min, p_max]` with their γ_{p,w} and C(p).
pub fn cp_curve(gamma: f64, n: usize, w: &WeightVector, p_min: f64, p_max: f64, num_points: usize) -> Result<Vec<CpPoint>> {
    if !(p_min > 1.0) || !(p_max >= p_min) || !p_max.is_finite() {
        return Err(Error::Config(format!("cp curve needs 1 < p_min <= p_max (got {p_min}, {p_max})")));
    }
    if num_points == 0 || (num_points == 1 && p_max != p_min) {
        return Err(Error::Config("cp curve needs at least two points for a range".into()));
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidDiscount(gamma));
    }
    if w.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: w.len(),
        });
    }
    let (lo, hi) = (p_min.ln(), p_max.ln());
    (0..num_points)
        .map(|i| {
            let p = if num_points == 1 {
                p_min
            } else if i + 1 == num_points {
                p_max
            } else {
                (lo + (hi - lo) * i as f64 / (num_points - 1) as f64).exp()
            };
            let norm = PNorm::new(p)?;
            let q = quasi_optimality_constant(gamma, norm, n, w);
            Ok(CpPoint {
                p,
                gamma_pw: effective_contraction_rate(gamma, norm, n, w),
                c_p: q.constant(),
            })
        })
        .collect()
}

/// Qualitative properties a feature seed should exhibit on the comparison runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeedScore {
    pub phi_seed: u64,
    pub phi_seed_used: u64,
    pub l2_pvi_diverged: bool,
    pub psbrm_stable: bool,
    /// Largest `err_k / min_{j<k} err_j` on the Lp-PVI ‖·‖_∞ error trace.
    pub lp_pvi_excursion: f64,
    pub ablation_monotone: bool,
}

impl SeedScore {
    /// Minimum excursion counted as instability.
    pub const EXCURSION: f64 = 1.10;

    pub fn accepted(&self) -> bool {
        self.l2_pvi_diverged && self.psbrm_stable && self.lp_pvi_excursion > Self::EXCURSION && self.ablation_monotone
    }
}

/// Evaluates one prepared experiment against the qualitative targets.
///
/// Runs are identified by kind: the L2-PVI and Lp-PVI descriptors and the
/// highest-p PSBRM descriptor in `compare`, and all of `ablation`.
pub fn score(exp: &Experiment, compare: &[RunOutcome], ablation: &[RunOutcome]) -> SeedScore {
    let mut l2_pvi_diverged = false;
    let mut lp_pvi_excursion = 1.0f64;
    let mut psbrm_stable = false;
    let mut psbrm_p = 0;
    for out in compare {
        match &out.spec {
            RunSpec::Pvi(s) if s.projection.p() == EvenP::TWO => l2_pvi_diverged |= out.trajectory.diverged(),
            RunSpec::Pvi(_) => {
                lp_pvi_excursion = lp_pvi_excursion.max(max_upward_excursion(&out.trajectory.linf_errors()))
            }
            RunSpec::Psbrm(s) if s.p >= psbrm_p => {
                psbrm_p = s.p;
                psbrm_stable = !out.trajectory.diverged();
            }
            RunSpec::Psbrm(_) => {}
        }
    }
    let mut by_p: Vec<(u32, f64)> = ablation.iter().map(|o| (o.p.get(), o.final_linf_error())).collect();
    by_p.sort_by_key(|&(p, _)| p);
    let ablation_monotone = !by_p.is_empty()
        && by_p.iter().all(|(_, e)| e.is_finite())
        && by_p.windows(2).all(|w| w[1].1 <= w[0].1);
    SeedScore {
        phi_seed: exp.config.phi_seed,
        phi_seed_used: exp.phi_seed_used,
        l2_pvi_diverged,
        psbrm_stable,
        lp_pvi_excursion,
        ablation_monotone,
    }
}

/// Scores every seed in `config.seed_candidates` (the configured `phi_seed` if empty).
pub fn search_seeds(config: &ExperimentConfig) -> Result<Vec<SeedScore>> {
    let seeds = if config.seed_candidates.is_empty() {
        vec![config.phi_seed]
    } else {
        config.seed_candidates.clone()
    };
    seeds
        .par_iter()
        .map(|&seed| {
            let mut cfg = config.clone();
            cfg.phi_seed = seed;
            let exp = Experiment::prepare(cfg)?;
            let compare: Vec<RunOutcome> = exp.config.compare.iter().map(|s| exp.run(s)).collect::<Result<_>>()?;
            let ablation: Vec<RunOutcome> = exp
                .config
                .ablation
                .iter()
                .map(|s| exp.run(&RunSpec::Psbrm(s.clone())))
                .collect::<Result<_>>()?;
            Ok(score(&exp, &compare, &ablation))
        })
        .collect()
}
