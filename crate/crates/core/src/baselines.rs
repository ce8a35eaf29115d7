//! Projected value iteration `Q_{k+1} = Φ · Γ_{p,w}(F_λ Q_k)` and a probe for
//! the expansiveness of the metric projection `Γ_{p,w}`.
//!
//! The L2 variant of soft residual minimization is [`crate::psbrm::run_psbrm`]
//! with `p = 2`; there is no separate code path for it.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::mdp::{QTable, TabularMdp, Temperature};
use crate::norms::{sup_norm, weighted_lp_norm, EvenP, WeightVector};
use crate::psbrm::{ResidualFunctionals, SoftResidual};
use crate::regression::{lp_regression, weighted_least_squares, LpSolverOptions};
use crate::rng::SeedStream;
use crate::trajectory::{ErrorToFixedPoint, IterateRecord, RunTrajectory, Termination};

/// `‖Q_{k+1} − Q_k‖_∞` below which projected iteration has reached its fixed point.
pub const PVI_FIXED_POINT_TOL: f64 = 1e-10;

/// Default cap on `‖Q_k‖_∞` beyond which a run is declared diverged.
pub const DEFAULT_DIVERGENCE_THRESHOLD: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum Projection {
    /// Closed-form weighted least squares.
    L2,
    /// Iterative weighted L_p regression.
    Lpw { p: EvenP },
}

impl Projection {
    pub fn p(&self) -> EvenP {
        match *self {
            Projection::L2 => EvenP::TWO,
            Projection::Lpw { p } => p,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PviConfig {
    pub projection: Projection,
    pub weights: WeightVector,
    pub lambda: Temperature,
    pub max_iter: usize,
    pub divergence_threshold: f64,
    pub inner: LpSolverOptions,
}

/// `Γ_{2,w}(q)` in parameter space: `(ΦᵀWΦ)^{-1}ΦᵀW q`.
pub fn l2w_projection(q_target: &QTable, phi: &FeatureMap, w: &WeightVector) -> Result<DVector<f64>> {
    weighted_least_squares(phi, w, q_target)
}

/// `Γ_{p,w}(q)` in parameter space, to scaled-gradient tolerance `inner_tol`.
pub fn lpw_projection(
    q_target: &QTable,
    phi: &FeatureMap,
    p: EvenP,
    w: &WeightVector,
    inner_tol: f64,
) -> Result<DVector<f64>> {
    let opts = LpSolverOptions {
        tol: inner_tol,
        ..LpSolverOptions::default()
    };
    Ok(lp_regression(phi, w, q_target, p, opts, None)?.theta)
}

fn project(
    projection: Projection,
    q: &QTable,
    phi: &FeatureMap,
    w: &WeightVector,
    inner: LpSolverOptions,
    warm: Option<&DVector<f64>>,
) -> Result<DVector<f64>> {
    match projection {
        Projection::L2 => l2w_projection(q, phi, w),
        Projection::Lpw { p } => Ok(lp_regression(phi, w, q, p, inner, warm)?.theta),
    }
}

/// Runs projected soft value iteration from `q0`.
///
/// Records carry the residual functionals in the projection's own exponent
/// and, when `q_star` is given, the distance to it.
pub fn pvi_iterate(
    mdp: &TabularMdp,
    phi: &FeatureMap,
    config: &PviConfig,
    q0: &QTable,
    q_star: Option<&QTable>,
) -> Result<RunTrajectory> {
    mdp.check_q(q0)?;
    if let Some(q) = q_star {
        mdp.check_q(q)?;
    }
    if config.weights.len() != mdp.n() {
        return Err(Error::DimensionMismatch {
            expected: mdp.n(),
            found: config.weights.len(),
        });
    }
    if !(config.divergence_threshold > 0.0) {
        return Err(Error::Config("divergence threshold must be positive".into()));
    }
    let model = SoftResidual::new(mdp, config.lambda, phi)?;
    let p = config.projection.p();
    let w = &config.weights;

    let record = |k: usize, q: &QTable, theta: Option<DVector<f64>>| {
        let delta = model.residual_of_q(q);
        let fun = ResidualFunctionals::of_residual(&delta, p, w);
        let f_p = delta
            .iter()
            .zip(w.as_vector().iter())
            .map(|(d, wi)| wi * d.powi(p.as_i32()))
            .sum::<f64>()
            / p.as_f64();
        IterateRecord {
            k,
            theta,
            f_p,
            j_p: fun.j_p,
            j_inf: fun.j_inf,
            error: q_star.map(|qs| ErrorToFixedPoint::between(q, qs, p.norm(), w)),
            grad_norm: None,
        }
    };

    let mut q = q0.clone();
    let mut theta: Option<DVector<f64>> = q0.iter().all(|&v| v == 0.0).then(|| DVector::zeros(phi.d()));
    let mut records = Vec::new();
    let mut k = 0;
    let termination = loop {
        let diverged = q.iter().any(|v| !v.is_finite()) || sup_norm(&q) > config.divergence_threshold;
        records.push(record(k, &q, theta.clone()));
        if diverged {
            break Termination::Diverged;
        }
        if k >= config.max_iter {
            break Termination::MaxIterations;
        }
        let target = mdp.soft_backup(config.lambda, &q);
        let next_theta = project(config.projection, &target, phi, w, config.inner, theta.as_ref()).map_err(|e| match e {
            Error::InnerSolver {
                iterations, grad_norm, ..
            } => Error::InnerSolver {
                iterations,
                grad_norm,
                outer_iteration: Some(k),
            },
            e => e,
        })?;
        let next_q = phi.apply(&next_theta);
        let gap = sup_norm(&(&next_q - &q));
        q = next_q;
        theta = Some(next_theta);
        k += 1;
        if gap <= PVI_FIXED_POINT_TOL {
            records.push(record(k, &q, theta.clone()));
            break Termination::FixedPointTolerance;
        }
    };
    Ok(RunTrajectory { records, termination })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbeResult {
    /// `max ‖Γ(Q) − Γ(Q')‖_{p,w} / ‖Q − Q'‖_{p,w}` over the sampled pairs.
    pub max_ratio: f64,
    /// Pairs that contributed (pairs with `Q = Q'` are skipped).
    pub pairs: usize,
}

/// Samples `num_trials` pairs `(Q, Q')` and reports the largest expansion of
/// the `L_{p,w}` metric projection onto the feature span.
///
/// `Q` is standard normal scaled by 3; `Q' = Q + 10^u · ξ` with `u` uniform on
/// `[−2, 0.5]` and `ξ` standard normal, so both distant and nearby pairs occur.
pub fn expansiveness_probe(
    phi: &FeatureMap,
    p: EvenP,
    w: &WeightVector,
    num_trials: usize,
    seed: u64,
    inner_tol: f64,
) -> Result<ProbeResult> {
    if num_trials == 0 {
        return Err(Error::Config("probe needs at least one trial".into()));
    }
    let mut rng = SeedStream::new(seed);
    let n = phi.n();
    let mut max_ratio = 0.0f64;
    let mut pairs = 0;
    let proj = |q: &QTable| -> Result<DVector<f64>> {
        if p == EvenP::TWO {
            l2w_projection(q, phi, w)
        } else {
            lpw_projection(q, phi, p, w, inner_tol)
        }
    };
    for _ in 0..num_trials {
        let q = rng.normal_vector(n) * 3.0;
        let scale = 10f64.powf(rng.uniform_in(-2.0, 0.5));
        let q2 = &q + rng.normal_vector(n) * scale;
        let denom = weighted_lp_norm(&(&q - &q2), p.norm(), w)?;
        if denom == 0.0 {
            continue;
        }
        let a = phi.apply(&proj(&q)?);
        let b = phi.apply(&proj(&q2)?);
        let num = weighted_lp_norm(&(a - b), p.norm(), w)?;
        max_ratio = max_ratio.max(num / denom);
        pairs += 1;
    }
    Ok(ProbeResult { max_ratio, pairs })
}
