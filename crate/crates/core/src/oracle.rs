//! Ground truth for the approximate solvers: the soft fixed point, the best
//! approximation within the feature span, and numeric checks of the error
//! bounds that relate the two to the residual objective.

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::mdp::{QTable, TabularMdp, Temperature};
use crate::norms::{effective_contraction_rate, sup_norm, weighted_lp_norm, EvenP, WeightVector};
use crate::psbrm::SoftResidual;
use crate::regression::{lp_regression, LpSolverOptions};

/// Relative slack allowed when checking an inequality.
pub const BOUND_REL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointResult {
    pub q_star: QTable,
    pub iterations: usize,
    /// `‖Q_{k+1} − Q_k‖_∞` at the last step.
    pub final_sup_gap: f64,
    /// Sup gap of every step, in order.
    pub gaps: Vec<f64>,
}

/// Soft value iteration from `Q_0 = 0`.
pub fn soft_fixed_point(mdp: &TabularMdp, lambda: Temperature, tol: f64, max_iter: usize) -> Result<FixedPointResult> {
    soft_fixed_point_from(mdp, lambda, QTable::zeros(mdp.n()), tol, max_iter)
}

/// Soft value iteration `Q_{k+1} = F_λ Q_k`, stopped once
/// `‖Q_{k+1} − Q_k‖_∞ ≤ tol·(1−γ)/γ`, which bounds `‖F_λ Q − Q‖_∞` by `tol·(1−γ)`.
pub fn soft_fixed_point_from(
    mdp: &TabularMdp,
    lambda: Temperature,
    q0: QTable,
    tol: f64,
    max_iter: usize,
) -> Result<FixedPointResult> {
    mdp.check_q(&q0)?;
    if !(tol > 0.0) || max_iter == 0 {
        return Err(Error::Config(format!("fixed point needs tol > 0 and max_iter >= 1 (got {tol}, {max_iter})")));
    }
    let gamma = mdp.discount();
    let stop = if gamma > 0.0 { tol * (1.0 - gamma) / gamma } else { tol };
    let mut q = q0;
    let mut gaps = Vec::new();
    for k in 1..=max_iter {
        let next = mdp.soft_backup(lambda, &q);
        let gap = sup_norm(&(&next - &q));
        q = next;
        gaps.push(gap);
        if gap <= stop {
            return Ok(FixedPointResult {
                q_star: q,
                iterations: k,
                final_sup_gap: gap,
                gaps,
            });
        }
    }
    let final_sup_gap = *gaps.last().unwrap_or(&f64::INFINITY);
    Err(Error::FixedPointNotConverged(Box::new(FixedPointResult {
        q_star: q,
        iterations: max_iter,
        final_sup_gap,
        gaps,
    })))
}

/// `argmin_θ ‖Φθ − q_target‖_{p,w}` to scaled-gradient tolerance `tol`.
pub fn best_approximation(
    q_target: &QTable,
    phi: &FeatureMap,
    p: EvenP,
    w: &WeightVector,
    tol: f64,
) -> Result<DVector<f64>> {
    let opts = LpSolverOptions {
        tol,
        ..LpSolverOptions::default()
    };
    Ok(lp_regression(phi, w, q_target, p, opts, None)?.theta)
}

/// Outcome of checking `lhs ≤ rhs`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundReport {
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub satisfied: bool,
}

impl BoundReport {
    pub fn new(lhs: f64, rhs: f64) -> Self {
        let slack = rhs - lhs;
        Self {
            lhs,
            rhs,
            slack,
            satisfied: slack >= -BOUND_REL_TOL * rhs.abs().max(1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SandwichReport {
    pub lower: BoundReport,
    pub upper: BoundReport,
}

impl SandwichReport {
    pub fn satisfied(&self) -> bool {
        self.lower.satisfied && self.upper.satisfied
    }
}

/// Checks `(1−γ_{p,w})‖Q_θ − Q*‖ ≤ ‖δ_θ‖ ≤ (1+γ_{p,w})‖Q_θ − Q*‖` in `‖·‖_{p,w}`.
///
/// This is the p-th root of the bound on `f_p(θ) = ‖δ_θ‖^p / p`; the root form
/// stays finite for large `p`.
pub fn check_sandwich(
    theta: &DVector<f64>,
    residual: &SoftResidual<'_>,
    p: EvenP,
    w: &WeightVector,
    q_star: &QTable,
) -> Result<SandwichReport> {
    let mdp = residual.mdp();
    let gamma_pw = regime(mdp.discount(), p, mdp.n(), w)?;
    residual.phi().check_theta(theta)?;
    mdp.check_q(q_star)?;
    let q = residual.phi().apply(theta);
    let j_p = weighted_lp_norm(&residual.residual_of_q(&q), p.norm(), w)?;
    let dist = weighted_lp_norm(&(q - q_star), p.norm(), w)?;
    Ok(SandwichReport {
        lower: BoundReport::new((1.0 - gamma_pw) * dist, j_p),
        upper: BoundReport::new(j_p, (1.0 + gamma_pw) * dist),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuasiOptimalityReport {
    /// `‖Q_{θ*} − Q*‖ ≤ C(p) · ‖Q_{θ̄} − Q*‖`.
    pub quasi_optimality: BoundReport,
    /// `‖Q_{θ̄} − Q_{θ*}‖ ≤ (1 + C(p)) · ‖Q_{θ̄} − Q*‖`.
    pub comparison: BoundReport,
    pub c_p: f64,
    pub best_error: f64,
}

impl QuasiOptimalityReport {
    pub fn satisfied(&self) -> bool {
        self.quasi_optimality.satisfied && self.comparison.satisfied
    }
}

/// Checks the quasi-optimality and best-approximation comparison bounds for a
/// solver output `theta_solution` against the best approximation `theta_best`.
pub fn check_quasi_optimality(
    theta_solution: &DVector<f64>,
    theta_best: &DVector<f64>,
    q_star: &QTable,
    phi: &FeatureMap,
    p: EvenP,
    w: &WeightVector,
    gamma_pw: f64,
) -> Result<QuasiOptimalityReport> {
    if !(gamma_pw < 1.0) {
        return Err(Error::OutOfRegime { gamma_pw });
    }
    phi.check_theta(theta_solution)?;
    phi.check_theta(theta_best)?;
    let c_p = (1.0 + gamma_pw) / (1.0 - gamma_pw);
    let q_sol = phi.apply(theta_solution);
    let q_best = phi.apply(theta_best);
    let norm = |x: DVector<f64>| weighted_lp_norm(&x, p.norm(), w);
    let best_error = norm(&q_best - q_star)?;
    let solution_error = norm(&q_sol - q_star)?;
    let deviation = norm(q_best - q_sol)?;
    Ok(QuasiOptimalityReport {
        quasi_optimality: BoundReport::new(solution_error, c_p * best_error),
        comparison: BoundReport::new(deviation, (1.0 + c_p) * best_error),
        c_p,
        best_error,
    })
}

fn regime(gamma: f64, p: EvenP, n: usize, w: &WeightVector) -> Result<f64> {
    let gamma_pw = effective_contraction_rate(gamma, p.norm(), n, w);
    if gamma_pw < 1.0 {
        Ok(gamma_pw)
    } else {
        Err(Error::OutOfRegime { gamma_pw })
    }
}
