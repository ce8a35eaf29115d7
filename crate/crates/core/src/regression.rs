//! Weighted L_p regression onto a feature span.
//!
//! Both the metric projection used by projected value iteration and the
//! best-approximation oracle reduce to `min_θ (1/p) Σ w_i (Φθ − q)_i^p` for an
//! even `p`. The closed form handles `p = 2`; larger `p` uses damped Newton on
//! residuals rescaled by their sup norm.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::norms::{sup_norm, weighted_lp_norm, EvenP, WeightVector};

/// Condition estimate above which a normal or Hessian matrix is treated as singular.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Residual sup norm, relative to `1 + ‖q‖_∞`, treated as exact representation.
const EXACT_RESIDUAL: f64 = 1e-12;

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;

#[derive(Debug, Clone, PartialEq)]
pub struct LpFit {
    pub theta: DVector<f64>,
    pub iterations: usize,
    /// `‖Σ_i w_i r̃_i^{p−1} Φ_i‖_2` with `r̃ = r / ‖r‖_∞` (zero for an exact fit).
    pub scaled_grad_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LpSolverOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LpSolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 10_000,
        }
    }
}

/// `(ΦᵀWΦ)^{-1} ΦᵀW q`.
pub fn weighted_least_squares(phi: &FeatureMap, w: &WeightVector, q: &DVector<f64>) -> Result<DVector<f64>> {
    check_dims(phi, w, q)?;
    let m = phi.matrix();
    let mut weighted = m.clone();
    for (i, mut row) in weighted.row_iter_mut().enumerate() {
        row *= w.as_vector()[i];
    }
    let normal = m.transpose() * &weighted;
    let rhs = weighted.transpose() * q;
    let eig = SymmetricEigen::new(normal.clone());
    let (lo, hi) = eig
        .eigenvalues
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if condition > CONDITION_LIMIT {
        return Err(Error::Singular { condition });
    }
    normal
        .cholesky()
        .map(|c| c.solve(&rhs))
        .ok_or(Error::Singular { condition })
}

/// Scaled gradient `Σ_i w_i r̃_i^{p−1} Φ_i` at `θ`, with `r̃ = (Φθ − q)/‖Φθ − q‖_∞`.
pub fn scaled_gradient(
    phi: &FeatureMap,
    w: &WeightVector,
    q: &DVector<f64>,
    p: EvenP,
    theta: &DVector<f64>,
) -> DVector<f64> {
    let r = phi.apply(theta) - q;
    let s = sup_norm(&r);
    if s == 0.0 {
        return DVector::zeros(phi.d());
    }
    let k = p.as_i32() - 1;
    let u = DVector::from_fn(r.len(), |i, _| w.as_vector()[i] * (r[i] / s).powi(k));
    phi.matrix().transpose() * u
}

/// Minimizes `‖Φθ − q‖_{p,w}` for even `p`.
///
/// The search starts from the better (in `‖·‖_{p,w}`) of the weighted
/// least-squares fit and `warm_start`.
pub fn lp_regression(
    phi: &FeatureMap,
    w: &WeightVector,
    q: &DVector<f64>,
    p: EvenP,
    opts: LpSolverOptions,
    warm_start: Option<&DVector<f64>>,
) -> Result<LpFit> {
    let ls = weighted_least_squares(phi, w, q)?;
    if p == EvenP::TWO {
        let scaled_grad_norm = scaled_gradient(phi, w, q, p, &ls).norm();
        return Ok(LpFit {
            theta: ls,
            iterations: 0,
            scaled_grad_norm,
        });
    }
    let pn = p.norm();
    let mut theta = ls;
    if let Some(warm) = warm_start {
        phi.check_theta(warm)?;
        let err = |t: &DVector<f64>| weighted_lp_norm(&(phi.apply(t) - q), pn, w).unwrap_or(f64::INFINITY);
        if err(warm) < err(&theta) {
            theta = warm.clone();
        }
    }

    let m = phi.matrix();
    let wv = w.as_vector();
    let exact = EXACT_RESIDUAL * (1.0 + sup_norm(q));
    let pf = p.as_f64();
    let ki = p.as_i32();
    let mut grad_norm = f64::INFINITY;

    for it in 0..opts.max_iter {
        let r = m * &theta - q;
        let s = sup_norm(&r);
        if s <= exact {
            return Ok(LpFit {
                theta,
                iterations: it,
                scaled_grad_norm: 0.0,
            });
        }
        let rt = &r / s;
        let u = DVector::from_fn(rt.len(), |i, _| wv[i] * rt[i].powi(ki - 1));
        let g = m.transpose() * &u;
        grad_norm = g.norm();
        if grad_norm <= opts.tol {
            return Ok(LpFit {
                theta,
                iterations: it,
                scaled_grad_norm: grad_norm,
            });
        }
        let h = DVector::from_fn(rt.len(), |i, _| (pf - 1.0) * wv[i] * rt[i].powi(ki - 2));
        let dir = damped_newton_direction(m, &h, &g);
        let slope = g.dot(&dir);
        // Objective in units of s: (1/p) Σ w ((r + t Φ d s)/s)^p.
        let phi_dir = m * &dir;
        let f0: f64 = rt.iter().zip(wv.iter()).map(|(x, wi)| wi * x.powi(ki)).sum::<f64>() / pf;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_BACKTRACKS {
            let ft: f64 = rt
                .iter()
                .zip(phi_dir.iter())
                .zip(wv.iter())
                .map(|((x, dx), wi)| wi * (x + t * dx).powi(ki))
                .sum::<f64>()
                / pf;
            if ft <= f0 + ARMIJO * t * slope {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // No representable decrease left: the iterate is at working precision.
            return Ok(LpFit {
                theta,
                iterations: it,
                scaled_grad_norm: grad_norm,
            });
        }
        theta += dir * (t * s);
    }
    Err(Error::InnerSolver {
        iterations: opts.max_iter,
        grad_norm,
        outer_iteration: None,
    })
}

/// Newton direction for `H = Φᵀ diag(h) Φ`, with eigenvalues floored at
/// `λ_max / CONDITION_LIMIT` when the Hessian is ill-conditioned.
fn damped_newton_direction(m: &DMatrix<f64>, h: &DVector<f64>, g: &DVector<f64>) -> DVector<f64> {
    let mut hm = m.clone();
    for (i, mut row) in hm.row_iter_mut().enumerate() {
        row *= h[i];
    }
    let hess = m.transpose() * hm;
    let eig = SymmetricEigen::new(hess);
    let lmax = eig.eigenvalues.max();
    if !(lmax > 0.0) {
        return -g.clone();
    }
    let floor = lmax / CONDITION_LIMIT;
    let coeffs = eig.eigenvectors.transpose() * g;
    let scaled = DVector::from_fn(coeffs.len(), |j, _| coeffs[j] / eig.eigenvalues[j].max(floor));
    -(eig.eigenvectors * scaled)
}

fn check_dims(phi: &FeatureMap, w: &WeightVector, q: &DVector<f64>) -> Result<()> {
    if q.len() != phi.n() {
        return Err(Error::DimensionMismatch {
            expected: phi.n(),
            found: q.len(),
        });
    }
    if w.len() != phi.n() {
        return Err(Error::DimensionMismatch {
            expected: phi.n(),
            found: w.len(),
        });
    }
    Ok(())
}
