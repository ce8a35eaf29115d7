//! Soft Bellman residual minimization in weighted L_p norms.
//!
//! For `Q_θ = Φθ` the residual is `δ_θ = F_λ(Φθ) − Φθ` and the objective is
//! `f_p(θ) = (1/p) Σ_i w_i δ_i^p` for even `p`. Its Jacobian goes through the
//! Boltzmann policy of `Q_θ`:
//!
//! ```text
//! ∇_θ δ_θ = (γ P Π^{π_θ} − I) Φ,     ∇f_p = (∇_θ δ_θ)ᵀ (w ∘ δ^{p−1})
//! ```
//!
//! [`run_psbrm`] descends along the normalized direction that replaces `δ` by
//! `δ / ‖δ‖_∞` inside the power, a positive rescaling of `∇f_p` that keeps
//! every factor in `[−1, 1]` regardless of `p`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::mdp::{boltzmann_policy, QTable, TabularMdp, Temperature};
use crate::norms::{sup_norm, weighted_lp_norm, EvenP, WeightVector};
use crate::rng::SeedStream;
use crate::trajectory::{ErrorToFixedPoint, IterateRecord, RunTrajectory, Termination};

/// The map `θ ↦ F_λ(Φθ) − Φθ` and its derivatives.
#[derive(Debug, Clone, Copy)]
pub struct SoftResidual<'a> {
    mdp: &'a TabularMdp,
    lambda: Temperature,
    phi: &'a FeatureMap,
}

impl<'a> SoftResidual<'a> {
    pub fn new(mdp: &'a TabularMdp, lambda: Temperature, phi: &'a FeatureMap) -> Result<Self> {
        if phi.n() != mdp.n() {
            return Err(Error::DimensionMismatch {
                expected: mdp.n(),
                found: phi.n(),
            });
        }
        Ok(Self { mdp, lambda, phi })
    }

    pub fn mdp(&self) -> &'a TabularMdp {
        self.mdp
    }

    pub fn phi(&self) -> &'a FeatureMap {
        self.phi
    }

    pub fn lambda(&self) -> Temperature {
        self.lambda
    }

    pub fn residual(&self, theta: &DVector<f64>) -> DVector<f64> {
        let q = self.phi.apply(theta);
        self.residual_of_q(&q)
    }

    pub fn residual_of_q(&self, q: &QTable) -> DVector<f64> {
        self.mdp.soft_backup(self.lambda, q) - q
    }

    /// `(γ P Π^{π_θ} − I) Φ`, an `n × d` matrix.
    pub fn jacobian(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let q = self.phi.apply(theta);
        let policy = boltzmann_policy(&q, self.lambda, self.mdp.num_actions());
        let averaged = policy.averaging_operator() * self.phi.matrix();
        let mut jac = self.mdp.transition_operator() * averaged;
        jac *= self.mdp.discount();
        jac - self.phi.matrix()
    }

    pub fn objective(&self, theta: &DVector<f64>, p: EvenP, w: &WeightVector) -> f64 {
        objective_from_residual(&self.residual(theta), p, w)
    }

    /// Exact `∇f_p(θ)`.
    pub fn gradient(&self, theta: &DVector<f64>, p: EvenP, w: &WeightVector) -> DVector<f64> {
        let delta = self.residual(theta);
        let k = p.as_i32() - 1;
        let u = DVector::from_fn(delta.len(), |i, _| w.as_vector()[i] * delta[i].powi(k));
        self.jacobian(theta).transpose() * u
    }

    /// `∇f_p(θ) / ‖δ_θ‖_∞^{p−1}`; zero when the residual vanishes.
    pub fn normalized_gradient(&self, theta: &DVector<f64>, p: EvenP, w: &WeightVector) -> DVector<f64> {
        let delta = self.residual(theta);
        self.normalized_gradient_with(theta, &delta, p, w)
    }

    fn normalized_gradient_with(
        &self,
        theta: &DVector<f64>,
        delta: &DVector<f64>,
        p: EvenP,
        w: &WeightVector,
    ) -> DVector<f64> {
        let m = sup_norm(delta);
        if m == 0.0 {
            return DVector::zeros(self.phi.d());
        }
        let k = p.as_i32() - 1;
        let u = DVector::from_fn(delta.len(), |i, _| w.as_vector()[i] * (delta[i] / m).powi(k));
        self.jacobian(theta).transpose() * u
    }

    pub fn functionals(&self, theta: &DVector<f64>, p: EvenP, w: &WeightVector) -> ResidualFunctionals {
        ResidualFunctionals::of_residual(&self.residual(theta), p, w)
    }
}

fn objective_from_residual(delta: &DVector<f64>, p: EvenP, w: &WeightVector) -> f64 {
    let k = p.as_i32();
    let s: f64 = delta
        .iter()
        .zip(w.as_vector().iter())
        .map(|(d, wi)| wi * d.powi(k))
        .sum();
    s / p.as_f64()
}

/// `J_p = ‖δ‖_{p,w}`, `J_∞ = ‖δ‖_∞` and the envelope bounding their gap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResidualFunctionals {
    pub j_p: f64,
    pub j_inf: f64,
    /// `max{n^{1/p} w_max^{1/p} − 1, 1 − w_min^{1/p}} · J_∞`.
    pub gap_bound: f64,
}

impl ResidualFunctionals {
    pub fn of_residual(delta: &DVector<f64>, p: EvenP, w: &WeightVector) -> Self {
        let j_p = weighted_lp_norm(delta, p.norm(), w).expect("residual and weights share length");
        let j_inf = sup_norm(delta);
        let inv = 1.0 / p.as_f64();
        let n = delta.len() as f64;
        let factor = ((n * w.max()).powf(inv) - 1.0).max(1.0 - w.min().powf(inv));
        Self {
            j_p,
            j_inf,
            gap_bound: factor * j_inf,
        }
    }

    pub fn gap(&self) -> f64 {
        (self.j_p - self.j_inf).abs()
    }
}

pub fn bellman_residual(theta: &DVector<f64>, mdp: &TabularMdp, lambda: Temperature, phi: &FeatureMap) -> Result<DVector<f64>> {
    phi.check_theta(theta)?;
    Ok(SoftResidual::new(mdp, lambda, phi)?.residual(theta))
}

pub fn objective_fp(
    theta: &DVector<f64>,
    mdp: &TabularMdp,
    lambda: Temperature,
    phi: &FeatureMap,
    p: EvenP,
    w: &WeightVector,
) -> Result<f64> {
    phi.check_theta(theta)?;
    Ok(SoftResidual::new(mdp, lambda, phi)?.objective(theta, p, w))
}

pub fn residual_jacobian(theta: &DVector<f64>, mdp: &TabularMdp, lambda: Temperature, phi: &FeatureMap) -> Result<DMatrix<f64>> {
    phi.check_theta(theta)?;
    Ok(SoftResidual::new(mdp, lambda, phi)?.jacobian(theta))
}

pub fn gradient_fp(
    theta: &DVector<f64>,
    mdp: &TabularMdp,
    lambda: Temperature,
    phi: &FeatureMap,
    p: EvenP,
    w: &WeightVector,
) -> Result<DVector<f64>> {
    phi.check_theta(theta)?;
    Ok(SoftResidual::new(mdp, lambda, phi)?.gradient(theta, p, w))
}

pub fn normalized_gradient(
    theta: &DVector<f64>,
    mdp: &TabularMdp,
    lambda: Temperature,
    phi: &FeatureMap,
    p: EvenP,
    w: &WeightVector,
) -> Result<DVector<f64>> {
    phi.check_theta(theta)?;
    Ok(SoftResidual::new(mdp, lambda, phi)?.normalized_gradient(theta, p, w))
}

pub fn residual_functionals(
    theta: &DVector<f64>,
    mdp: &TabularMdp,
    lambda: Temperature,
    phi: &FeatureMap,
    p: EvenP,
    w: &WeightVector,
) -> Result<ResidualFunctionals> {
    phi.check_theta(theta)?;
    Ok(SoftResidual::new(mdp, lambda, phi)?.functionals(theta, p, w))
}

/// Step size rule `α_k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepSchedule {
    Constant { alpha: f64 },
    /// `α_k = alpha · decay^k`.
    Geometric { alpha: f64, decay: f64 },
}

impl StepSchedule {
    pub fn at(&self, k: usize) -> f64 {
        match *self {
            Self::Constant { alpha } => alpha,
            Self::Geometric { alpha, decay } => alpha * decay.powi(k.min(i32::MAX as usize) as i32),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Self::Constant { alpha } => alpha.is_finite() && alpha > 0.0,
            Self::Geometric { alpha, decay } => alpha.is_finite() && alpha > 0.0 && decay > 0.0 && decay <= 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid step schedule {self:?}")))
        }
    }
}

/// How `θ_0` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Initialization {
    #[default]
    Zero,
    /// Standard normal entries drawn from the run seed.
    Normal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsbrmConfig {
    pub p: EvenP,
    pub lambda: Temperature,
    pub weights: WeightVector,
    pub step: StepSchedule,
    pub max_iter: usize,
    pub grad_tol: f64,
    pub residual_tol: f64,
    pub init: Initialization,
    pub seed: u64,
}

impl PsbrmConfig {
    pub fn validate(&self) -> Result<()> {
        self.step.validate()?;
        if !(self.grad_tol >= 0.0) || !(self.residual_tol >= 0.0) {
            return Err(Error::Config("tolerances must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn initial_theta(&self, d: usize) -> DVector<f64> {
        match self.init {
            Initialization::Zero => DVector::zeros(d),
            Initialization::Normal => SeedStream::new(self.seed).normal_vector(d),
        }
    }
}

/// Normalized gradient descent on `f_p`.
///
/// Every iterate is recorded; with `q_star` the records also carry the
/// distance to the fixed point.
pub fn run_psbrm(
    mdp: &TabularMdp,
    phi: &FeatureMap,
    config: &PsbrmConfig,
    q_star: Option<&QTable>,
) -> Result<RunTrajectory> {
    config.validate()?;
    if config.weights.len() != mdp.n() {
        return Err(Error::DimensionMismatch {
            expected: mdp.n(),
            found: config.weights.len(),
        });
    }
    if let Some(q) = q_star {
        mdp.check_q(q)?;
    }
    let model = SoftResidual::new(mdp, config.lambda, phi)?;
    let p = config.p;
    let w = &config.weights;
    let mut theta = config.initial_theta(phi.d());
    let mut records = Vec::with_capacity(config.max_iter.min(1 << 20) + 1);

    let termination = loop {
        let k = records.len();
        let q = phi.apply(&theta);
        let delta = model.residual_of_q(&q);
        let fun = ResidualFunctionals::of_residual(&delta, p, w);
        let mut record = IterateRecord {
            k,
            theta: Some(theta.clone()),
            f_p: objective_from_residual(&delta, p, w),
            j_p: fun.j_p,
            j_inf: fun.j_inf,
            error: q_star.map(|qs| ErrorToFixedPoint::between(&q, qs, p.norm(), w)),
            grad_norm: None,
        };
        if !fun.j_inf.is_finite() || theta.iter().any(|v| !v.is_finite()) {
            records.push(record);
            break Termination::Diverged;
        }
        if fun.j_inf <= config.residual_tol {
            records.push(record);
            break Termination::ResidualTolerance;
        }
        if k >= config.max_iter {
            records.push(record);
            break Termination::MaxIterations;
        }
        let direction = model.normalized_gradient_with(&theta, &delta, p, w);
        let gn = direction.norm();
        record.grad_norm = Some(gn);
        records.push(record);
        if gn <= config.grad_tol {
            break Termination::GradientTolerance;
        }
        theta.axpy(-config.step.at(k), &direction, 1.0);
    };
    Ok(RunTrajectory { records, termination })
}
