use nalgebra::DVector;
use serde::Serialize;

use crate::mdp::QTable;
use crate::norms::{sup_norm, weighted_lp_norm, PNorm, WeightVector};

/// Why an iterative run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GradientTolerance,
    ResidualTolerance,
    /// `‖Q_{k+1} − Q_k‖_∞` fell below the fixed-point tolerance (projected iteration only).
    FixedPointTolerance,
    MaxIterations,
    Diverged,
}

/// One iterate of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct IterateRecord {
    pub k: usize,
    /// Absent only for an initial Q-table that is not expressed in features.
    pub theta: Option<DVector<f64>>,
    /// `(1/p) Σ w_i δ_i^p` with `δ = F_λ Q − Q`.
    pub f_p: f64,
    /// `‖δ‖_{p,w}`.
    pub j_p: f64,
    /// `‖δ‖_∞`.
    pub j_inf: f64,
    pub error: Option<ErrorToFixedPoint>,
    pub grad_norm: Option<f64>,
}

/// Distance of an iterate to the oracle fixed point, in the run's norm and in
/// the two fixed reporting norms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorToFixedPoint {
    pub pw: f64,
    pub linf: f64,
    pub l2_uniform: f64,
}

impl ErrorToFixedPoint {
    pub fn between(q: &QTable, q_star: &QTable, p: PNorm, w: &WeightVector) -> Self {
        let diff = q - q_star;
        let uniform = WeightVector::uniform(diff.len());
        Self {
            pw: weighted_lp_norm(&diff, p, w).unwrap_or(f64::NAN),
            linf: sup_norm(&diff),
            l2_uniform: weighted_lp_norm(&diff, PNorm::new(2.0).unwrap(), &uniform).unwrap_or(f64::NAN),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrajectory {
    pub records: Vec<IterateRecord>,
    pub termination: Termination,
}

impl RunTrajectory {
    pub fn diverged(&self) -> bool {
        self.termination == Termination::Diverged
    }

    pub fn last(&self) -> &IterateRecord {
        self.records.last().expect("trajectory has at least one record")
    }

    /// Last recorded parameter vector.
    pub fn final_theta(&self) -> Option<&DVector<f64>> {
        self.records.iter().rev().find_map(|r| r.theta.as_ref())
    }

    pub fn iterations(&self) -> usize {
        self.last().k
    }

    /// `‖Q_k − Q*‖_∞` per record, when an oracle was supplied.
    pub fn linf_errors(&self) -> Vec<f64> {
        self.records
            .iter()
            .filter_map(|r| r.error.map(|e| e.linf))
            .collect()
    }
}

/// Largest ratio `err_k / min_{j<k} err_j` along a trace; 1 for a nonincreasing trace.
pub fn max_upward_excursion(errors: &[f64]) -> f64 {
    let mut best = f64::INFINITY;
    let mut worst_ratio = 1.0f64;
    for &e in errors {
        if best.is_finite() && best > 0.0 {
            worst_ratio = worst_ratio.max(e / best);
        }
        best = best.min(e);
    }
    worst_ratio
}
