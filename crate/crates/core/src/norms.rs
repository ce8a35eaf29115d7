//! Weighted L_p norms and the scalar contraction quantities derived from them.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Positive weights summing to one, with cached extremes.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    weights: DVector<f64>,
    min: f64,
    max: f64,
}

impl WeightVector {
    pub const SUM_TOL: f64 = 1e-12;

    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidWeights("empty weight vector".into()));
        }
        if let Some((i, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !(w.is_finite() && **w > 0.0))
        {
            return Err(Error::InvalidWeights(format!("w[{i}] = {w} is not positive")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOL {
            return Err(Error::InvalidWeights(format!("weights sum to {sum}")));
        }
        let min = weights.iter().copied().fold(f64::INFINITY, f64::min);
        let max = weights.iter().copied().fold(0.0, f64::max);
        Ok(Self {
            weights: DVector::from_vec(weights),
            min,
            max,
        })
    }

    /// Rescales positive entries to sum to one.
    pub fn normalized(raw: Vec<f64>) -> Result<Self> {
        let sum: f64 = raw.iter().sum();
        if !(sum.is_finite() && sum > 0.0) {
            return Err(Error::InvalidWeights(format!("weights sum to {sum}")));
        }
        Self::new(raw.into_iter().map(|w| w / sum).collect())
    }

    pub fn uniform(n: usize) -> Self {
        assert!(n > 0);
        let w = 1.0 / n as f64;
        Self {
            weights: DVector::from_element(n, w),
            min: w,
            max: w,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn is_uniform(&self) -> bool {
        self.min == self.max
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn min(&self) -> f64 {
        self.min
    }

    pub fn max(&self) -> f64 {
        self.max
    }

    /// `w_max / w_min`.
    pub fn spread(&self) -> f64 {
        self.max / self.min
    }
}

/// Norm exponent `p > 1`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
pub struct PNorm(f64);

impl PNorm {
    pub fn new(p: f64) -> Result<Self> {
        if p.is_finite() && p > 1.0 {
            Ok(Self(p))
        } else {
            Err(Error::InvalidExponent(p, "must be finite and > 1"))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// The exponent as an integer, if it is one.
    pub fn as_integer(self) -> Option<i32> {
        (self.0.fract() == 0.0 && self.0 <= i32::MAX as f64).then_some(self.0 as i32)
    }
}

impl From<EvenP> for PNorm {
    fn from(p: EvenP) -> Self {
        PNorm(p.0 as f64)
    }
}

/// Even integer exponent `p ≥ 2`; the residual objective is smooth only for these.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct EvenP(u32);

impl EvenP {
    pub const TWO: EvenP = EvenP(2);

    pub fn new(p: u32) -> Result<Self> {
        if p >= 2 && p.is_multiple_of(2) && p <= i32::MAX as u32 {
            Ok(Self(p))
        } else {
            Err(Error::InvalidExponent(p as f64, "solver needs an even integer >= 2"))
        }
    }

    pub fn get(self) -> u32 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64
    }

    pub fn as_i32(self) -> i32 {
        self.0 as i32
    }

    pub fn norm(self) -> PNorm {
        self.into()
    }
}

impl From<EvenP> for u32 {
    fn from(p: EvenP) -> u32 {
        p.0
    }
}

impl TryFrom<u32> for EvenP {
    type Error = Error;
    fn try_from(p: u32) -> Result<Self> {
        Self::new(p)
    }
}

#[inline]
pub(crate) fn pow_abs(x: f64, p: PNorm) -> f64 {
    let a = x.abs();
    match p.as_integer() {
        Some(k) => a.powi(k),
        None if a > 0.0 => (p.0 * a.ln()).exp(),
        None => 0.0,
    }
}

pub fn sup_norm(x: &DVector<f64>) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// `(Σ w_i |x_i|^p)^{1/p}`, evaluated on `x / ‖x‖_∞` so that large `p` neither
/// overflows nor underflows.
pub fn weighted_lp_norm(x: &DVector<f64>, p: PNorm, w: &WeightVector) -> Result<f64> {
    if x.len() != w.len() {
        return Err(Error::DimensionMismatch {
            expected: w.len(),
            found: x.len(),
        });
    }
    Ok(scaled_norm(x.iter().copied(), w.weights.iter().copied(), p))
}

/// Unweighted `(Σ |x_i|^p)^{1/p}`.
pub fn lp_norm(x: &DVector<f64>, p: PNorm) -> f64 {
    scaled_norm(x.iter().copied(), std::iter::repeat(1.0), p)
}

fn scaled_norm(x: impl Iterator<Item = f64> + Clone, w: impl Iterator<Item = f64>, p: PNorm) -> f64 {
    let m = x.clone().fold(0.0, |m: f64, v| m.max(v.abs()));
    if m == 0.0 || !m.is_finite() {
        return m;
    }
    let s: f64 = x.zip(w).map(|(v, wi)| wi * pow_abs(v / m, p)).sum();
    m * s.powf(1.0 / p.0)
}

/// `γ_{p,w} = γ · n^{1/p} · (w_max / w_min)^{1/p}`.
pub fn effective_contraction_rate(gamma: f64, p: PNorm, n: usize, w: &WeightVector) -> f64 {
    gamma * (n as f64 * w.spread()).powf(1.0 / p.0)
}

/// Exponent `p̄ = ln(n·w_max/w_min) / ln(1/γ)` above which `γ_{p,w} < 1`.
///
/// Returns 0 when every `p` contracts (`γ = 0`, or `n = 1` with uniform weights).
pub fn contraction_threshold(gamma: f64, n: usize, w: &WeightVector) -> f64 {
    let a = n as f64 * w.spread();
    if gamma == 0.0 || a <= 1.0 {
        return 0.0;
    }
    a.ln() / (1.0 / gamma).ln()
}

/// Quasi-optimality constant `C(p)`, or the out-of-regime marker when `γ_{p,w} ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "regime", rename_all = "snake_case")]
pub enum QuasiOptimality {
    InRegime { gamma_pw: f64, c_p: f64 },
    OutOfRegime { gamma_pw: f64 },
}

impl QuasiOptimality {
    pub fn gamma_pw(&self) -> f64 {
        match *self {
            Self::InRegime { gamma_pw, .. } | Self::OutOfRegime { gamma_pw } => gamma_pw,
        }
    }

    pub fn constant(&self) -> Option<f64> {
        match *self {
            Self::InRegime { c_p, .. } => Some(c_p),
            Self::OutOfRegime { .. } => None,
        }
    }

    pub fn in_regime(&self) -> bool {
        matches!(self, Self::InRegime { .. })
    }

    pub fn require(self) -> Result<(f64, f64)> {
        match self {
            Self::InRegime { gamma_pw, c_p } => Ok((gamma_pw, c_p)),
            Self::OutOfRegime { gamma_pw } => Err(Error::OutOfRegime { gamma_pw }),
        }
    }
}

/// `C(p) = (1 + γ_{p,w}) / (1 − γ_{p,w})`.
pub fn quasi_optimality_constant(gamma: f64, p: PNorm, n: usize, w: &WeightVector) -> QuasiOptimality {
    let gamma_pw = effective_contraction_rate(gamma, p, n, w);
    if gamma_pw < 1.0 {
        QuasiOptimality::InRegime {
            gamma_pw,
            c_p: (1.0 + gamma_pw) / (1.0 - gamma_pw),
        }
    } else {
        QuasiOptimality::OutOfRegime { gamma_pw }
    }
}

/// `lim_{p→∞} C(p) = (1 + γ)/(1 − γ)`.
pub fn limiting_constant(gamma: f64) -> f64 {
    (1.0 + gamma) / (1.0 - gamma)
}
