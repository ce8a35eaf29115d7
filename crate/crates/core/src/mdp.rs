//! Finite discounted MDPs and the soft (log-sum-exp) Bellman operator.
//!
//! Q-functions are flat vectors of length `n = |S|·|A|` indexed state-major:
//! entry `s·|A| + a` holds `Q(s, a)`. Every module in the crate uses this layout.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A Q-function stored as a flat state-major vector.
pub type QTable = DVector<f64>;

/// Absolute tolerance on transition row sums.
pub const STOCHASTIC_TOL: f64 = 1e-12;

#[inline]
pub fn flat_index(state: usize, action: usize, num_actions: usize) -> usize {
    state * num_actions + action
}

/// Softmax temperature of the soft Bellman operator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Temperature(f64);

impl Temperature {
    pub fn new(lambda: f64) -> Result<Self> {
        if lambda.is_finite() && lambda > 0.0 {
            Ok(Self(lambda))
        } else {
            Err(Error::InvalidTemperature(lambda))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }
}

impl Default for Temperature {
    fn default() -> Self {
        Self(1.0)
    }
}

impl TryFrom<f64> for Temperature {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<Temperature> for f64 {
    fn from(t: Temperature) -> f64 {
        t.0
    }
}

/// Validated finite MDP with expected one-step rewards.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    num_states: usize,
    num_actions: usize,
    /// Row `s·|A| + a` holds `P(·|s, a)`.
    transitions: DMatrix<f64>,
    /// Flat state-major `R(s, a)`.
    rewards: DVector<f64>,
    discount: f64,
}

impl TabularMdp {
    /// Builds an MDP from the stacked transition matrix (`n × |S|`, rows in
    /// flat `(s, a)` order) and the `|S| × |A|` reward matrix.
    pub fn new(transitions: DMatrix<f64>, rewards: DMatrix<f64>, discount: f64) -> Result<Self> {
        let num_states = rewards.nrows();
        let num_actions = rewards.ncols();
        if num_states == 0 || num_actions == 0 {
            return Err(Error::Shape("MDP needs at least one state and one action".into()));
        }
        let n = num_states * num_actions;
        if transitions.nrows() != n || transitions.ncols() != num_states {
            return Err(Error::Shape(format!(
                "transition matrix is {}x{}, expected {n}x{num_states}",
                transitions.nrows(),
                transitions.ncols()
            )));
        }
        if !(0.0..1.0).contains(&discount) {
            return Err(Error::InvalidDiscount(discount));
        }
        for s in 0..num_states {
            for a in 0..num_actions {
                let row = transitions.row(flat_index(s, a, num_actions));
                let mut sum = 0.0;
                for (next, &p) in row.iter().enumerate() {
                    if !p.is_finite() {
                        return Err(Error::NonFinite {
                            what: "transition probability",
                            state: s,
                            action: a,
                        });
                    }
                    if p < 0.0 {
                        return Err(Error::NegativeProbability {
                            state: s,
                            action: a,
                            next,
                            value: p,
                        });
                    }
                    sum += p;
                }
                if (sum - 1.0).abs() > STOCHASTIC_TOL {
                    return Err(Error::NonStochasticRow {
                        state: s,
                        action: a,
                        sum,
                    });
                }
                if !rewards[(s, a)].is_finite() {
                    return Err(Error::NonFinite {
                        what: "reward",
                        state: s,
                        action: a,
                    });
                }
            }
        }
        let rewards = DVector::from_iterator(n, rewards.transpose().iter().copied());
        Ok(Self {
            num_states,
            num_actions,
            transitions,
            rewards,
            discount,
        })
    }

    /// Builds an MDP from one `|S| × |S|` matrix per action.
    pub fn from_action_matrices(
        per_action: &[DMatrix<f64>],
        rewards: DMatrix<f64>,
        discount: f64,
    ) -> Result<Self> {
        let num_states = rewards.nrows();
        let num_actions = rewards.ncols();
        if per_action.len() != num_actions {
            return Err(Error::Shape(format!(
                "{} transition matrices for {num_actions} actions",
                per_action.len()
            )));
        }
        let mut stacked = DMatrix::zeros(num_states * num_actions, num_states);
        for (a, pa) in per_action.iter().enumerate() {
            if pa.shape() != (num_states, num_states) {
                return Err(Error::Shape(format!(
                    "transition matrix for action {a} is {}x{}, expected {num_states}x{num_states}",
                    pa.nrows(),
                    pa.ncols()
                )));
            }
            for s in 0..num_states {
                stacked
                    .row_mut(flat_index(s, a, num_actions))
                    .copy_from(&pa.row(s));
            }
        }
        Self::new(stacked, rewards, discount)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// Ambient dimension `|S|·|A|`.
    pub fn n(&self) -> usize {
        self.num_states * self.num_actions
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn rewards(&self) -> &DVector<f64> {
        &self.rewards
    }

    pub fn reward(&self, state: usize, action: usize) -> f64 {
        self.rewards[flat_index(state, action, self.num_actions)]
    }

    pub fn transition(&self, state: usize, action: usize, next: usize) -> f64 {
        self.transitions[(flat_index(state, action, self.num_actions), next)]
    }

    /// The `n × |S|` matrix whose row `s·|A| + a` is `P(·|s, a)`.
    pub fn transition_operator(&self) -> &DMatrix<f64> {
        &self.transitions
    }

    pub fn check_q(&self, q: &QTable) -> Result<()> {
        if q.len() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                found: q.len(),
            });
        }
        Ok(())
    }

    /// Soft state values `V(s) = λ ln Σ_u exp(Q(s,u)/λ)`.
    pub fn soft_values(&self, q: &QTable, lambda: Temperature) -> DVector<f64> {
        debug_assert_eq!(q.len(), self.n());
        let na = self.num_actions;
        DVector::from_fn(self.num_states, |s, _| {
            log_sum_exp(&q.as_slice()[s * na..(s + 1) * na], lambda.value())
        })
    }

    /// `(F_λ Q)(s,a) = R(s,a) + γ Σ_{s'} P(s'|s,a) V_Q(s')`.
    pub fn soft_backup(&self, lambda: Temperature, q: &QTable) -> QTable {
        let v = self.soft_values(q, lambda);
        let mut out = &self.transitions * v;
        out *= self.discount;
        out += &self.rewards;
        out
    }

    pub fn to_document(&self) -> MdpDocument {
        let (ns, na) = (self.num_states, self.num_actions);
        MdpDocument {
            num_states: ns,
            num_actions: na,
            gamma: self.discount,
            transitions: (0..na)
                .map(|a| {
                    (0..ns)
                        .map(|s| (0..ns).map(|t| self.transition(s, a, t)).collect())
                        .collect()
                })
                .collect(),
            rewards: (0..ns)
                .map(|s| (0..na).map(|a| self.reward(s, a)).collect())
                .collect(),
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let doc: MdpDocument = serde_json::from_str(text)?;
        doc.build()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }
}

/// `m + λ ln Σ exp((x − m)/λ)` with `m = max x`.
pub fn log_sum_exp(xs: &[f64], lambda: f64) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let sum: f64 = xs.iter().map(|&x| ((x - m) / lambda).exp()).sum();
    m + lambda * sum.ln()
}

/// Row-stochastic `|S| × |A|` matrix of action probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyMatrix(DMatrix<f64>);

impl PolicyMatrix {
    pub fn new(probs: DMatrix<f64>) -> Result<Self> {
        for (s, row) in probs.row_iter().enumerate() {
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(Error::Shape(format!("policy row {s} has entries outside [0, 1]")));
            }
            let sum = row.sum();
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::Shape(format!("policy row {s} sums to {sum}")));
            }
        }
        Ok(Self(probs))
    }

    pub fn probs(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn num_states(&self) -> usize {
        self.0.nrows()
    }

    pub fn num_actions(&self) -> usize {
        self.0.ncols()
    }

    /// The `|S| × n` operator `(Π^π Q)(s) = Σ_a π(a|s) Q(s,a)`.
    pub fn averaging_operator(&self) -> DMatrix<f64> {
        let (ns, na) = self.0.shape();
        let mut op = DMatrix::zeros(ns, ns * na);
        for s in 0..ns {
            for a in 0..na {
                op[(s, flat_index(s, a, na))] = self.0[(s, a)];
            }
        }
        op
    }
}

/// Boltzmann policy `π(a|s) ∝ exp(Q(s,a)/λ)`, computed with max-shifted exponentials.
pub fn boltzmann_policy(q: &QTable, lambda: Temperature, num_actions: usize) -> PolicyMatrix {
    assert!(num_actions > 0 && q.len().is_multiple_of(num_actions));
    let ns = q.len() / num_actions;
    let mut probs = DMatrix::zeros(ns, num_actions);
    for s in 0..ns {
        let row = &q.as_slice()[s * num_actions..(s + 1) * num_actions];
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for (a, &x) in row.iter().enumerate() {
            let e = ((x - m) / lambda.value()).exp();
            probs[(s, a)] = e;
            z += e;
        }
        for a in 0..num_actions {
            probs[(s, a)] /= z;
        }
    }
    PolicyMatrix(probs)
}

/// Free-function form of [`TabularMdp::transition_operator`].
pub fn transition_operator(mdp: &TabularMdp) -> DMatrix<f64> {
    mdp.transition_operator().clone()
}

/// Free-function form of [`PolicyMatrix::averaging_operator`].
pub fn policy_averaging_operator(policy: &PolicyMatrix) -> DMatrix<f64> {
    policy.averaging_operator()
}

/// Free-function form of [`TabularMdp::soft_backup`].
pub fn soft_backup(mdp: &TabularMdp, lambda: Temperature, q: &QTable) -> QTable {
    mdp.soft_backup(lambda, q)
}

/// On-disk MDP description. `transitions[a][s][s']` is action-major;
/// `rewards[s][a]` holds the expected one-step reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpDocument {
    pub num_states: usize,
    pub num_actions: usize,
    pub gamma: f64,
    pub transitions: Vec<Vec<Vec<f64>>>,
    pub rewards: Vec<Vec<f64>>,
}

impl MdpDocument {
    pub fn build(&self) -> Result<TabularMdp> {
        let (ns, na) = (self.num_states, self.num_actions);
        if self.transitions.len() != na {
            return Err(Error::Shape(format!(
                "transitions lists {} actions, expected {na}",
                self.transitions.len()
            )));
        }
        let mut per_action = Vec::with_capacity(na);
        for (a, m) in self.transitions.iter().enumerate() {
            if m.len() != ns || m.iter().any(|row| row.len() != ns) {
                return Err(Error::Shape(format!(
                    "transitions[{a}] must be {ns}x{ns}"
                )));
            }
            per_action.push(DMatrix::from_fn(ns, ns, |i, j| m[i][j]));
        }
        if self.rewards.len() != ns || self.rewards.iter().any(|row| row.len() != na) {
            return Err(Error::Shape(format!("rewards must be {ns}x{na}")));
        }
        let rewards = DMatrix::from_fn(ns, na, |s, a| self.rewards[s][a]);
        TabularMdp::from_action_matrices(&per_action, rewards, self.gamma)
    }
}
