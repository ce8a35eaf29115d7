//! Planning toolkit for finite discounted MDPs under linear function
//! approximation: soft Bellman residual minimization in weighted L_p norms,
//! its contraction diagnostics, and projected value iteration baselines.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod error;
pub mod experiment;
pub mod features;
pub mod mdp;
pub mod norms;
pub mod oracle;
pub mod psbrm;
pub mod regression;
pub mod rng;
pub mod trajectory;

pub use error::{Error, Result};
pub use features::{random_feature_matrix, FeatureMap};
pub use mdp::{boltzmann_policy, PolicyMatrix, QTable, TabularMdp, Temperature};
pub use norms::{EvenP, PNorm, QuasiOptimality, WeightVector};
pub use psbrm::{run_psbrm, PsbrmConfig, SoftResidual, StepSchedule};
pub use trajectory::{RunTrajectory, Termination};
