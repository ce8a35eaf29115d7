//! JSON experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{Projection, PviConfig, DEFAULT_DIVERGENCE_THRESHOLD};
use crate::error::{Error, Result};
use crate::mdp::Temperature;
use crate::norms::{EvenP, WeightVector};
use crate::psbrm::{Initialization, PsbrmConfig, StepSchedule};
use crate::regression::LpSolverOptions;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MdpSource {
    /// `"benchmark"`: the built-in six-state, two-action MDP.
    Named(String),
    File { path: PathBuf },
}

impl Default for MdpSource {
    fn default() -> Self {
        MdpSource::Named("benchmark".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeightsSpec {
    /// `"uniform"`.
    Named(String),
    Explicit(Vec<f64>),
}

impl Default for WeightsSpec {
    fn default() -> Self {
        WeightsSpec::Named("uniform".into())
    }
}

impl WeightsSpec {
    pub fn build(&self, n: usize) -> Result<WeightVector> {
        match self {
            WeightsSpec::Named(s) if s == "uniform" => Ok(WeightVector::uniform(n)),
            WeightsSpec::Named(s) => Err(Error::Config(format!("unknown weights spec {s:?}"))),
            WeightsSpec::Explicit(v) if v.len() == n => WeightVector::new(v.clone()),
            WeightsSpec::Explicit(v) => Err(Error::Config(format!("{} weights for n = {n}", v.len()))),
        }
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self, WeightsSpec::Named(s) if s == "uniform")
    }
}

fn default_lambda() -> f64 {
    1.0
}
fn default_oracle_tol() -> f64 {
    1e-10
}
fn default_oracle_max_iter() -> usize {
    100_000
}
fn default_log_every() -> usize {
    1
}
fn default_divergence() -> f64 {
    DEFAULT_DIVERGENCE_THRESHOLD
}
fn default_inner_tol() -> f64 {
    1e-10
}
fn default_inner_max_iter() -> usize {
    10_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsbrmRunSpec {
    pub id: String,
    pub p: u32,
    pub step: StepSchedule,
    pub max_iter: usize,
    #[serde(default)]
    pub grad_tol: f64,
    #[serde(default)]
    pub residual_tol: f64,
    #[serde(default)]
    pub init: Initialization,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PviRunSpec {
    pub id: String,
    pub projection: Projection,
    pub max_iter: usize,
    #[serde(default = "default_divergence")]
    pub divergence_threshold: f64,
    #[serde(default = "default_inner_tol")]
    pub inner_tol: f64,
    #[serde(default = "default_inner_max_iter")]
    pub inner_max_iter: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "snake_case")]
pub enum RunSpec {
    Psbrm(PsbrmRunSpec),
    Pvi(PviRunSpec),
}

impl RunSpec {
    pub fn id(&self) -> &str {
        match self {
            RunSpec::Psbrm(s) => &s.id,
            RunSpec::Pvi(s) => &s.id,
        }
    }

    pub fn p(&self) -> Result<EvenP> {
        match self {
            RunSpec::Psbrm(s) => EvenP::new(s.p),
            RunSpec::Pvi(s) => Ok(s.projection.p()),
        }
    }

    pub fn label(&self) -> String {
        match self {
            RunSpec::Psbrm(s) => format!("PSBRM (p={})", s.p),
            RunSpec::Pvi(PviRunSpec {
                projection: Projection::L2,
                ..
            }) => "L2-PVI".into(),
            RunSpec::Pvi(PviRunSpec {
                projection: Projection::Lpw { p },
                ..
            }) => format!("Lp-PVI (p={})", p.get()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSpec {
    pub p: u32,
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_inner_tol")]
    pub inner_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub mdp: MdpSource,
    pub phi_seed: u64,
    /// `(n, d)`; `n` must equal `|S|·|A|`.
    pub phi_shape: (usize, usize),
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default)]
    pub weights: WeightsSpec,
    #[serde(default = "default_oracle_tol")]
    pub oracle_tol: f64,
    #[serde(default = "default_oracle_max_iter")]
    pub oracle_max_iter: usize,
    /// Write every k-th trajectory row to CSV (the final row is always written).
    #[serde(default = "default_log_every")]
    pub log_every: usize,
    #[serde(default)]
    pub compare: Vec<RunSpec>,
    #[serde(default)]
    pub ablation: Vec<PsbrmRunSpec>,
    #[serde(default)]
    pub probe: Option<ProbeSpec>,
    /// Candidate feature seeds scanned by `search-seed`.
    #[serde(default)]
    pub seed_candidates: Vec<u64>,
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config; relative MDP paths resolve against the config's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_json_str(&text)?;
        if let MdpSource::File { path: mdp_path } = &mut cfg.mdp {
            if mdp_path.is_relative() {
                if let Some(dir) = path.parent() {
                    *mdp_path = dir.join(&*mdp_path);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        Temperature::new(self.lambda).map_err(|e| Error::Config(e.to_string()))?;
        if !(self.oracle_tol > 0.0) || self.oracle_max_iter == 0 {
            return Err(Error::Config("oracle_tol must be > 0 and oracle_max_iter >= 1".into()));
        }
        if self.log_every == 0 {
            return Err(Error::Config("log_every must be >= 1".into()));
        }
        if let MdpSource::Named(name) = &self.mdp {
            if name != "benchmark" {
                return Err(Error::Config(format!("unknown MDP source {name:?}")));
            }
        }
        let (n, d) = self.phi_shape;
        if d == 0 || d > n {
            return Err(Error::Config(format!("phi_shape ({n}, {d}) needs 1 <= d <= n")));
        }
        let mut ids = std::collections::HashSet::new();
        for run in &self.compare {
            if !ids.insert(run.id().to_owned()) {
                return Err(Error::Config(format!("duplicate run id {:?}", run.id())));
            }
            validate_id(run.id())?;
            match run {
                RunSpec::Psbrm(s) => {
                    psbrm_config(s, Temperature::default(), WeightVector::uniform(1))?;
                }
                RunSpec::Pvi(s) => {
                    if !(s.divergence_threshold > 0.0) || !(s.inner_tol > 0.0) {
                        return Err(Error::Config(format!("run {:?}: thresholds must be positive", s.id)));
                    }
                }
            }
        }
        let mut ids = std::collections::HashSet::new();
        for run in &self.ablation {
            if !ids.insert(run.id.clone()) {
                return Err(Error::Config(format!("duplicate run id {:?}", run.id)));
            }
            validate_id(&run.id)?;
            psbrm_config(run, Temperature::default(), WeightVector::uniform(1))?;
        }
        if let Some(probe) = &self.probe {
            EvenP::new(probe.p).map_err(|e| Error::Config(e.to_string()))?;
            if probe.trials == 0 {
                return Err(Error::Config("probe.trials must be >= 1".into()));
            }
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON serialization.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn validate_id(id: &str) -> Result<()> {
    if id.is_empty() || !id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
        return Err(Error::Config(format!("run id {id:?} must be non-empty [A-Za-z0-9_-]")));
    }
    Ok(())
}

pub fn psbrm_config(spec: &PsbrmRunSpec, lambda: Temperature, weights: WeightVector) -> Result<PsbrmConfig> {
    let p = EvenP::new(spec.p).map_err(|e| Error::Config(format!("run {:?}: {e}", spec.id)))?;
    let config = PsbrmConfig {
        p,
        lambda,
        weights,
        step: spec.step,
        max_iter: spec.max_iter,
        grad_tol: spec.grad_tol,
        residual_tol: spec.residual_tol,
        init: spec.init,
        seed: spec.seed,
    };
    config
        .validate()
        .map_err(|e| Error::Config(format!("run {:?}: {e}", spec.id)))?;
    Ok(config)
}

pub fn pvi_config(spec: &PviRunSpec, lambda: Temperature, weights: WeightVector) -> PviConfig {
    PviConfig {
        projection: spec.projection,
        weights,
        lambda,
        max_iter: spec.max_iter,
        divergence_threshold: spec.divergence_threshold,
        inner: LpSolverOptions {
            tol: spec.inner_tol,
            max_iter: spec.inner_max_iter,
        },
    }
}
