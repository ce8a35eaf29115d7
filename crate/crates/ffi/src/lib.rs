//! C ABI over `psbrm-core`.
//!
//! Handles are opaque and owned by the caller once returned; release them
//! with the matching `*_free`. Every fallible call returns a [`PsbrmStatus`]
//! and, on failure, sets a thread-local message readable through
//! [`psbrm_last_error`]. Arrays are caller-allocated with explicit lengths.
//! Q-vectors use the flat index `s * num_actions + a`; matrices are row-major.
//!
//! # Safety
//!
//! Pointer arguments must be NULL or valid for the stated length; handles
//! must come from this library and not be used after being freed.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use nalgebra::{DMatrix, DVector};
use psbrm_core::norms::{contraction_threshold, effective_contraction_rate, quasi_optimality_constant};
use psbrm_core::oracle::soft_fixed_point;
use psbrm_core::psbrm::{run_psbrm, Initialization, PsbrmConfig, SoftResidual, StepSchedule};
use psbrm_core::{
    random_feature_matrix, EvenP, Error, FeatureMap, PNorm, RunTrajectory, TabularMdp, Temperature, Termination,
    WeightVector,
};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsbrmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidMdp = 3,
    OutOfRegime = 4,
    NotConverged = 5,
    Io = 6,
    Internal = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsbrmTermination {
    GradientTolerance = 0,
    ResidualTolerance = 1,
    FixedPointTolerance = 2,
    MaxIterations = 3,
    Diverged = 4,
}

/// Soft residual minimization settings. `decay = 1` gives a constant step.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PsbrmSolveOptions {
    /// Even exponent ≥ 2.
    pub p: u32,
    pub lambda: f64,
    pub alpha: f64,
    pub decay: f64,
    pub max_iter: usize,
    pub grad_tol: f64,
    pub residual_tol: f64,
}

/// One iterate: residual functionals at `θ_k`.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct PsbrmRecord {
    pub k: usize,
    pub f_p: f64,
    pub j_p: f64,
    pub j_inf: f64,
}

/// Opaque finite MDP.
pub struct PsbrmMdp {
    inner: TabularMdp,
}

/// Opaque full-column-rank feature matrix.
pub struct PsbrmFeatures {
    inner: FeatureMap,
}

/// Opaque result of [`psbrm_solve`].
pub struct PsbrmTrajectory {
    inner: RunTrajectory,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(PsbrmStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::NonStochasticRow { .. } | Error::NegativeProbability { .. } | Error::InvalidDiscount(_) => {
                PsbrmStatus::InvalidMdp
            }
            Error::OutOfRegime { .. } => PsbrmStatus::OutOfRegime,
            Error::FixedPointNotConverged(_) | Error::InnerSolver { .. } | Error::Diverged { .. } => {
                PsbrmStatus::NotConverged
            }
            e if e.is_io() => PsbrmStatus::Io,
            _ => PsbrmStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(PsbrmStatus::InvalidArgument, msg.into())
}

fn null(what: &str) -> Failure {
    Failure(PsbrmStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PsbrmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PsbrmStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            PsbrmStatus::Internal
        }
    }
}

unsafe fn slice_in<'a>(ptr: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(ptr, len))
}

unsafe fn slice_out<'a>(ptr: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts_mut(ptr, len))
}

unsafe fn handle<'a, T>(ptr: *const T, what: &str) -> Result<&'a T, Failure> {
    ptr.as_ref().ok_or_else(|| null(what))
}

unsafe fn write<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

/// `weights == NULL` means uniform.
unsafe fn weights(ptr: *const f64, n: usize) -> Result<WeightVector, Failure> {
    if ptr.is_null() {
        if n == 0 {
            return Err(invalid("n must be positive"));
        }
        return Ok(WeightVector::uniform(n));
    }
    Ok(WeightVector::new(slice_in(ptr, n, "weights")?.to_vec())?)
}

fn check_len(what: &str, expected: usize, found: usize) -> Result<(), Failure> {
    if expected == found {
        Ok(())
    } else {
        Err(invalid(format!("{what}: expected length {expected}, got {found}")))
    }
}

/// Message of the last failed call on this thread, or NULL. Valid until the next failing call.
#[no_mangle]
pub extern "C" fn psbrm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn psbrm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// The six-state, two-action benchmark MDP (γ = 0.95).
#[no_mangle]
pub unsafe extern "C" fn psbrm_mdp_benchmark(out: *mut *mut PsbrmMdp) -> PsbrmStatus {
    guard(|| {
        let mdp = Box::new(PsbrmMdp {
            inner: psbrm_core::experiment::benchmark_mdp(),
        });
        write(out, Box::into_raw(mdp), "out")
    })
}

/// Parses an MDP document: `{"num_states", "num_actions", "gamma", "transitions"[a][s][s'], "rewards"[s][a]}`.
#[no_mangle]
pub unsafe extern "C" fn psbrm_mdp_from_json(json: *const c_char, out: *mut *mut PsbrmMdp) -> PsbrmStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        let text = CStr::from_ptr(json).to_str().map_err(|e| invalid(e.to_string()))?;
        let mdp = TabularMdp::from_json_str(text)?;
        write(out, Box::into_raw(Box::new(PsbrmMdp { inner: mdp })), "out")
    })
}

/// `transitions` holds `num_actions * num_states * num_states` entries laid out
/// `[a][s][s']`; `rewards` holds `num_states * num_actions` entries laid out `[s][a]`.
#[no_mangle]
pub unsafe extern "C" fn psbrm_mdp_new(
    num_states: usize,
    num_actions: usize,
    transitions: *const f64,
    rewards: *const f64,
    gamma: f64,
    out: *mut *mut PsbrmMdp,
) -> PsbrmStatus {
    guard(|| {
        if num_states == 0 || num_actions == 0 {
            return Err(invalid("num_states and num_actions must be positive"));
        }
        let ss = num_states * num_states;
        let p = slice_in(transitions, num_actions * ss, "transitions")?;
        let r = slice_in(rewards, num_states * num_actions, "rewards")?;
        let mats: Vec<DMatrix<f64>> = (0..num_actions)
            .map(|a| DMatrix::from_row_slice(num_states, num_states, &p[a * ss..(a + 1) * ss]))
            .collect();
        let r = DMatrix::from_row_slice(num_states, num_actions, r);
        let mdp = TabularMdp::from_action_matrices(&mats, r, gamma)?;
        write(out, Box::into_raw(Box::new(PsbrmMdp { inner: mdp })), "out")
    })
}

#[no_mangle]
pub unsafe extern "C" fn psbrm_mdp_free(mdp: *mut PsbrmMdp) {
    if !mdp.is_null() {
        drop(Box::from_raw(mdp));
    }
}

#[no_mangle]
pub unsafe extern "C" fn psbrm_mdp_dims(
    mdp: *const PsbrmMdp,
    num_states: *mut usize,
    num_actions: *mut usize,
    gamma: *mut f64,
) -> PsbrmStatus {
    guard(|| {
        let m = &handle(mdp, "mdp")?.inner;
        write(num_states, m.num_states(), "num_states")?;
        write(num_actions, m.num_actions(), "num_actions")?;
        write(gamma, m.discount(), "gamma")
    })
}

/// `out = F_λ q`; both arrays have length `n = num_states * num_actions`.
#[no_mangle]
pub unsafe extern "C" fn psbrm_soft_backup(
    mdp: *const PsbrmMdp,
    lambda: f64,
    q: *const f64,
    out: *mut f64,
    n: usize,
) -> PsbrmStatus {
    guard(|| {
        let m = &handle(mdp, "mdp")?.inner;
        check_len("q", m.n(), n)?;
        let q = DVector::from_column_slice(slice_in(q, n, "q")?);
        m.check_q(&q)?;
        let next = m.soft_backup(Temperature::new(lambda)?, &q);
        slice_out(out, n, "out")?.copy_from_slice(next.as_slice());
        Ok(())
    })
}

/// Soft value iteration from zero. `iterations` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn psbrm_soft_fixed_point(
    mdp: *const PsbrmMdp,
    lambda: f64,
    tol: f64,
    max_iter: usize,
    q_star: *mut f64,
    n: usize,
    iterations: *mut usize,
) -> PsbrmStatus {
    guard(|| {
        let m = &handle(mdp, "mdp")?.inner;
        check_len("q_star", m.n(), n)?;
        let out = slice_out(q_star, n, "q_star")?;
        let fp = soft_fixed_point(m, Temperature::new(lambda)?, tol, max_iter)?;
        out.copy_from_slice(fp.q_star.as_slice());
        if !iterations.is_null() {
            iterations.write(fp.iterations);
        }
        Ok(())
    })
}

/// Standard-normal `n × d` features from `seed`; `seed_used` (may be NULL) receives
/// the seed that produced a full-rank draw.
#[no_mangle]
pub unsafe extern "C" fn psbrm_features_random(
    seed: u64,
    n: usize,
    d: usize,
    out: *mut *mut PsbrmFeatures,
    seed_used: *mut u64,
) -> PsbrmStatus {
    guard(|| {
        let (phi, used) = random_feature_matrix(seed, n, d)?;
        if !seed_used.is_null() {
            seed_used.write(used);
        }
        write(out, Box::into_raw(Box::new(PsbrmFeatures { inner: phi })), "out")
    })
}

/// Features from a row-major `n × d` array.
#[no_mangle]
pub unsafe extern "C" fn psbrm_features_new(
    data: *const f64,
    n: usize,
    d: usize,
    out: *mut *mut PsbrmFeatures,
) -> PsbrmStatus {
    guard(|| {
        if n == 0 || d == 0 {
            return Err(invalid("n and d must be positive"));
        }
        let phi = FeatureMap::new(DMatrix::from_row_slice(n, d, slice_in(data, n * d, "data")?))?;
        write(out, Box::into_raw(Box::new(PsbrmFeatures { inner: phi })), "out")
    })
}

#[no_mangle]
pub unsafe extern "C" fn psbrm_features_free(features: *mut PsbrmFeatures) {
    if !features.is_null() {
        drop(Box::from_raw(features));
    }
}

#[no_mangle]
pub unsafe extern "C" fn psbrm_features_dims(features: *const PsbrmFeatures, n: *mut usize, d: *mut usize) -> PsbrmStatus {
    guard(|| {
        let phi = &handle(features, "features")?.inner;
        write(n, phi.n(), "n")?;
        write(d, phi.d(), "d")
    })
}

/// `γ_{p,w}`; `weights` has length `n` or is NULL for uniform.
#[no_mangle]
pub unsafe extern "C" fn psbrm_effective_contraction_rate(
    gamma: f64,
    p: f64,
    n: usize,
    weights_ptr: *const f64,
    out: *mut f64,
) -> PsbrmStatus {
    guard(|| {
        let w = weights(weights_ptr, n)?;
        write(out, effective_contraction_rate(gamma, PNorm::new(p)?, n, &w), "out")
    })
}

/// Smallest `p` beyond which `γ_{p,w} < 1`.
#[no_mangle]
pub unsafe extern "C" fn psbrm_contraction_threshold(
    gamma: f64,
    n: usize,
    weights_ptr: *const f64,
    out: *mut f64,
) -> PsbrmStatus {
    guard(|| {
        let w = weights(weights_ptr, n)?;
        write(out, contraction_threshold(gamma, n, &w), "out")
    })
}

/// `C(p)`; returns `PSBRM_STATUS_OUT_OF_REGIME` (and leaves `out` untouched) when `γ_{p,w} ≥ 1`.
#[no_mangle]
pub unsafe extern "C" fn psbrm_quasi_optimality_constant(
    gamma: f64,
    p: f64,
    n: usize,
    weights_ptr: *const f64,
    out: *mut f64,
) -> PsbrmStatus {
    guard(|| {
        let w = weights(weights_ptr, n)?;
        let (_, c) = quasi_optimality_constant(gamma, PNorm::new(p)?, n, &w).require()?;
        write(out, c, "out")
    })
}

struct Problem<'a> {
    model: SoftResidual<'a>,
    p: EvenP,
    w: WeightVector,
    theta: DVector<f64>,
}

unsafe fn problem<'a>(
    mdp: *const PsbrmMdp,
    features: *const PsbrmFeatures,
    lambda: f64,
    p: u32,
    weights_ptr: *const f64,
    theta: *const f64,
    d: usize,
) -> Result<Problem<'a>, Failure> {
    let m = &handle(mdp, "mdp")?.inner;
    let phi = &handle(features, "features")?.inner;
    check_len("theta", phi.d(), d)?;
    let theta = DVector::from_column_slice(slice_in(theta, d, "theta")?);
    phi.check_theta(&theta)?;
    Ok(Problem {
        model: SoftResidual::new(m, Temperature::new(lambda)?, phi)?,
        p: EvenP::new(p)?,
        w: weights(weights_ptr, m.n())?,
        theta,
    })
}

/// `f_p(θ) = (1/p) Σ w_i δ_i^p` with `δ = F_λ(Φθ) − Φθ`.
#[no_mangle]
pub unsafe extern "C" fn psbrm_objective(
    mdp: *const PsbrmMdp,
    features: *const PsbrmFeatures,
    lambda: f64,
    p: u32,
    weights_ptr: *const f64,
    theta: *const f64,
    d: usize,
    out: *mut f64,
) -> PsbrmStatus {
    guard(|| {
        let pr = problem(mdp, features, lambda, p, weights_ptr, theta, d)?;
        write(out, pr.model.objective(&pr.theta, pr.p, &pr.w), "out")
    })
}

/// `∇f_p(θ)`, length `d`.
#[no_mangle]
pub unsafe extern "C" fn psbrm_gradient(
    mdp: *const PsbrmMdp,
    features: *const PsbrmFeatures,
    lambda: f64,
    p: u32,
    weights_ptr: *const f64,
    theta: *const f64,
    d: usize,
    grad: *mut f64,
) -> PsbrmStatus {
    guard(|| {
        let pr = problem(mdp, features, lambda, p, weights_ptr, theta, d)?;
        let g = pr.model.gradient(&pr.theta, pr.p, &pr.w);
        slice_out(grad, d, "grad")?.copy_from_slice(g.as_slice());
        Ok(())
    })
}

/// Normalized gradient descent from `θ_0 = 0`. `weights` may be NULL for uniform.
#[no_mangle]
pub unsafe extern "C" fn psbrm_solve(
    mdp: *const PsbrmMdp,
    features: *const PsbrmFeatures,
    options: *const PsbrmSolveOptions,
    weights_ptr: *const f64,
    out: *mut *mut PsbrmTrajectory,
) -> PsbrmStatus {
    guard(|| {
        let m = &handle(mdp, "mdp")?.inner;
        let phi = &handle(features, "features")?.inner;
        let o = *handle(options, "options")?;
        let step = if o.decay == 1.0 {
            StepSchedule::Constant { alpha: o.alpha }
        } else {
            StepSchedule::Geometric {
                alpha: o.alpha,
                decay: o.decay,
            }
        };
        let config = PsbrmConfig {
            p: EvenP::new(o.p)?,
            lambda: Temperature::new(o.lambda)?,
            weights: weights(weights_ptr, m.n())?,
            step,
            max_iter: o.max_iter,
            grad_tol: o.grad_tol,
            residual_tol: o.residual_tol,
            init: Initialization::Zero,
            seed: 0,
        };
        let traj = run_psbrm(m, phi, &config, None)?;
        write(out, Box::into_raw(Box::new(PsbrmTrajectory { inner: traj })), "out")
    })
}

#[no_mangle]
pub unsafe extern "C" fn psbrm_trajectory_free(trajectory: *mut PsbrmTrajectory) {
    if !trajectory.is_null() {
        drop(Box::from_raw(trajectory));
    }
}

/// Number of records (iterations performed + 1).
#[no_mangle]
pub unsafe extern "C" fn psbrm_trajectory_len(trajectory: *const PsbrmTrajectory, out: *mut usize) -> PsbrmStatus {
    guard(|| write(out, handle(trajectory, "trajectory")?.inner.records.len(), "out"))
}

#[no_mangle]
pub unsafe extern "C" fn psbrm_trajectory_termination(
    trajectory: *const PsbrmTrajectory,
    out: *mut PsbrmTermination,
) -> PsbrmStatus {
    guard(|| {
        let t = match handle(trajectory, "trajectory")?.inner.termination {
            Termination::GradientTolerance => PsbrmTermination::GradientTolerance,
            Termination::ResidualTolerance => PsbrmTermination::ResidualTolerance,
            Termination::FixedPointTolerance => PsbrmTermination::FixedPointTolerance,
            Termination::MaxIterations => PsbrmTermination::MaxIterations,
            Termination::Diverged => PsbrmTermination::Diverged,
        };
        write(out, t, "out")
    })
}

#[no_mangle]
pub unsafe extern "C" fn psbrm_trajectory_record(
    trajectory: *const PsbrmTrajectory,
    index: usize,
    out: *mut PsbrmRecord,
) -> PsbrmStatus {
    guard(|| {
        let records = &handle(trajectory, "trajectory")?.inner.records;
        let r = records
            .get(index)
            .ok_or_else(|| invalid(format!("record {index} out of range ({} records)", records.len())))?;
        write(
            out,
            PsbrmRecord {
                k: r.k,
                f_p: r.f_p,
                j_p: r.j_p,
                j_inf: r.j_inf,
            },
            "out",
        )
    })
}

/// Final parameter vector, length `d`.
#[no_mangle]
pub unsafe extern "C" fn psbrm_trajectory_theta(trajectory: *const PsbrmTrajectory, theta: *mut f64, d: usize) -> PsbrmStatus {
    guard(|| {
        let t = handle(trajectory, "trajectory")?
            .inner
            .final_theta()
            .ok_or_else(|| invalid("trajectory has no parameters"))?;
        check_len("theta", t.len(), d)?;
        slice_out(theta, d, "theta")?.copy_from_slice(t.as_slice());
        Ok(())
    })
}
