use nalgebra::DVector;
use psbrm_core::baselines::{
    expansiveness_probe, l2w_projection, lpw_projection, pvi_iterate, Projection, PviConfig,
};
use psbrm_core::experiment::benchmark_mdp;
use psbrm_core::norms::weighted_lp_norm;
use psbrm_core::oracle::soft_fixed_point;
use psbrm_core::psbrm::{bellman_residual, residual_jacobian, Initialization, PsbrmConfig};
use psbrm_core::regression::{scaled_gradient, LpSolverOptions};
use psbrm_core::rng::SeedStream;
use psbrm_core::{
    random_feature_matrix, run_psbrm, EvenP, FeatureMap, QTable, StepSchedule, Temperature, Termination, WeightVector,
};

fn weights(rng: &mut SeedStream, n: usize) -> WeightVector {
    WeightVector::normalized((0..n).map(|_| rng.uniform_in(0.2, 1.0)).collect()).unwrap()
}

/// Plain gradient descent on `Σ w_i (Φθ − q)_i^p`, independent of the library solver.
fn descend(phi: &FeatureMap, w: &WeightVector, q: &DVector<f64>, p: i32, iters: usize) -> DVector<f64> {
    let m = phi.matrix();
    let f = |t: &DVector<f64>| -> f64 {
        let r = m * t - q;
        r.iter().zip(w.as_vector().iter()).map(|(ri, wi)| wi * ri.powi(p)).sum()
    };
    let mut theta = DVector::zeros(phi.d());
    let mut step = 1.0;
    for _ in 0..iters {
        let r = m * &theta - q;
        let u = DVector::from_fn(r.len(), |i, _| w.as_vector()[i] * p as f64 * r[i].powi(p - 1));
        let g = m.transpose() * u;
        if g.norm() < 1e-14 {
            break;
        }
        if p == 2 {
            // exact line search on the quadratic
            let mg = m * &g;
            let curv: f64 = mg.iter().zip(w.as_vector().iter()).map(|(v, wi)| 2.0 * wi * v * v).sum();
            theta -= &g * (g.norm_squared() / curv);
            continue;
        }
        let f0 = f(&theta);
        step *= 2.0;
        loop {
            let cand = &theta - &g * step;
            if f(&cand) <= f0 - 1e-4 * step * g.norm_squared() {
                theta = cand;
                break;
            }
            step *= 0.5;
            if step < 1e-30 {
                return theta;
            }
        }
    }
    theta
}

#[test]
fn l2_projection_matches_gradient_descent_oracle() {
    let mut rng = SeedStream::new(31);
    for seed in 0..10 {
        let (phi, _) = random_feature_matrix(seed, 10, 4).unwrap();
        let w = weights(&mut rng, 10);
        let q = rng.normal_vector(10) * 3.0;
        let theta = l2w_projection(&q, &phi, &w).unwrap();
        let oracle = descend(&phi, &w, &q, 2, 20_000);
        assert!((&theta - &oracle).amax() < 1e-8, "{}", (&theta - &oracle).amax());
    }
}

#[test]
fn lp_projection_matches_gradient_descent_oracle_p4() {
    let mut rng = SeedStream::new(41);
    for seed in 0..5 {
        let (phi, _) = random_feature_matrix(100 + seed, 8, 3).unwrap();
        let w = weights(&mut rng, 8);
        let q = rng.normal_vector(8);
        let theta = lpw_projection(&q, &phi, EvenP::new(4).unwrap(), &w, 1e-12).unwrap();
        let oracle = descend(&phi, &w, &q, 4, 200_000);
        assert!((&theta - &oracle).amax() < 1e-5, "{}", (&theta - &oracle).amax());
    }
}

#[test]
fn lp_projection_p2_equals_l2_projection() {
    let mut rng = SeedStream::new(2);
    for seed in 0..50 {
        let (phi, _) = random_feature_matrix(seed, 12, 6).unwrap();
        let w = weights(&mut rng, 12);
        let q = rng.normal_vector(12) * 5.0;
        let a = l2w_projection(&q, &phi, &w).unwrap();
        let b = lpw_projection(&q, &phi, EvenP::TWO, &w, 1e-10).unwrap();
        assert!((a - b).amax() < 1e-8);
    }
}

#[test]
fn projections_are_idempotent_on_the_span() {
    let mut rng = SeedStream::new(3);
    let (phi, _) = random_feature_matrix(3, 12, 6).unwrap();
    for p in [2, 4, 8, 80] {
        let p = EvenP::new(p).unwrap();
        let w = weights(&mut rng, 12);
        let theta = rng.normal_vector(6);
        let q = phi.apply(&theta);
        let back = if p == EvenP::TWO {
            l2w_projection(&q, &phi, &w).unwrap()
        } else {
            lpw_projection(&q, &phi, p, &w, 1e-10).unwrap()
        };
        assert!((back - &theta).amax() < 1e-9, "p = {}", p.get());
    }
}

#[test]
fn lp_projection_is_stationary_and_minimal() {
    let mut rng = SeedStream::new(4);
    let (phi, _) = random_feature_matrix(4, 12, 6).unwrap();
    let w = weights(&mut rng, 12);
    let q = rng.normal_vector(12) * 2.0;
    for p in [4, 8, 32, 80] {
        let p = EvenP::new(p).unwrap();
        let theta = lpw_projection(&q, &phi, p, &w, 1e-10).unwrap();
        assert!(scaled_gradient(&phi, &w, &q, p, &theta).norm() <= 1e-10);
        let best = weighted_lp_norm(&(phi.apply(&theta) - &q), p.norm(), &w).unwrap();
        for _ in 0..200 {
            let nudge = rng.normal_vector(6) * 10f64.powf(rng.uniform_in(-6.0, -1.0));
            let other = weighted_lp_norm(&(phi.apply(&(&theta + nudge)) - &q), p.norm(), &w).unwrap();
            assert!(other >= best * (1.0 - 1e-12), "p = {}", p.get());
        }
    }
}

#[test]
fn full_basis_pvi_tracks_value_iteration_step_for_step() {
    let mdp = benchmark_mdp();
    let lambda = Temperature::default();
    let phi = FeatureMap::identity(12);
    for projection in [Projection::L2, Projection::Lpw { p: EvenP::new(8).unwrap() }] {
        let config = PviConfig {
            projection,
            weights: WeightVector::uniform(12),
            lambda,
            max_iter: 100,
            divergence_threshold: 1e6,
            inner: LpSolverOptions::default(),
        };
        let traj = pvi_iterate(&mdp, &phi, &config, &QTable::zeros(12), None).unwrap();
        let mut q = QTable::zeros(12);
        for rec in &traj.records[1..] {
            q = mdp.soft_backup(lambda, &q);
            assert!((rec.theta.as_ref().unwrap() - &q).amax() < 1e-10);
        }
    }
}

#[test]
fn l2_pvi_divergence_is_flagged_not_an_error() {
    let mdp = benchmark_mdp();
    let (phi, _) = random_feature_matrix(9, 12, 6).unwrap();
    let fp = soft_fixed_point(&mdp, Temperature::default(), 1e-10, 100_000).unwrap();
    let config = PviConfig {
        projection: Projection::L2,
        weights: WeightVector::uniform(12),
        lambda: Temperature::default(),
        max_iter: 5000,
        divergence_threshold: 1e6,
        inner: LpSolverOptions::default(),
    };
    let traj = pvi_iterate(&mdp, &phi, &config, &QTable::zeros(12), Some(&fp.q_star)).unwrap();
    assert_eq!(traj.termination, Termination::Diverged);
    assert!(traj.last().error.unwrap().linf > 1e5);
}

/// L2 Bellman residual minimization written directly: θ ← θ − α_k Jᵀ W δ / ‖δ‖_∞.
#[test]
fn l2_sbrm_is_psbrm_at_p2() {
    let mdp = benchmark_mdp();
    let lambda = Temperature::default();
    let (phi, _) = random_feature_matrix(9, 12, 6).unwrap();
    let w = WeightVector::uniform(12);
    let step = StepSchedule::Geometric { alpha: 0.5, decay: 0.999 };
    let config = PsbrmConfig {
        p: EvenP::TWO,
        lambda,
        weights: w.clone(),
        step,
        max_iter: 500,
        grad_tol: 0.0,
        residual_tol: 0.0,
        init: Initialization::Zero,
        seed: 0,
    };
    let traj = run_psbrm(&mdp, &phi, &config, None).unwrap();
    let mut theta = DVector::zeros(6);
    for (k, rec) in traj.records.iter().enumerate() {
        assert!((rec.theta.as_ref().unwrap() - &theta).amax() < 1e-10 * (1.0 + theta.amax()), "k = {k}");
        let delta = bellman_residual(&theta, &mdp, lambda, &phi).unwrap();
        let jac = residual_jacobian(&theta, &mdp, lambda, &phi).unwrap();
        let wd = delta.component_mul(w.as_vector()) / delta.amax();
        theta -= jac.transpose() * wd * step.at(k);
    }
}

#[test]
fn lp_projection_expands_somewhere_at_p80() {
    let w = WeightVector::uniform(12);
    let p = EvenP::new(80).unwrap();
    let max_ratio = (1..=8)
        .map(|seed| {
            let (phi, _) = random_feature_matrix(seed, 12, 6).unwrap();
            expansiveness_probe(&phi, p, &w, 100, seed, 1e-10).unwrap().max_ratio
        })
        .fold(0.0, f64::max);
    assert!(max_ratio > 1.0, "{max_ratio}");
}

#[test]
fn probe_skips_identical_pairs_and_rejects_zero_trials() {
    let (phi, _) = random_feature_matrix(1, 6, 2).unwrap();
    let w = WeightVector::uniform(6);
    assert!(expansiveness_probe(&phi, EvenP::TWO, &w, 0, 1, 1e-10).is_err());
    let r = expansiveness_probe(&phi, EvenP::TWO, &w, 20, 1, 1e-10).unwrap();
    assert!(r.pairs <= 20 && r.max_ratio >= 0.0);
}
