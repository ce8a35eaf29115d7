//! Finite-difference checks of the residual Jacobian and the f_p gradient,
//! plus properties of the normalized descent direction.

use nalgebra::{DMatrix, DVector};
use psbrm_core::psbrm::{gradient_fp, normalized_gradient, objective_fp, residual_jacobian};
use psbrm_core::rng::SeedStream;
use psbrm_core::{random_feature_matrix, EvenP, FeatureMap, SoftResidual, TabularMdp, Temperature, WeightVector};

fn random_mdp(seed: u64, s: usize, a: usize, gamma: f64) -> TabularMdp {
    let mut rng = SeedStream::new(seed);
    let mut p = DMatrix::from_fn(s * a, s, |_, _| rng.uniform() + 1e-3);
    for mut row in p.row_iter_mut() {
        let t = row.sum();
        row /= t;
    }
    let r = DMatrix::from_fn(s, a, |_, _| rng.uniform_in(-1.0, 1.0));
    TabularMdp::new(p, r, gamma).unwrap()
}

fn random_weights(rng: &mut SeedStream, n: usize) -> WeightVector {
    WeightVector::normalized((0..n).map(|_| rng.uniform_in(0.1, 1.0)).collect()).unwrap()
}

#[test]
fn jacobian_matches_central_differences() {
    for (seed, lambda) in [(1, 1.0), (2, 0.3), (3, 4.0)] {
        let mdp = random_mdp(seed, 4, 3, 0.9);
        let (phi, _) = random_feature_matrix(seed, 12, 5).unwrap();
        let lambda = Temperature::new(lambda).unwrap();
        let model = SoftResidual::new(&mdp, lambda, &phi).unwrap();
        let mut rng = SeedStream::new(seed + 100);
        for _ in 0..5 {
            let theta = rng.normal_vector(5);
            let jac = model.jacobian(&theta);
            let h = 1e-6;
            let fd = DMatrix::from_fn(12, 5, |i, j| {
                let mut tp = theta.clone();
                let mut tm = theta.clone();
                tp[j] += h;
                tm[j] -= h;
                (model.residual(&tp)[i] - model.residual(&tm)[i]) / (2.0 * h)
            });
            let err = (&jac - &fd).norm() / jac.norm();
            assert!(err < 1e-7, "relative Jacobian error {err}");
        }
    }
}

#[test]
fn gradient_matches_central_differences_with_weights() {
    let mdp = random_mdp(7, 5, 2, 0.8);
    let (phi, _) = random_feature_matrix(7, 10, 4).unwrap();
    let lambda = Temperature::new(0.7).unwrap();
    let mut rng = SeedStream::new(70);
    for p in [2, 4, 6, 8, 12] {
        let p = EvenP::new(p).unwrap();
        let w = random_weights(&mut rng, 10);
        for _ in 0..5 {
            let theta = rng.normal_vector(4) * 0.5;
            let g = gradient_fp(&theta, &mdp, lambda, &phi, p, &w).unwrap();
            let fd = DVector::from_fn(4, |j, _| {
                let h = 1e-5 * (1.0 + theta[j].abs());
                let mut tp = theta.clone();
                let mut tm = theta.clone();
                tp[j] += h;
                tm[j] -= h;
                let fp = objective_fp(&tp, &mdp, lambda, &phi, p, &w).unwrap();
                let fm = objective_fp(&tm, &mdp, lambda, &phi, p, &w).unwrap();
                (fp - fm) / (2.0 * h)
            });
            let err = (&g - &fd).norm() / g.norm();
            assert!(err < 1e-5, "p = {}: relative error {err}", p.get());
        }
    }
}

#[test]
fn free_functions_agree_with_model() {
    let mdp = random_mdp(3, 3, 2, 0.9);
    let (phi, _) = random_feature_matrix(3, 6, 3).unwrap();
    let lambda = Temperature::default();
    let w = WeightVector::uniform(6);
    let theta = DVector::from_vec(vec![0.3, -0.1, 0.7]);
    let model = SoftResidual::new(&mdp, lambda, &phi).unwrap();
    assert_eq!(residual_jacobian(&theta, &mdp, lambda, &phi).unwrap(), model.jacobian(&theta));
    assert!(gradient_fp(&DVector::zeros(2), &mdp, lambda, &phi, EvenP::TWO, &w).is_err());
}

#[test]
fn normalized_gradient_is_positively_collinear() {
    let mdp = psbrm_core::experiment::benchmark_mdp();
    let (phi, _) = random_feature_matrix(11, 12, 6).unwrap();
    let lambda = Temperature::default();
    let w = WeightVector::uniform(12);
    let mut rng = SeedStream::new(12);
    for p in [2, 4, 8, 16, 32] {
        let p = EvenP::new(p).unwrap();
        for _ in 0..10 {
            let theta = rng.normal_vector(6);
            let g = gradient_fp(&theta, &mdp, lambda, &phi, p, &w).unwrap();
            let ng = normalized_gradient(&theta, &mdp, lambda, &phi, p, &w).unwrap();
            let cos = g.dot(&ng) / (g.norm() * ng.norm());
            let angle = cos.min(1.0).acos();
            assert!(cos > 0.0 && angle < 1e-7, "p = {}: angle {angle}", p.get());
        }
    }
}

#[test]
fn normalized_gradient_finite_for_large_residuals() {
    let mdp = psbrm_core::experiment::benchmark_mdp();
    let (phi, _) = random_feature_matrix(5, 12, 6).unwrap();
    let lambda = Temperature::default();
    let w = WeightVector::uniform(12);
    let p = EvenP::new(80).unwrap();
    let model = SoftResidual::new(&mdp, lambda, &phi).unwrap();
    let theta = SeedStream::new(1).normal_vector(6) * 300.0;
    let delta = model.residual(&theta);
    assert!(delta.amax() > 1e2, "{}", delta.amax());
    let ng = model.normalized_gradient(&theta, p, &w);
    assert!(ng.iter().all(|v| v.is_finite()) && ng.norm() > 0.0);
}

fn monotone_run(model: &SoftResidual<'_>, p: EvenP, w: &WeightVector, alpha: f64, steps: usize) -> Option<(f64, f64)> {
    let mut theta = DVector::zeros(model.phi().d());
    let f0 = model.objective(&theta, p, w);
    let mut f = f0;
    for _ in 0..steps {
        let d = model.normalized_gradient(&theta, p, w);
        theta -= d * alpha;
        let next = model.objective(&theta, p, w);
        if next > f + 1e-12 * f.abs().max(1.0) {
            return None;
        }
        f = next;
    }
    Some((f0, f))
}

#[test]
fn small_normalized_steps_descend() {
    let mdp = psbrm_core::experiment::benchmark_mdp();
    let (phi, _) = random_feature_matrix(9, 12, 6).unwrap();
    let lambda = Temperature::default();
    let w = WeightVector::uniform(12);
    let model = SoftResidual::new(&mdp, lambda, &phi).unwrap();
    for p in [2, 8, 80] {
        let p = EvenP::new(p).unwrap();
        // halve until the whole run is monotone
        let mut alpha = 1.0;
        let (f0, f) = loop {
            if let Some(r) = monotone_run(&model, p, &w, alpha, 300) {
                break r;
            }
            alpha *= 0.5;
            assert!(alpha > 1e-10, "p = {}: no monotone step found", p.get());
        };
        assert!(f < f0, "p = {}", p.get());
    }
}

#[test]
fn full_basis_gradient_vanishes_at_fixed_point() {
    let mdp = random_mdp(4, 3, 2, 0.9);
    let lambda = Temperature::default();
    let q_star = psbrm_core::oracle::soft_fixed_point(&mdp, lambda, 1e-13, 10_000)
        .unwrap()
        .q_star;
    let phi = FeatureMap::identity(6);
    let w = WeightVector::uniform(6);
    let g = gradient_fp(&q_star, &mdp, lambda, &phi, EvenP::new(4).unwrap(), &w).unwrap();
    assert!(g.amax() < 1e-20);
}
