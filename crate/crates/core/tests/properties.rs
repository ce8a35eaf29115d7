use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use psbrm_core::mdp::{boltzmann_policy, QTable};
use psbrm_core::norms::{
    contraction_threshold, effective_contraction_rate, quasi_optimality_constant, sup_norm, weighted_lp_norm,
};
use psbrm_core::rng::SeedStream;
use psbrm_core::{PNorm, TabularMdp, Temperature, WeightVector};

fn build_mdp(seed: u64, s: usize, a: usize, gamma: f64) -> TabularMdp {
    let mut rng = SeedStream::new(seed);
    let mut p = DMatrix::from_fn(s * a, s, |_, _| if rng.uniform() < 0.4 { 0.0 } else { rng.uniform() });
    for i in 0..s * a {
        if p.row(i).sum() == 0.0 {
            p[(i, rng.int_in(0, s - 1))] = 1.0;
        }
        let t = p.row(i).sum();
        p.row_mut(i).scale_mut(1.0 / t);
    }
    let r = DMatrix::from_fn(s, a, |_, _| rng.uniform_in(-3.0, 3.0));
    TabularMdp::new(p, r, gamma).unwrap()
}

fn mdp_strategy() -> impl Strategy<Value = (TabularMdp, Temperature, u64)> {
    (any::<u64>(), 1usize..7, 1usize..5, 0.0f64..0.99, 0.05f64..5.0, any::<u64>())
        .prop_map(|(seed, s, a, g, l, qseed)| (build_mdp(seed, s, a, g), Temperature::new(l).unwrap(), qseed))
}

fn weights_strategy(n: usize) -> impl Strategy<Value = WeightVector> {
    prop::collection::vec(0.01f64..1.0, n).prop_map(|v| WeightVector::normalized(v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn backup_is_sup_norm_contraction((mdp, lambda, qs) in mdp_strategy(), scale in 0.01f64..100.0) {
        let mut rng = SeedStream::new(qs);
        let q = rng.normal_vector(mdp.n()) * scale;
        let q2 = rng.normal_vector(mdp.n()) * scale;
        let lhs = sup_norm(&(mdp.soft_backup(lambda, &q) - mdp.soft_backup(lambda, &q2)));
        prop_assert!(lhs <= mdp.discount() * sup_norm(&(q - q2)) + 1e-10);
    }

    #[test]
    fn backup_is_monotone((mdp, lambda, qs) in mdp_strategy()) {
        let mut rng = SeedStream::new(qs);
        let q = rng.normal_vector(mdp.n()) * 5.0;
        let bump = DVector::from_fn(mdp.n(), |_, _| rng.uniform() * 2.0);
        let lo = mdp.soft_backup(lambda, &q);
        let hi = mdp.soft_backup(lambda, &(q + bump));
        for (a, b) in lo.iter().zip(hi.iter()) {
            prop_assert!(*a <= *b + 1e-12);
        }
    }

    #[test]
    fn backup_shift_covariance((mdp, lambda, qs) in mdp_strategy(), c in -100.0f64..100.0) {
        let q = SeedStream::new(qs).normal_vector(mdp.n()) * 3.0;
        let shifted = mdp.soft_backup(lambda, &q.add_scalar(c));
        let expected = mdp.soft_backup(lambda, &q).add_scalar(mdp.discount() * c);
        prop_assert!((shifted - expected).amax() <= 1e-10 * (1.0 + c.abs()));
    }

    #[test]
    fn boltzmann_rows_sum_to_one((mdp, lambda, qs) in mdp_strategy(), mag in 0.0f64..1e4) {
        let q: QTable = SeedStream::new(qs).normal_vector(mdp.n()) * mag;
        let pi = boltzmann_policy(&q, lambda, mdp.num_actions());
        for row in pi.probs().row_iter() {
            prop_assert!((row.sum() - 1.0).abs() <= 1e-12);
            prop_assert!(row.iter().all(|v| (0.0..=1.0).contains(v)));
        }
        let composed = mdp.transition_operator() * pi.averaging_operator();
        for row in composed.row_iter() {
            prop_assert!((row.sum() - 1.0).abs() <= 1e-12);
            prop_assert!(row.iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn norm_axioms(
        (x, y, w) in (2usize..20).prop_flat_map(|n| (
            prop::collection::vec(-1e3f64..1e3, n),
            prop::collection::vec(-1e3f64..1e3, n),
            weights_strategy(n),
        )),
        p in 1.01f64..200.0,
        c in -50.0f64..50.0,
    ) {
        let p = PNorm::new(p).unwrap();
        let x = DVector::from_vec(x);
        let y = DVector::from_vec(y);
        let nx = weighted_lp_norm(&x, p, &w).unwrap();
        let ny = weighted_lp_norm(&y, p, &w).unwrap();
        let ncx = weighted_lp_norm(&(&x * c), p, &w).unwrap();
        prop_assert!((ncx - c.abs() * nx).abs() <= 1e-10 * (c.abs() * nx).max(1e-300));
        let nxy = weighted_lp_norm(&(&x + &y), p, &w).unwrap();
        prop_assert!(nxy <= (nx + ny) * (1.0 + 1e-10));
    }

    #[test]
    fn quasi_optimality_constant_decreases(
        gamma in 0.05f64..0.99,
        w in (2usize..30).prop_flat_map(weights_strategy),
        steps in prop::collection::vec(0.01f64..50.0, 2..20),
    ) {
        let n = w.len();
        let p_bar = contraction_threshold(gamma, n, &w);
        let mut p = p_bar * 1.0001 + 1e-9;
        let mut prev = f64::INFINITY;
        let mut prev_rate = f64::INFINITY;
        for s in steps {
            p += s;
            let pn = PNorm::new(p.max(1.0 + 1e-9)).unwrap();
            let c = quasi_optimality_constant(gamma, pn, n, &w).constant();
            prop_assert!(c.is_some());
            let c = c.unwrap();
            prop_assert!(c < prev && c > (1.0 + gamma) / (1.0 - gamma));
            let rate = effective_contraction_rate(gamma, pn, n, &w);
            prop_assert!(rate < prev_rate && rate > gamma);
            prev = c;
            prev_rate = rate;
        }
    }

    #[test]
    fn threshold_brackets_regime(gamma in 0.05f64..0.99, w in (2usize..30).prop_flat_map(weights_strategy)) {
        let n = w.len();
        let p_bar = contraction_threshold(gamma, n, &w);
        let above = PNorm::new((p_bar * 1.001).max(1.001)).unwrap();
        prop_assert!(effective_contraction_rate(gamma, above, n, &w) < 1.0);
        if p_bar * 0.999 > 1.0 {
            let below = PNorm::new(p_bar * 0.999).unwrap();
            prop_assert!(effective_contraction_rate(gamma, below, n, &w) > 1.0);
            prop_assert!(!quasi_optimality_constant(gamma, below, n, &w).in_regime());
        }
    }
}
