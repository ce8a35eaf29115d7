use nalgebra::DMatrix;

use crate::mdp::TabularMdp;

/// Six-state, two-action benchmark with `γ = 0.95`.
///
/// Both actions move deterministically: action 0 cycles within `{0,1,2}` and
/// within `{3,4,5}`; action 1 swaps the halves (`s ↔ s+3 mod 6`).
pub fn benchmark_mdp() -> TabularMdp {
    #[rustfmt::skip]
    let p0 = DMatrix::from_row_slice(6, 6, &[
        0., 1., 0., 0., 0., 0.,
        0., 0., 1., 0., 0., 0.,
        1., 0., 0., 0., 0., 0.,
        0., 0., 0., 0., 1., 0.,
        0., 0., 0., 0., 0., 1.,
        0., 0., 0., 1., 0., 0.,
    ]);
    #[rustfmt::skip]
    let p1 = DMatrix::from_row_slice(6, 6, &[
        0., 0., 0., 1., 0., 0.,
        0., 0., 0., 0., 1., 0.,
        0., 0., 0., 0., 0., 1.,
        1., 0., 0., 0., 0., 0.,
        0., 1., 0., 0., 0., 0.,
        0., 0., 1., 0., 0., 0.,
    ]);
    #[rustfmt::skip]
    let r = DMatrix::from_row_slice(6, 2, &[
         0.8,  1.2,
         0.8, -0.4,
         1.0,  0.2,
         0.2,  0.6,
        -0.6,  0.4,
        -0.8,  0.3,
    ]);
    TabularMdp::from_action_matrices(&[p0, p1], r, 0.95).expect("benchmark MDP is valid")
}
