//! Linear function class `Q_θ = Φθ`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::rng::SeedStream;

/// Smallest-to-largest singular value ratio below which Φ counts as rank deficient.
pub const RANK_TOL: f64 = 1e-10;

/// A full-column-rank `n × d` feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    phi: DMatrix<f64>,
}

impl FeatureMap {
    pub fn new(phi: DMatrix<f64>) -> Result<Self> {
        let (n, d) = phi.shape();
        if d == 0 || d > n {
            return Err(Error::Shape(format!("feature matrix is {n}x{d}, need 1 <= d <= n")));
        }
        if phi.iter().any(|v| !v.is_finite()) {
            return Err(Error::Shape("feature matrix has non-finite entries".into()));
        }
        let ratio = singular_value_ratio(&phi);
        if !(ratio > RANK_TOL) {
            return Err(Error::RankDeficient { ratio });
        }
        Ok(Self { phi })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            phi: DMatrix::identity(n, n),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.phi
    }

    pub fn n(&self) -> usize {
        self.phi.nrows()
    }

    pub fn d(&self) -> usize {
        self.phi.ncols()
    }

    /// `Φθ`.
    pub fn apply(&self, theta: &DVector<f64>) -> DVector<f64> {
        &self.phi * theta
    }

    pub fn check_theta(&self, theta: &DVector<f64>) -> Result<()> {
        if theta.len() != self.d() {
            return Err(Error::DimensionMismatch {
                expected: self.d(),
                found: theta.len(),
            });
        }
        Ok(())
    }

    pub fn singular_value_ratio(&self) -> f64 {
        singular_value_ratio(&self.phi)
    }
}

fn singular_value_ratio(m: &DMatrix<f64>) -> f64 {
    let sv = m.singular_values();
    let max = sv.max();
    if max == 0.0 {
        return 0.0;
    }
    sv.min() / max
}

/// Standard-normal `n × d` features from a seeded stream, row-major fill.
///
/// A rank-deficient draw is discarded and the seed incremented; the seed
/// actually used is returned alongside the map.
pub fn random_feature_matrix(seed: u64, n: usize, d: usize) -> Result<(FeatureMap, u64)> {
    if d == 0 || d > n {
        return Err(Error::Shape(format!("feature shape {n}x{d} needs 1 <= d <= n")));
    }
    let mut s = seed;
    loop {
        let phi = SeedStream::new(s).normal_matrix(n, d);
        match FeatureMap::new(phi) {
            Ok(map) => return Ok((map, s)),
            Err(Error::RankDeficient { ratio }) => {
                log::warn!("feature seed {s} rank deficient (ratio {ratio:e}); trying {}", s + 1);
                s = s.wrapping_add(1);
            }
            Err(e) => return Err(e),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_in_seed() {
        let (a, sa) = random_feature_matrix(5, 12, 6).unwrap();
        let (b, sb) = random_feature_matrix(5, 12, 6).unwrap();
        assert_eq!(sa, sb);
        assert!(a.matrix().iter().zip(b.matrix().iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_eq!(a.matrix().shape(), (12, 6));
        assert!(a.singular_value_ratio() > RANK_TOL);
        let (c, _) = random_feature_matrix(6, 12, 6).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_rank_deficient() {
        let phi = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        assert!(matches!(FeatureMap::new(phi), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn rejects_wide() {
        assert!(FeatureMap::new(DMatrix::zeros(2, 3)).is_err());
    }
}
