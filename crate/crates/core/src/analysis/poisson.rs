//! Dense solver for `(-Δ)^s u = rhs` on the mean-zero subspace.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::domain::Domain;
use crate::error::{check_s, Error, Result};
use crate::field::{same_domain, NodeField, ScalarField};
use crate::fracops::fractional_laplacian_matrix;

/// Relative tolerance on `|Σ rhs_i μ_i| / Σ |rhs_i| μ_i` accepted as mean zero.
pub const COMPATIBILITY_TOL: f64 = 1e-10;

/// Cholesky factorization of `(-Δ)^s + c·1 1ᵀ`, reusable across right-hand sides.
///
/// On a uniform lattice `(-Δ)^s` is symmetric with kernel spanned by the
/// constants; the rank-one shift makes the matrix positive definite while
/// leaving its action on mean-zero vectors untouched.
pub struct FractionalPoissonSolver {
    domain: Arc<Domain>,
    factor: Cholesky<f64, Dyn>,
}

impl FractionalPoissonSolver {
    pub fn new(domain: Arc<Domain>, s: f64) -> Result<Self> {
        check_s(s)?;
        let m = domain.len();
        let mut a = DMatrix::from_row_slice(m, m, &fractional_laplacian_matrix(&domain, s)?);
        let shift = a.diagonal().mean() / m as f64;
        a.add_scalar_mut(shift);
        let factor = Cholesky::new(a)
            .ok_or_else(|| Error::Singular("fractional Laplacian is not positive on mean-zero fields".into()))?;
        Ok(Self { domain, factor })
    }

    /// Solves for the mean-zero `u`; rejects right-hand sides that are not mean zero.
    pub fn solve(&self, rhs: &ScalarField) -> Result<ScalarField> {
        same_domain(&self.domain, rhs.domain())?;
        let mean = rhs.integral();
        let mass = rhs.l1_norm();
        if mean.abs() > COMPATIBILITY_TOL * mass {
            return Err(Error::InvalidParameter(format!(
                "right-hand side has mean {mean:e} (relative {:e}); the torus problem needs mean zero",
                mean.abs() / mass
            )));
        }
        Ok(self.solve_projected(rhs))
    }

    /// Removes the μ-mean of `rhs` and solves.
    pub(crate) fn solve_projected(&self, rhs: &ScalarField) -> ScalarField {
        let avg = rhs.integral() / self.domain.volume();
        let b = DVector::from_iterator(rhs.values().len(), rhs.values().iter().map(|v| v - avg));
        let mut u = self.factor.solve(&b);
        let u_avg = u.mean();
        u.add_scalar_mut(-u_avg);
        rhs.with_values(u.iter().copied().collect())
    }
}

/// The unique mean-zero `u` with `(-Δ)^s u = rhs`.
pub fn solve_fractional_poisson(rhs: &ScalarField, s: f64) -> Result<ScalarField> {
    FractionalPoissonSolver::new(rhs.domain().clone(), s)?.solve(rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_domain, Topology};
    use crate::fracops::fractional_laplacian;
    use crate::testutil::random_scalar;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mean_zero(f: ScalarField) -> ScalarField {
        let avg = f.integral() / f.domain().volume();
        f.with_values(f.values().iter().map(|v| v - avg).collect())
    }

    #[test]
    fn zero_rhs() {
        let d = build_domain(1, Topology::PeriodicTorus { side: 1.0 }, 16).unwrap();
        let u = solve_fractional_poisson(&ScalarField::zeros(d), 0.5).unwrap();
        assert_eq!(u.sup_norm(), 0.0);
    }

    #[test]
    fn round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (dim, n, s) in [(1, 64, 0.5), (1, 32, 0.2), (2, 8, 0.7)] {
            let d = build_domain(dim, Topology::PeriodicTorus { side: 1.0 }, n).unwrap();
            let u = mean_zero(random_scalar(&d, &mut rng));
            let rhs = fractional_laplacian(&u, s).unwrap();
            let back = solve_fractional_poisson(&rhs, s).unwrap();
            let err = back.values().iter().zip(u.values()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(err < 1e-8 * u.sup_norm(), "dim {dim}: {err}");
            let lap = fractional_laplacian(&back, s).unwrap();
            let res = lap.values().iter().zip(rhs.values()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(res <= 1e-10 * rhs.sup_norm());
        }
    }

    #[test]
    fn linear_in_rhs() {
        let d = build_domain(1, Topology::PeriodicTorus { side: 1.0 }, 24).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let a = mean_zero(random_scalar(&d, &mut rng));
        let b = mean_zero(random_scalar(&d, &mut rng));
        let solver = FractionalPoissonSolver::new(d.clone(), 0.5).unwrap();
        let sum = a.with_values(a.values().iter().zip(b.values()).map(|(x, y)| 2.0 * x - y).collect());
        let ua = solver.solve(&a).unwrap();
        let ub = solver.solve(&b).unwrap();
        let us = solver.solve(&sum).unwrap();
        for i in 0..d.len() {
            assert!((us.get(i) - (2.0 * ua.get(i) - ub.get(i))).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_incompatible_rhs() {
        let d = build_domain(1, Topology::PeriodicTorus { side: 1.0 }, 16).unwrap();
        assert!(solve_fractional_poisson(&ScalarField::constant(d.clone(), 1.0), 0.5).is_err());
        assert!(solve_fractional_poisson(&ScalarField::zeros(d), 1.5).is_err());
    }
}
