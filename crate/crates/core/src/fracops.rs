//! Discrete nonlocal calculus: s-gradient, pair pairings and norms, the
//! s-divergence, the fractional Laplacian and the `X^s_{p,q}` seminorm.
//!
//! All pair sums run over `i ≠ j` against the measure `μ_i μ_j / d_ij^n`. The
//! s-divergence is the exact adjoint of the s-gradient for that measure and the
//! node measure `μ`:
//!
//! ```text
//! Σ_k (div_s F)_k φ_k μ_k = Σ_{i≠j} F_ij (d_s φ)_ij μ_i μ_j / d_ij^n
//! ```
//!
//! which forces `div_s d_s = 2 (-Δ)^s` with the principal-value Laplacian below.

use crate::domain::{Ball, Domain};
use crate::error::{check_p, check_s, Error, Result};
use crate::field::{same_domain, NodeField, OffDiagField, ScalarField, VectorMap};

/// `(d_s f)_ij = (f_i - f_j) / d_ij^s`, one component per component of `f`.
pub fn s_gradient<F: NodeField>(f: &F, s: f64) -> Result<OffDiagField> {
    check_s(s)?;
    let domain = f.domain().clone();
    let c = f.components();
    let vals = f.values();
    let field = OffDiagField::from_fn(domain.clone(), c, |i, j, out| {
        let scale = domain.distance(i, j).powf(-s);
        for (k, o) in out.iter_mut().enumerate() {
            *o = (vals[i * c + k] - vals[j * c + k]) * scale;
        }
    });
    Ok(field)
}

fn check_pair(f: &OffDiagField, g: &OffDiagField) -> Result<()> {
    same_domain(f.domain(), g.domain())?;
    if f.components() != g.components() {
        return Err(Error::ShapeMismatch(format!(
            "component counts {} and {} differ",
            f.components(),
            g.components()
        )));
    }
    Ok(())
}

/// `⟨F, G⟩(x_i) = Σ_{j≠i} ⟨F_ij, G_ij⟩ μ_j / d_ij^n`.
pub fn pairing(f: &OffDiagField, g: &OffDiagField) -> Result<ScalarField> {
    check_pair(f, g)?;
    let domain = f.domain().clone();
    let m = domain.len();
    let n = domain.dim() as f64;
    let values = (0..m)
        .map(|i| {
            let row = domain.distance_row(i);
            (0..m)
                .filter(|&j| j != i)
                .map(|j| {
                    let dot: f64 = f.get(i, j).iter().zip(g.get(i, j)).map(|(a, b)| a * b).sum();
                    dot * domain.weight(j) / row[j].powf(n)
                })
                .sum()
        })
        .collect();
    ScalarField::new(domain, values)
}

#[inline]
fn entry_norm(v: &[f64]) -> f64 {
    if v.len() == 1 {
        v[0].abs()
    } else {
        v.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// `‖F‖_p(x_i) = (Σ_{j≠i} |F_ij|^p μ_j / d_ij^n)^{1/p}`.
pub fn local_p_norm(f: &OffDiagField, p: f64) -> Result<ScalarField> {
    check_p(p)?;
    let domain = f.domain().clone();
    let m = domain.len();
    let n = domain.dim() as f64;
    let values = (0..m)
        .map(|i| {
            let row = domain.distance_row(i);
            let sum: f64 = (0..m)
                .filter(|&j| j != i)
                .map(|j| entry_norm(f.get(i, j)).powf(p) * domain.weight(j) / row[j].powf(n))
                .sum();
            sum.powf(1.0 / p)
        })
        .collect();
    ScalarField::new(domain, values)
}

/// `‖F‖_{L^p(od)}`, optionally localized to pairs `(i, j)` with `i ∈ B` or `j ∈ B`.
pub fn offdiag_lp_norm(f: &OffDiagField, p: f64, restriction: Option<&Ball>) -> Result<f64> {
    check_p(p)?;
    let domain = f.domain();
    let m = domain.len();
    let n = domain.dim() as f64;
    let inside = match restriction {
        Some(ball) => {
            let mut mask = vec![false; m];
            for j in domain.ball_members(ball)? {
                mask[j] = true;
            }
            mask
        }
        None => vec![true; m],
    };
    let mut sum = 0.0;
    for i in 0..m {
        let row = domain.distance_row(i);
        for j in 0..m {
            if i != j && (inside[i] || inside[j]) {
                sum += entry_norm(f.get(i, j)).powf(p) * domain.weight(i) * domain.weight(j)
                    / row[j].powf(n);
            }
        }
    }
    Ok(sum.powf(1.0 / p))
}

/// Weighted pair inner product `Σ_{i≠j} ⟨F_ij, G_ij⟩ μ_i μ_j / d_ij^n`.
pub fn pair_inner(f: &OffDiagField, g: &OffDiagField) -> Result<f64> {
    Ok(pairing(f, g)?.integral())
}

/// `[f]_{W^{s,p}} = ‖d_s f‖_{L^p(od)}`.
pub fn gagliardo_seminorm<F: NodeField>(f: &F, s: f64, p: f64) -> Result<f64> {
    check_p(p)?;
    offdiag_lp_norm(&s_gradient(f, s)?, p, None)
}

fn divergence_values(f: &OffDiagField, s: f64) -> Vec<f64> {
    let domain = f.domain();
    let m = domain.len();
    let c = f.components();
    let exponent = domain.dim() as f64 + s;
    let mut out = vec![0.0; m * c];
    for k in 0..m {
        let row = domain.distance_row(k);
        let acc = &mut out[k * c..(k + 1) * c];
        for j in 0..m {
            if j == k {
                continue;
            }
            let w = domain.weight(j) / row[j].powf(exponent);
            for (a, (x, y)) in acc.iter_mut().zip(f.get(k, j).iter().zip(f.get(j, k))) {
                *a += (x - y) * w;
            }
        }
    }
    out
}

/// `(div_s F)_k = Σ_{j≠k} (F_kj - F_jk) μ_j / d_kj^{n+s}` for a scalar field `F`.
pub fn s_divergence(f: &OffDiagField, s: f64) -> Result<ScalarField> {
    check_s(s)?;
    if f.components() != 1 {
        return Err(Error::ShapeMismatch(format!(
            "s_divergence expects a scalar pair field, got {} components",
            f.components()
        )));
    }
    ScalarField::new(f.domain().clone(), divergence_values(f, s))
}

/// Componentwise s-divergence of a multi-component pair field.
pub fn s_divergence_components(f: &OffDiagField, s: f64) -> Result<VectorMap> {
    check_s(s)?;
    VectorMap::new(f.domain().clone(), f.components(), divergence_values(f, s))
}

/// `((-Δ)^s f)_k = Σ_{j≠k} (f_k - f_j) μ_j / d_kj^{n+2s}`, componentwise.
pub fn fractional_laplacian<F: NodeField>(f: &F, s: f64) -> Result<F> {
    check_s(s)?;
    let domain = f.domain();
    let m = domain.len();
    let c = f.components();
    let vals = f.values();
    let exponent = domain.dim() as f64 + 2.0 * s;
    let mut out = vec![0.0; m * c];
    for k in 0..m {
        let row = domain.distance_row(k);
        for j in 0..m {
            if j == k {
                continue;
            }
            let w = domain.weight(j) / row[j].powf(exponent);
            for a in 0..c {
                out[k * c + a] += (vals[k * c + a] - vals[j * c + a]) * w;
            }
        }
    }
    Ok(f.with_values(out))
}

/// Dense matrix of the discrete `(-Δ)^s`, row-major `M×M`.
pub fn fractional_laplacian_matrix(domain: &Domain, s: f64) -> Result<Vec<f64>> {
    check_s(s)?;
    let m = domain.len();
    let mut a = domain.kernel(domain.dim() as f64 + 2.0 * s);
    for k in 0..m {
        let row = &mut a[k * m..(k + 1) * m];
        let diag: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v = -*v);
        row[k] = diag;
    }
    Ok(a)
}

/// `‖f‖_{X^s_{p,q}} = (Σ_i μ_i (Σ_{j≠i} |f_i - f_j|^q μ_j / d_ij^{n+sq})^{p/q})^{1/p}`.
pub fn xspq_seminorm(f: &ScalarField, s: f64, p: f64, q: f64) -> Result<f64> {
    check_s(s)?;
    for (name, v) in [("p", p), ("q", q)] {
        if !(v > 1.0 && v.is_finite()) {
            return Err(Error::InvalidParameter(format!("{name} = {v} must lie in (1, ∞)")));
        }
    }
    let domain = f.domain();
    let m = domain.len();
    let exponent = domain.dim() as f64 + s * q;
    let mut total = 0.0;
    for i in 0..m {
        let row = domain.distance_row(i);
        let inner: f64 = (0..m)
            .filter(|&j| j != i)
            .map(|j| (f.get(i) - f.get(j)).abs().powf(q) * domain.weight(j) / row[j].powf(exponent))
            .sum();
        total += domain.weight(i) * inner.powf(p / q);
    }
    Ok(total.powf(1.0 / p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_domain, Topology};
    use crate::testutil::{random_offdiag, random_scalar, small_torus};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn torus(dim: usize, n: usize) -> Arc<Domain> {
        build_domain(dim, Topology::PeriodicTorus { side: 1.0 }, n).unwrap()
    }

    #[test]
    fn gradient_of_constant_vanishes() {
        let d = torus(1, 8);
        let g = s_gradient(&ScalarField::constant(d, 3.0), 0.4).unwrap();
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn gradient_two_nodes() {
        let d = small_torus(2);
        assert_eq!(d.distance(0, 1), 0.5);
        let f = ScalarField::new(d, vec![0.0, 1.0]).unwrap();
        let g = s_gradient(&f, 0.5).unwrap();
        assert!((g.scalar(0, 1) + 2f64.sqrt()).abs() < 1e-14);
        assert!((g.scalar(1, 0) - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn gradient_is_antisymmetric_and_rejects_bad_s() {
        let d = torus(2, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = random_scalar(&d, &mut rng);
        let g = s_gradient(&f, 0.3).unwrap();
        for i in 0..d.len() {
            for j in 0..d.len() {
                assert_eq!(g.scalar(i, j), -g.scalar(j, i));
            }
        }
        assert!(s_gradient(&f, 0.0).is_err());
        assert!(s_gradient(&f, 1.0).is_err());
    }

    // f = (1, 0, 0) on the three-node unit torus: d = μ = 1/3 for every pair.
    fn spike3() -> ScalarField {
        ScalarField::new(small_torus(3), vec![1.0, 0.0, 0.0]).unwrap()
    }

    #[test]
    fn pairing_three_nodes() {
        let f = spike3();
        let g = s_gradient(&f, 0.5).unwrap();
        let pf = pairing(&g, &g).unwrap();
        // each nonzero pair contributes (1/sqrt(1/3))^2 * (1/3) / (1/3) = 3
        for (got, want) in pf.values().iter().zip([6.0, 3.0, 3.0]) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
        let zero = OffDiagField::zeros(f.domain().clone(), 1);
        assert_eq!(pairing(&g, &zero).unwrap().sup_norm(), 0.0);
    }

    #[test]
    fn seminorm_three_nodes() {
        // four nonzero ordered pairs, each 3 * (1/9) / (1/3) = 1
        let v = gagliardo_seminorm(&spike3(), 0.5, 2.0).unwrap();
        assert!((v - 2.0).abs() < 1e-12);
    }

    #[test]
    fn laplacian_three_nodes() {
        let lap = fractional_laplacian(&spike3(), 0.5).unwrap();
        for (got, want) in lap.values().iter().zip([6.0, -3.0, -3.0]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn xspq_three_nodes() {
        let v = xspq_seminorm(&spike3(), 0.5, 2.0, 3.0).unwrap();
        let want = (2.0 + 2f64.powf(2.0 / 3.0)).sqrt();
        assert!((v - want).abs() < 1e-12, "{v} vs {want}");
    }

    #[test]
    fn xspq_collapses_to_gagliardo() {
        let d = torus(1, 16);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = random_scalar(&d, &mut rng);
        for p in [1.5, 2.0, 3.0] {
            let a = xspq_seminorm(&f, 0.3, p, p).unwrap();
            let b = gagliardo_seminorm(&f, 0.3, p).unwrap();
            assert!((a - b).abs() <= 1e-12 * b);
        }
        assert_eq!(xspq_seminorm(&ScalarField::constant(d.clone(), 2.0), 0.3, 2.0, 3.0).unwrap(), 0.0);
        assert!(xspq_seminorm(&f, 0.3, 1.0, 2.0).is_err());
    }

    #[test]
    fn local_norm_properties() {
        let d = torus(1, 12);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = random_offdiag(&d, 1, &mut rng);
        let n2 = local_p_norm(&f, 2.0).unwrap();
        let pf = pairing(&f, &f).unwrap();
        for i in 0..d.len() {
            assert!((n2.get(i).powi(2) - pf.get(i)).abs() < 1e-12 * pf.get(i).max(1.0));
            assert!(pf.get(i) >= 0.0);
        }
        let scaled = local_p_norm(&f.scaled(-2.5), 3.0).unwrap();
        let base = local_p_norm(&f, 3.0).unwrap();
        for i in 0..d.len() {
            assert!((scaled.get(i) - 2.5 * base.get(i)).abs() < 1e-12 * scaled.get(i));
        }
        assert_eq!(local_p_norm(&OffDiagField::zeros(d.clone(), 1), 2.0).unwrap().sup_norm(), 0.0);
        assert!(local_p_norm(&f, 0.5).is_err());
    }

    #[test]
    fn restricted_norm() {
        let d = torus(2, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f = random_offdiag(&d, 2, &mut rng);
        let full = offdiag_lp_norm(&f, 2.0, None).unwrap();
        let whole = Ball { center: 0, radius: 10.0 };
        assert!((offdiag_lp_norm(&f, 2.0, Some(&whole)).unwrap() - full).abs() < 1e-12 * full);
        for _ in 0..10 {
            let ball = Ball { center: rng.random_range(0..d.len()), radius: rng.random_range(0.05..0.6) };
            assert!(offdiag_lp_norm(&f, 2.0, Some(&ball)).unwrap() <= full * (1.0 + 1e-14));
        }
        assert_eq!(offdiag_lp_norm(&OffDiagField::zeros(d.clone(), 1), 2.0, None).unwrap(), 0.0);
        assert!(offdiag_lp_norm(&f, 0.9, None).is_err());
    }

    #[test]
    fn seminorm_shift_invariance() {
        let d = torus(1, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = random_scalar(&d, &mut rng);
        let shifted = f.with_values(f.values().iter().map(|v| v + 7.0).collect());
        let a = gagliardo_seminorm(&f, 0.5, 2.0).unwrap();
        let b = gagliardo_seminorm(&shifted, 0.5, 2.0).unwrap();
        assert!((a - b).abs() < 1e-12 * a);
        assert_eq!(gagliardo_seminorm(&ScalarField::constant(d, 1.0), 0.5, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn divergence_of_symmetric_field_vanishes() {
        let d = torus(1, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let f = random_offdiag(&d, 1, &mut rng);
        let sym = f.axpy(1.0, &f.transposed()).unwrap();
        assert!(s_divergence(&sym, 0.4).unwrap().sup_norm() < 1e-12);
        assert!(s_divergence(&random_offdiag(&d, 2, &mut rng), 0.4).is_err());
    }

    #[test]
    fn adjointness_random() {
        let d = torus(1, 16);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let f = random_offdiag(&d, 1, &mut rng);
            let phi = random_scalar(&d, &mut rng);
            let s = rng.random_range(0.05..0.95);
            let lhs = s_divergence(&f, s).unwrap().dot(&phi).unwrap();
            // brute-force right-hand side straight from the definition
            let mut rhs = 0.0;
            let mut scale = 0.0;
            for i in 0..d.len() {
                for j in 0..d.len() {
                    if i != j {
                        let dij = d.distance(i, j);
                        let term = f.scalar(i, j) * (phi.get(i) - phi.get(j)) / dij.powf(s)
                            * d.weight(i) * d.weight(j) / dij;
                        rhs += term;
                        scale += term.abs();
                    }
                }
            }
            assert!((lhs - rhs).abs() <= 1e-12 * scale, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn composition_and_energy_identity() {
        let d = torus(2, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let f = random_scalar(&d, &mut rng);
        let g = random_scalar(&d, &mut rng);
        let s = 0.35;
        let div = s_divergence(&s_gradient(&f, s).unwrap(), s).unwrap();
        let lap = fractional_laplacian(&f, s).unwrap();
        for k in 0..d.len() {
            assert!((div.get(k) - 2.0 * lap.get(k)).abs() < 1e-12 * lap.sup_norm());
        }
        let lhs = pair_inner(&s_gradient(&f, s).unwrap(), &s_gradient(&g, s).unwrap()).unwrap();
        let rhs = 2.0 * lap.dot(&g).unwrap();
        assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0));
    }

    #[test]
    fn laplacian_has_zero_mean_on_torus() {
        let d = torus(1, 11);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let f = random_scalar(&d, &mut rng);
        let lap = fractional_laplacian(&f, 0.7).unwrap();
        assert!(lap.integral().abs() < 1e-12 * lap.sup_norm());
        let c = fractional_laplacian(&ScalarField::constant(d.clone(), 4.0), 0.7).unwrap();
        assert_eq!(c.sup_norm(), 0.0);
    }

    #[test]
    fn laplacian_matrix_matches_operator() {
        let d = torus(1, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let f = random_scalar(&d, &mut rng);
        let a = fractional_laplacian_matrix(&d, 0.6).unwrap();
        let lap = fractional_laplacian(&f, 0.6).unwrap();
        let m = d.len();
        for k in 0..m {
            let v: f64 = (0..m).map(|j| a[k * m + j] * f.get(j)).sum();
            assert!((v - lap.get(k)).abs() < 1e-12 * lap.sup_norm());
        }
    }
}
