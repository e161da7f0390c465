//! Finite stand-ins for the BMO seminorm, the Hardy norm and the maximal
//! function, the divergence-free projection of pair fields, the div-curl
//! pairing, and the seeded div-curl / Wente experiments.
//!
//! Every supremum over `t > 0` is taken over a finite dyadic family of radii
//! `{2h, 4h, …}` so results are reproducible and refine monotonically.

mod experiment;
mod poisson;

pub use experiment::{
    divcurl_constant_experiment, trial_rng, wente_experiment, DivCurlConfig, DivCurlReport, DivCurlTrial,
    ResolutionSummary, WenteConfig, WenteReport, WenteTrial,
};
pub use poisson::{solve_fractional_poisson, FractionalPoissonSolver, COMPATIBILITY_TOL};

use std::sync::Arc;

use crate::domain::{Ball, Domain};
use crate::error::{check_p, check_s, Error, Result};
use crate::field::{same_domain, NodeField, OffDiagField, ScalarField};
use crate::fracops::{pairing, s_divergence, s_gradient};

/// Denominators below this are treated as degenerate by the oscillation check.
pub const DEGENERATE_DENOMINATOR: f64 = 1e-14;

/// Unnormalized bump `exp(-1/(1-r²))` on `r < 1`.
pub fn bump_profile(r: f64) -> f64 {
    if r < 1.0 {
        (-1.0 / (1.0 - r * r)).exp()
    } else {
        0.0
    }
}

/// The fixed bump `κ`, rescaled to `κ_t` and renormalized to unit discrete mass.
///
/// The normalization sums the profile over the infinite lattice `hZ^n`, so it
/// does not depend on the center; on a torus with `t ≤ L/2` it equals the mass
/// seen from any node.
#[derive(Debug, Clone)]
pub struct Mollifier {
    spacing: f64,
    dim: usize,
}

impl Mollifier {
    pub fn new(domain: &Domain) -> Self {
        Self { spacing: domain.spacing(), dim: domain.dim() }
    }

    /// Discrete mass `Σ_{k ∈ Z^n} κ(|k| h / t) h^n` of the unnormalized profile.
    pub fn lattice_mass(&self, t: f64) -> f64 {
        let h = self.spacing;
        let reach = (t / h).ceil() as i64;
        let cell = h.powi(self.dim as i32);
        let mut mass = 0.0;
        if self.dim == 1 {
            for k in -reach..=reach {
                mass += bump_profile((k as f64 * h).abs() / t);
            }
        } else {
            for a in -reach..=reach {
                for b in -reach..=reach {
                    let r = ((a * a + b * b) as f64).sqrt() * h;
                    mass += bump_profile(r / t);
                }
            }
        }
        mass * cell
    }

    /// Normalized weight `κ_t` at distance `r`, given the mass at scale `t`.
    #[inline]
    pub fn weight(r: f64, t: f64, mass: f64) -> f64 {
        bump_profile(r / t) / mass
    }
}

/// Default mollifier scales `2h, 4h, …, L/2`.
pub fn default_scales(domain: &Domain) -> Vec<f64> {
    let top = (domain.extent() / 2.0).max(2.0 * domain.spacing());
    let mut scales = Vec::new();
    let mut t = 2.0 * domain.spacing();
    while t <= top * (1.0 + 1e-12) {
        scales.push(t);
        t *= 2.0;
    }
    scales
}

fn ball_stats(f: &ScalarField, members: &[usize]) -> (f64, f64) {
    let d = f.domain();
    let vol: f64 = members.iter().map(|&j| d.weight(j)).sum();
    let mean = members.iter().map(|&j| f.get(j) * d.weight(j)).sum::<f64>() / vol;
    (mean, vol)
}

/// `max_B t^{-n} Σ_{j∈B} |f_j - (f)_B| μ_j` over the given ball family.
pub fn bmo_seminorm(f: &ScalarField, balls: &[Ball]) -> Result<f64> {
    if balls.is_empty() {
        return Err(Error::InvalidParameter("empty ball family".into()));
    }
    let d = f.domain();
    let n = d.dim() as i32;
    let mut best: f64 = 0.0;
    for ball in balls {
        let members = d.ball_members(ball)?;
        let (mean, _) = ball_stats(f, &members);
        let osc: f64 = members.iter().map(|&j| (f.get(j) - mean).abs() * d.weight(j)).sum();
        best = best.max(osc / ball.radius.powi(n));
    }
    Ok(best)
}

/// [`bmo_seminorm`] over the default family (all centers × dyadic radii).
pub fn bmo_seminorm_default(f: &ScalarField) -> Result<f64> {
    bmo_seminorm(f, &f.domain().default_balls())
}

/// `Σ_i μ_i max_t |Σ_j κ_t(x_i - x_j) f_j μ_j|`.
pub fn hardy_norm(f: &ScalarField, scales: &[f64]) -> Result<f64> {
    if scales.is_empty() {
        return Err(Error::InvalidParameter("empty scale list".into()));
    }
    if let Some(t) = scales.iter().find(|t| !(**t > 0.0)) {
        return Err(Error::InvalidParameter(format!("scale {t} must be positive")));
    }
    let d = f.domain();
    let moll = Mollifier::new(d);
    let masses: Vec<f64> = scales.iter().map(|&t| moll.lattice_mass(t)).collect();
    let m = d.len();
    let mut total = 0.0;
    for i in 0..m {
        let row = d.distance_row(i);
        let mut sup: f64 = 0.0;
        for (&t, &mass) in scales.iter().zip(&masses) {
            let conv: f64 = (0..m)
                .filter(|&j| row[j] < t)
                .map(|j| Mollifier::weight(row[j], t, mass) * f.get(j) * d.weight(j))
                .sum();
            sup = sup.max(conv.abs());
        }
        total += d.weight(i) * sup;
    }
    Ok(total)
}

/// [`hardy_norm`] over [`default_scales`].
pub fn hardy_norm_default(f: &ScalarField) -> Result<f64> {
    hardy_norm(f, &default_scales(f.domain()))
}

/// `(Mf)_i = max_t` of the μ-average of `|f|` over `B(x_i, t)`, dyadic `t`.
pub fn maximal_function(f: &ScalarField) -> ScalarField {
    let d = f.domain();
    let radii = d.dyadic_radii();
    let values = (0..d.len())
        .map(|i| {
            radii
                .iter()
                .map(|&r| {
                    let members = d.ball_members(&Ball { center: i, radius: r }).expect("valid center");
                    let vol: f64 = members.iter().map(|&j| d.weight(j)).sum();
                    members.iter().map(|&j| f.get(j).abs() * d.weight(j)).sum::<f64>() / vol
                })
                .fold(0.0, f64::max)
        })
        .collect();
    f.with_values(values)
}

/// Largest ratio `t^{-s}|f_i - (f)_{B(x_i,t)}| / (Σ_{j∈B, j≠i} |f_i-f_j|^p μ_j / d_ij^{n+sp})^{1/p}`
/// over nodes and dyadic radii; degenerate denominators are skipped and an
/// empty set of admissible pairs yields `0`.
pub fn maximal_oscillation_check(f: &ScalarField, s: f64, p: f64) -> Result<f64> {
    check_s(s)?;
    check_p(p)?;
    let d = f.domain();
    let exponent = d.dim() as f64 + s * p;
    let mut best: f64 = 0.0;
    for i in 0..d.len() {
        let row = d.distance_row(i);
        for &t in &d.dyadic_radii() {
            let members = d.ball_members(&Ball { center: i, radius: t })?;
            let (mean, _) = ball_stats(f, &members);
            let tail: f64 = members
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| (f.get(i) - f.get(j)).abs().powf(p) * d.weight(j) / row[j].powf(exponent))
                .sum();
            let denom = tail.powf(1.0 / p);
            if denom < DEGENERATE_DENOMINATOR {
                continue;
            }
            best = best.max(t.powf(-s) * (f.get(i) - mean).abs() / denom);
        }
    }
    Ok(best)
}

/// Orthogonal projection of a scalar pair field onto `ker div_s`.
///
/// The pair inner product `Σ F_ij G_ij μ_i μ_j / d_ij^n` makes `d_s` the adjoint
/// of `div_s`, so the projection is `F - d_s λ` with `div_s d_s λ = div_s F`,
/// i.e. `2 (-Δ)^s λ = div_s F`, solved on the mean-zero subspace.
pub fn divfree_project(f: &OffDiagField, s: f64) -> Result<OffDiagField> {
    let solver = poisson::FractionalPoissonSolver::new(f.domain().clone(), s)?;
    divfree_project_with(&solver, f, s)
}

pub(crate) fn divfree_project_with(
    solver: &poisson::FractionalPoissonSolver,
    f: &OffDiagField,
    s: f64,
) -> Result<OffDiagField> {
    if f.components() != 1 {
        return Err(Error::ShapeMismatch(format!(
            "divfree_project expects a scalar pair field, got {} components",
            f.components()
        )));
    }
    let div = s_divergence(f, s)?;
    let lambda = solver.solve_projected(&div.scaled(0.5));
    f.axpy(-1.0, &s_gradient(&lambda, s)?)
}

/// `Σ_i φ_i ⟨F, d_s g⟩(x_i) μ_i`.
pub fn divcurl_pairing(phi: &ScalarField, f: &OffDiagField, g: &ScalarField, s: f64) -> Result<f64> {
    same_domain(phi.domain(), f.domain())?;
    same_domain(phi.domain(), g.domain())?;
    if f.components() != 1 {
        return Err(Error::ShapeMismatch("div-curl pairing needs a scalar pair field".into()));
    }
    pairing(f, &s_gradient(g, s)?)?.dot(phi)
}

/// Node nearest to `x` (minimal-image distance on a torus).
pub(crate) fn nearest_node(domain: &Arc<Domain>, x: &[f64]) -> usize {
    let periodic = domain.topology().is_periodic();
    let ext = domain.extent();
    let dist = |i: usize| -> f64 {
        domain
            .node(i)
            .iter()
            .zip(x)
            .map(|(a, b)| {
                let mut d = (a - b).abs();
                if periodic {
                    d = d.rem_euclid(ext);
                    d = d.min(ext - d);
                }
                d * d
            })
            .sum()
    };
    (0..domain.len()).min_by(|&a, &b| dist(a).total_cmp(&dist(b))).unwrap_or(0)
}
