//! `SO(N)` gauges minimizing
//!
//! ```text
//! F(P) = Σ_{i≠j} ‖(P_i - P_j)/d_ij^s - P_i Ω_ij‖²_F μ_i μ_j / d_ij^n
//! ```
//!
//! over node-indexed rotations, and the transformed potential
//!
//! ```text
//! Ω^P_ij = skew((d_s P)_ij P_jᵀ - P_i Ω_ij P_jᵀ)
//!        = ½((d_s P)_ij (P_jᵀ + P_iᵀ) - P_i Ω_ij P_jᵀ + P_j Ω_ijᵀ P_iᵀ)
//! ```
//!
//! For antisymmetric `Ω_ij` the last term is `-P_j Ω_ij P_iᵀ`. At every `P`
//! the s-divergence of `Ω^P` is half the gauge gradient, so `Ω^P` is
//! divergence-free exactly at critical points.
//!
//! Matrices are `N×N` row-major slices throughout.

use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::Rng;
use rayon::prelude::*;
use serde::ser::{Serialize, SerializeStruct, Serializer};

use crate::domain::Domain;
use crate::error::{check_s, Error, Result};
use crate::field::{NodeField, OffDiagField, VectorMap};
use crate::fracops::s_divergence;
use crate::solver::SolverConfig;

/// Tolerance for orthogonality of gauge matrices and antisymmetry of `Ω`.
pub const MATRIX_TOL: f64 = 1e-10;

mod mat {
    pub fn mul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
        let mut c = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                let aik = a[i * n + k];
                if aik == 0.0 {
                    continue;
                }
                for j in 0..n {
                    c[i * n + j] += aik * b[k * n + j];
                }
            }
        }
        c
    }

    /// `a bᵀ`
    pub fn mul_t(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
        let mut c = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                c[i * n + j] = (0..n).map(|k| a[i * n + k] * b[j * n + k]).sum();
            }
        }
        c
    }

    pub fn transpose(a: &[f64], n: usize) -> Vec<f64> {
        let mut t = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                t[j * n + i] = a[i * n + j];
            }
        }
        t
    }

    pub fn skew(a: &[f64], n: usize) -> Vec<f64> {
        let mut s = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                s[i * n + j] = 0.5 * (a[i * n + j] - a[j * n + i]);
            }
        }
        s
    }

    pub fn frob_dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    pub fn identity(n: usize) -> Vec<f64> {
        let mut m = vec![0.0; n * n];
        (0..n).for_each(|i| m[i * n + i] = 1.0);
        m
    }

    pub fn det(a: &[f64], n: usize) -> f64 {
        nalgebra::DMatrix::from_row_slice(n, n, a).determinant()
    }

    /// `exp(K) - I` for antisymmetric `K`, accurate to relative rounding even
    /// when `K` is tiny.
    pub fn expm1_skew(k: &[f64], n: usize) -> Vec<f64> {
        match n {
            1 => vec![0.0],
            2 => {
                let t = k[2];
                let h = (0.5 * t).sin();
                let c1 = -2.0 * h * h;
                vec![c1, -t.sin(), t.sin(), c1]
            }
            3 => {
                let (a, b, c) = (k[7], k[2], k[3]);
                let theta = (a * a + b * b + c * c).sqrt();
                let (f1, f2) = if theta < 1e-4 {
                    let t2 = theta * theta;
                    (1.0 - t2 / 6.0 + t2 * t2 / 120.0, 0.5 - t2 / 24.0 + t2 * t2 / 720.0)
                } else {
                    let h = (0.5 * theta).sin();
                    (theta.sin() / theta, 2.0 * h * h / (theta * theta))
                };
                let k2 = mul(k, k, 3);
                k.iter().zip(&k2).map(|(x, y)| f1 * x + f2 * y).collect()
            }
            _ => {
                let norm1 = (0..n).map(|j| (0..n).map(|i| k[i * n + j].abs()).sum::<f64>()).fold(0.0, f64::max);
                let mut squarings = 0;
                let mut scale = 1.0;
                while norm1 * scale > 0.25 {
                    scale *= 0.5;
                    squarings += 1;
                }
                let ks: Vec<f64> = k.iter().map(|x| x * scale).collect();
                // Taylor series of exp - I; ‖ks‖ ≤ ¼ so 16 terms reach rounding.
                let mut phi = ks.clone();
                let mut term = ks.clone();
                for j in 2..=16 {
                    term = mul(&term, &ks, n);
                    term.iter_mut().for_each(|x| *x /= j as f64);
                    phi.iter_mut().zip(&term).for_each(|(p, t)| *p += t);
                }
                // exp(2X) - I = 2φ + φ²
                for _ in 0..squarings {
                    let sq = mul(&phi, &phi, n);
                    phi.iter_mut().zip(&sq).for_each(|(p, q)| *p = 2.0 * *p + q);
                }
                phi
            }
        }
    }
}

/// Node-indexed rotations `P_i ∈ SO(N)`.
#[derive(Debug, Clone)]
pub struct GaugeField {
    domain: Arc<Domain>,
    n: usize,
    values: Vec<f64>,
}

impl GaugeField {
    pub fn new(domain: Arc<Domain>, n: usize, values: Vec<f64>) -> Result<Self> {
        if n == 0 || values.len() != domain.len() * n * n {
            return Err(Error::ShapeMismatch(format!("{} values for {} nodes of {n}x{n}", values.len(), domain.len())));
        }
        let g = Self { domain, n, values };
        let defect = g.orthogonality_defect();
        if !(defect <= MATRIX_TOL) {
            return Err(Error::NotOnManifold(format!("max |PᵀP - I| = {defect:e}")));
        }
        for i in 0..g.domain.len() {
            if mat::det(g.at(i), n) <= 0.0 {
                return Err(Error::NotOnManifold(format!("node {i} has negative determinant")));
            }
        }
        Ok(g)
    }

    pub fn identity(domain: Arc<Domain>, n: usize) -> Self {
        let values = mat::identity(n).repeat(domain.len());
        Self { domain, n, values }
    }

    /// `P(x) = exp(A(x))` where `f` writes the antisymmetric generator `A(x)`.
    pub fn exp_of(domain: Arc<Domain>, n: usize, mut f: impl FnMut(&[f64], &mut [f64])) -> Result<Self> {
        let mut values = Vec::with_capacity(domain.len() * n * n);
        let mut a = vec![0.0; n * n];
        for i in 0..domain.len() {
            a.iter_mut().for_each(|x| *x = 0.0);
            f(domain.node(i), &mut a);
            if antisymmetry_defect(&a, n) > MATRIX_TOL {
                return Err(Error::InvalidParameter("generator is not antisymmetric".into()));
            }
            let mut e = mat::expm1_skew(&a, n);
            (0..n).for_each(|d| e[d * n + d] += 1.0);
            values.extend(e);
        }
        Self::new(domain, n, values)
    }

    pub fn domain(&self) -> &Arc<Domain> {
        &self.domain
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, i: usize) -> &[f64] {
        let s = self.n * self.n;
        &self.values[i * s..(i + 1) * s]
    }

    /// `max_i ‖P_iᵀ P_i - I‖_max`.
    pub fn orthogonality_defect(&self) -> f64 {
        let n = self.n;
        let mut worst: f64 = 0.0;
        for p in self.values.chunks(n * n) {
            let ptp = mat::mul(&mat::transpose(p, n), p, n);
            for a in 0..n {
                for b in 0..n {
                    let target = if a == b { 1.0 } else { 0.0 };
                    worst = worst.max((ptp[a * n + b] - target).abs());
                }
            }
        }
        worst
    }

    /// Increments `exp(-τ G_k) P_k - P_k` for node-wise antisymmetric `G`.
    fn increments(&self, g: &[f64], tau: f64) -> Vec<f64> {
        let n = self.n;
        let s = n * n;
        let mut out = Vec::with_capacity(self.values.len());
        for k in 0..self.domain.len() {
            let gk: Vec<f64> = g[k * s..(k + 1) * s].iter().map(|x| -tau * x).collect();
            out.extend(mat::mul(&mat::expm1_skew(&gk, n), self.at(k), n));
        }
        out
    }

    /// `P_k ← exp(-τ G_k) P_k` at every node.
    pub fn retract(&self, g: &VectorMap, tau: f64) -> Result<GaugeField> {
        if g.target_dim() != self.n * self.n || g.domain().len() != self.domain.len() {
            return Err(Error::ShapeMismatch("step does not match the gauge".into()));
        }
        let inc = self.increments(g.values(), tau);
        Ok(self.stepped(&inc))
    }

    fn stepped(&self, inc: &[f64]) -> GaugeField {
        let values = self.values.iter().zip(inc).map(|(p, d)| p + d).collect();
        GaugeField { domain: self.domain.clone(), n: self.n, values }
    }
}

impl Serialize for GaugeField {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let matrices: Vec<&[f64]> = self.values.chunks(self.n * self.n).collect();
        let mut st = serializer.serialize_struct("GaugeField", 2)?;
        st.serialize_field("n", &self.n)?;
        st.serialize_field("matrices", &matrices)?;
        st.end()
    }
}

fn antisymmetry_defect(a: &[f64], n: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            worst = worst.max((a[i * n + j] + a[j * n + i]).abs());
        }
    }
    worst
}

/// `N×N` matrices on ordered node pairs with a zero diagonal.
#[derive(Debug, Clone)]
pub struct MatrixOffDiagField {
    n: usize,
    field: OffDiagField,
}

impl MatrixOffDiagField {
    pub fn new(domain: Arc<Domain>, n: usize, values: Vec<f64>) -> Result<Self> {
        Ok(Self { n, field: OffDiagField::new(domain, n * n, values)? })
    }

    pub fn zeros(domain: Arc<Domain>, n: usize) -> Self {
        Self { n, field: OffDiagField::zeros(domain, n * n) }
    }

    pub fn from_fn(domain: Arc<Domain>, n: usize, f: impl FnMut(usize, usize, &mut [f64])) -> Self {
        Self { n, field: OffDiagField::from_fn(domain, n * n, f) }
    }

    /// Independent entries uniform in `(-amplitude, amplitude)`, each pair
    /// value an antisymmetric matrix.
    pub fn random_antisymmetric(domain: Arc<Domain>, n: usize, amplitude: f64, rng: &mut impl Rng) -> Self {
        Self::from_fn(domain, n, |_, _, out| {
            for a in 0..n {
                for b in a + 1..n {
                    let v = amplitude * rng.random_range(-1.0..1.0);
                    out[a * n + b] = v;
                    out[b * n + a] = -v;
                }
            }
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn domain(&self) -> &Arc<Domain> {
        self.field.domain()
    }

    pub fn field(&self) -> &OffDiagField {
        &self.field
    }

    pub fn get(&self, i: usize, j: usize) -> &[f64] {
        self.field.get(i, j)
    }

    /// The scalar pair field of matrix entry `(a, b)`.
    pub fn entry(&self, a: usize, b: usize) -> OffDiagField {
        self.field.component(a * self.n + b)
    }

    /// `max_{i≠j} ‖Ω_ij + Ω_ijᵀ‖_max`.
    pub fn antisymmetry_defect(&self) -> f64 {
        let m = self.domain().len();
        let mut worst: f64 = 0.0;
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    worst = worst.max(antisymmetry_defect(self.get(i, j), self.n));
                }
            }
        }
        worst
    }

    /// `Σ_{i≠j} ‖Ω_ij‖²_F μ_i μ_j / d_ij^n`.
    pub fn norm_sq(&self) -> f64 {
        let d = self.domain();
        let m = d.len();
        let nd = d.dim() as f64;
        let mut total = 0.0;
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    let w = d.weight(i) * d.weight(j) / d.distance(i, j).powf(nd);
                    total += w * self.get(i, j).iter().map(|x| x * x).sum::<f64>();
                }
            }
        }
        total
    }

    pub fn max_abs(&self) -> f64 {
        self.field.max_abs()
    }
}

/// Pair data shared by the energy, its gradient and line-search differences.
struct GaugeProblem<'a> {
    omega: &'a MatrixOffDiagField,
    n: usize,
    m: usize,
    /// `d_ij^{-s}`
    inv_ds: Vec<f64>,
    /// `μ_i μ_j / d_ij^n`
    w: Vec<f64>,
    mu: &'a [f64],
}

impl<'a> GaugeProblem<'a> {
    fn new(omega: &'a MatrixOffDiagField, s: f64) -> Self {
        let d = omega.domain();
        let m = d.len();
        let nd = d.dim() as f64;
        let mut inv_ds = vec![0.0; m * m];
        let mut w = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    let r = d.distance(i, j);
                    inv_ds[i * m + j] = r.powf(-s);
                    w[i * m + j] = d.weight(i) * d.weight(j) / r.powf(nd);
                }
            }
        }
        Self { omega, n: omega.n(), m, inv_ds, w, mu: d.weights() }
    }

    fn block<'b>(&self, v: &'b [f64], i: usize) -> &'b [f64] {
        let s = self.n * self.n;
        &v[i * s..(i + 1) * s]
    }

    /// `R_ij = (P_i - P_j)/d^s - P_i Ω_ij`
    fn residual(&self, p: &[f64], i: usize, j: usize) -> Vec<f64> {
        let (pi, pj) = (self.block(p, i), self.block(p, j));
        let c = self.inv_ds[i * self.m + j];
        let po = mat::mul(pi, self.omega.get(i, j), self.n);
        (0..pi.len()).map(|k| (pi[k] - pj[k]) * c - po[k]).collect()
    }

    fn energy(&self, p: &[f64]) -> f64 {
        let rows: Vec<f64> = (0..self.m)
            .into_par_iter()
            .map(|i| {
                (0..self.m)
                    .filter(|&j| j != i)
                    .map(|j| self.w[i * self.m + j] * self.residual(p, i, j).iter().map(|x| x * x).sum::<f64>())
                    .sum()
            })
            .collect();
        rows.iter().sum()
    }

    /// `F(P + D) - F(P)` from the increment `D`: `Σ w ⟨δR, 2R + δR⟩`.
    fn energy_difference(&self, p: &[f64], inc: &[f64]) -> f64 {
        let rows: Vec<f64> = (0..self.m)
            .into_par_iter()
            .map(|i| {
                let mut acc = 0.0;
                for j in 0..self.m {
                    if j == i {
                        continue;
                    }
                    let r = self.residual(p, i, j);
                    let dr = self.residual(inc, i, j);
                    let v: f64 = r.iter().zip(&dr).map(|(a, b)| b * (2.0 * a + b)).sum();
                    acc += self.w[i * self.m + j] * v;
                }
                acc
            })
            .collect();
        rows.iter().sum()
    }

    /// `μ`-normalized left-trivialized gradient, one antisymmetric matrix per
    /// node.
    fn gradient(&self, p: &[f64]) -> Vec<f64> {
        let n = self.n;
        let rows: Vec<Vec<f64>> = (0..self.m)
            .into_par_iter()
            .map(|k| {
                let pk = self.block(p, k);
                let mut raw = vec![0.0; n * n];
                for j in 0..self.m {
                    if j == k {
                        continue;
                    }
                    // k in the first slot: dR_kj = α (P_k/d^s - P_k Ω_kj)
                    let c = self.inv_ds[k * self.m + j];
                    let r = self.residual(p, k, j);
                    let po = mat::mul(pk, self.omega.get(k, j), n);
                    let b: Vec<f64> = pk.iter().zip(&po).map(|(x, y)| x * c - y).collect();
                    let t = mat::mul_t(&r, &b, n);
                    let wkj = self.w[k * self.m + j];
                    raw.iter_mut().zip(&t).for_each(|(x, y)| *x += 2.0 * wkj * y);
                    // k in the second slot: dR_jk = -α P_k / d^s
                    let c = self.inv_ds[j * self.m + k];
                    let r = self.residual(p, j, k);
                    let t = mat::mul_t(&r, pk, n);
                    let wjk = self.w[j * self.m + k];
                    raw.iter_mut().zip(&t).for_each(|(x, y)| *x -= 2.0 * wjk * c * y);
                }
                mat::skew(&raw, n).into_iter().map(|x| x / self.mu[k]).collect()
            })
            .collect();
        rows.concat()
    }
}

fn check_inputs(p: &GaugeField, omega: &MatrixOffDiagField, s: f64, antisymmetric: bool) -> Result<()> {
    check_s(s)?;
    crate::field::same_domain(p.domain(), omega.domain())?;
    if p.n() != omega.n() {
        return Err(Error::ShapeMismatch("gauge and potential sizes differ".into()));
    }
    if antisymmetric {
        let defect = omega.antisymmetry_defect();
        if defect > MATRIX_TOL {
            return Err(Error::InvalidParameter(format!("Ω is not antisymmetric (defect {defect:e})")));
        }
    }
    Ok(())
}

/// `F(P)` for antisymmetric `Ω`.
pub fn gauge_energy(p: &GaugeField, omega: &MatrixOffDiagField, s: f64) -> Result<f64> {
    check_inputs(p, omega, s, true)?;
    Ok(GaugeProblem::new(omega, s).energy(p.values()))
}

/// `F(P)` for any matrix-valued `Ω`.
pub fn gauge_energy_general(p: &GaugeField, omega: &MatrixOffDiagField, s: f64) -> Result<f64> {
    check_inputs(p, omega, s, false)?;
    Ok(GaugeProblem::new(omega, s).energy(p.values()))
}

/// Gradient for the variation `P_k ↦ exp(t α_k) P_k`: returns `G` with
/// `dF/dt = Σ_k ⟨G_k, α_k⟩_F μ_k`, each `G_k` antisymmetric.
///
/// Valid for any matrix-valued `Ω`.
pub fn gauge_gradient(p: &GaugeField, omega: &MatrixOffDiagField, s: f64) -> Result<VectorMap> {
    check_inputs(p, omega, s, false)?;
    let g = GaugeProblem::new(omega, s).gradient(p.values());
    VectorMap::new(p.domain().clone(), p.n() * p.n(), g)
}

fn sup_norm(g: &[f64], block: usize) -> f64 {
    g.chunks(block).map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct GaugeReport {
    pub iterations: usize,
    pub energies: Vec<f64>,
    /// Sup over nodes of the Frobenius norm of the gradient.
    pub grad_norms: Vec<f64>,
    pub step_sizes: Vec<f64>,
    /// `F(I) = ‖Ω‖²`.
    pub identity_energy: f64,
    pub final_energy: f64,
    pub gradient_norm: f64,
    pub conservation_residual: f64,
    pub converged: bool,
    pub stalled: bool,
    #[serde(skip)]
    pub wall_time: Duration,
}

/// Riemannian gradient descent from `P ≡ I` with the exponential retraction
/// and Armijo backtracking, for antisymmetric `Ω`.
pub fn solve_gauge(omega: &MatrixOffDiagField, s: f64, cfg: &SolverConfig) -> Result<(GaugeField, GaugeReport)> {
    let start = GaugeField::identity(omega.domain().clone(), omega.n());
    solve_gauge_from(&start, omega, s, cfg, true)
}

/// [`solve_gauge`] from an arbitrary start; `antisymmetric = false` admits any
/// matrix-valued `Ω`.
pub fn solve_gauge_from(
    start: &GaugeField,
    omega: &MatrixOffDiagField,
    s: f64,
    cfg: &SolverConfig,
    antisymmetric: bool,
) -> Result<(GaugeField, GaugeReport)> {
    check_inputs(start, omega, s, antisymmetric)?;
    cfg.validate()?;
    let clock = Instant::now();
    let prob = GaugeProblem::new(omega, s);
    let block = omega.n() * omega.n();
    let mu = omega.domain().weights();
    let dot = |a: &[f64], b: &[f64]| -> f64 {
        a.chunks(block).zip(b.chunks(block)).zip(mu).map(|((x, y), w)| w * mat::frob_dot(x, y)).sum()
    };

    let mut p = start.clone();
    let mut g = prob.gradient(p.values());
    let mut e = prob.energy(p.values());
    let mut r = sup_norm(&g, block);
    let mut energies = vec![e];
    let mut grad_norms = vec![r];
    let mut step_sizes = Vec::new();
    let mut tau = cfg.initial_step;
    let mut previous: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut converged = r <= cfg.gradient_tolerance;
    let mut stalled = false;
    let mut iterations = 0;

    while !converged && iterations < cfg.max_iters {
        if let Some((step, g_prev)) = &previous {
            // Left-trivialized differences: the step was -τ G_prev at each node.
            let y: Vec<f64> = g.iter().zip(g_prev).map(|(a, b)| a - b).collect();
            let (ss, sy) = (dot(step, step), dot(step, &y));
            if sy > 0.0 && ss > 0.0 {
                tau = ss / sy;
            }
        }
        let slope = dot(&g, &g);
        let mut accepted = None;
        for _ in 0..cfg.max_backtracks {
            let inc = p.increments(&g, tau);
            let de = prob.energy_difference(p.values(), &inc);
            if de < 0.0 && de <= -cfg.sufficient_decrease * tau * slope {
                accepted = Some((inc, de));
                break;
            }
            tau *= cfg.shrink;
        }
        let Some((inc, de)) = accepted else {
            stalled = true;
            break;
        };
        let step: Vec<f64> = g.iter().map(|x| -tau * x).collect();
        p = p.stepped(&inc);
        let g_new = prob.gradient(p.values());
        previous = Some((step, std::mem::replace(&mut g, g_new)));
        e += de;
        r = sup_norm(&g, block);
        energies.push(e);
        grad_norms.push(r);
        step_sizes.push(tau);
        iterations += 1;
        converged = r <= cfg.gradient_tolerance;
    }

    let conservation_residual = conservation_of(&p, omega, s)?;
    let report = GaugeReport {
        iterations,
        energies,
        grad_norms,
        step_sizes,
        identity_energy: omega.norm_sq(),
        final_energy: prob.energy(p.values()),
        gradient_norm: r,
        conservation_residual,
        converged,
        stalled,
        wall_time: clock.elapsed(),
    };
    Ok((p, report))
}

fn omega_p_values(p: &GaugeField, omega: &MatrixOffDiagField, s: f64) -> MatrixOffDiagField {
    let n = p.n();
    let d = p.domain().clone();
    let dd = d.clone();
    MatrixOffDiagField::from_fn(d, n, |i, j, out| {
        let (pi, pj) = (p.at(i), p.at(j));
        let c = dd.distance(i, j).powf(-s);
        let dsp: Vec<f64> = pi.iter().zip(pj).map(|(a, b)| (a - b) * c).collect();
        let a = mat::mul_t(&dsp, pj, n);
        let b = mat::mul_t(&mat::mul(pi, omega.get(i, j), n), pj, n);
        let x: Vec<f64> = a.iter().zip(&b).map(|(u, v)| u - v).collect();
        out.copy_from_slice(&mat::skew(&x, n));
    })
}

/// `Ω^P` for antisymmetric `Ω`.
pub fn omega_p(p: &GaugeField, omega: &MatrixOffDiagField, s: f64) -> Result<MatrixOffDiagField> {
    check_inputs(p, omega, s, true)?;
    Ok(omega_p_values(p, omega, s))
}

/// `Ω^P` for any matrix-valued `Ω`, keeping the `P_j Ω_ijᵀ P_iᵀ` term.
pub fn omega_p_general(p: &GaugeField, omega: &MatrixOffDiagField, s: f64) -> Result<MatrixOffDiagField> {
    check_inputs(p, omega, s, false)?;
    Ok(omega_p_values(p, omega, s))
}

fn conservation_of(p: &GaugeField, omega: &MatrixOffDiagField, s: f64) -> Result<f64> {
    let op = omega_p_values(p, omega, s);
    let n = p.n();
    let mut worst: f64 = 0.0;
    for a in 0..n {
        for b in a + 1..n {
            worst = worst.max(s_divergence(&op.entry(a, b), s)?.sup_norm());
        }
    }
    Ok(worst)
}

/// `max_{a<b} sup |div_s Ω^P[a, b]|` for antisymmetric `Ω`.
pub fn gauge_conservation_residual(p: &GaugeField, omega: &MatrixOffDiagField, s: f64) -> Result<f64> {
    check_inputs(p, omega, s, true)?;
    conservation_of(p, omega, s)
}

/// `Ω_ij = P_iᵀ (P_i - P_j) / d_ij^s`, for which `F(P) = 0`.
pub fn exact_potential(p: &GaugeField, s: f64) -> Result<MatrixOffDiagField> {
    check_s(s)?;
    let n = p.n();
    let d = p.domain().clone();
    let dd = d.clone();
    Ok(MatrixOffDiagField::from_fn(d, n, |i, j, out| {
        let (pi, pj) = (p.at(i), p.at(j));
        let c = dd.distance(i, j).powf(-s);
        let diff: Vec<f64> = pi.iter().zip(pj).map(|(a, b)| (a - b) * c).collect();
        out.copy_from_slice(&mat::mul(&mat::transpose(pi, n), &diff, n));
    }))
}

/// A random rotation `exp(A)` with `A` antisymmetric, entries uniform in
/// `(-amplitude, amplitude)`.
pub fn random_rotation(n: usize, amplitude: f64, rng: &mut impl Rng) -> Vec<f64> {
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v = amplitude * rng.random_range(-1.0..1.0);
            a[i * n + j] = v;
            a[j * n + i] = -v;
        }
    }
    let mut e = mat::expm1_skew(&a, n);
    (0..n).for_each(|d| e[d * n + d] += 1.0);
    e
}

/// A gauge with independent random rotations at every node.
pub fn random_gauge(domain: Arc<Domain>, n: usize, amplitude: f64, rng: &mut impl Rng) -> Result<GaugeField> {
    let values = (0..domain.len()).flat_map(|_| random_rotation(n, amplitude, rng)).collect();
    GaugeField::new(domain, n, values)
}

/// Random node-wise antisymmetric matrices as a flattened node field.
pub fn random_skew_field(domain: Arc<Domain>, n: usize, amplitude: f64, rng: &mut impl Rng) -> VectorMap {
    VectorMap::from_fn(domain, n * n, |_, out| {
        for a in 0..n {
            for b in a + 1..n {
                let v = amplitude * rng.random_range(-1.0..1.0);
                out[a * n + b] = v;
                out[b * n + a] = -v;
            }
        }
    })
}
