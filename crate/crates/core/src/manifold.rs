//! Round-sphere targets: nearest-point projection, tangent projection, the
//! Killing generators of `SO(N)` and the tangency-defect diagnostic.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use serde::Serialize;

use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::field::{NodeField, VectorMap};

/// Tolerance on `| |u_i| - 1 |` for a sphere-valued map.
pub const UNIT_TOL: f64 = 1e-10;
/// Smallest node norm accepted by [`project_sphere`].
pub const MIN_NORM: f64 = 1e-8;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A map from the nodes into the unit sphere `S^{N-1} ⊂ R^N`, `N ≥ 2`.
#[derive(Debug, Clone)]
pub struct SphereMap {
    map: VectorMap,
}

impl SphereMap {
    /// Wraps `map` after checking every node value is a unit vector.
    pub fn new(map: VectorMap) -> Result<Self> {
        if map.target_dim() < 2 {
            return Err(Error::InvalidParameter("sphere targets need N >= 2".into()));
        }
        for i in 0..map.domain().len() {
            let r = norm(map.at(i));
            if (r - 1.0).abs() > UNIT_TOL {
                return Err(Error::NotOnManifold(format!("node {i} has norm {r}")));
            }
        }
        Ok(Self { map })
    }

    /// The constant map equal to `e_0` everywhere.
    pub fn constant(domain: Arc<Domain>, target_dim: usize) -> Result<Self> {
        let map = VectorMap::from_fn(domain, target_dim, |_, out| out[0] = 1.0);
        Self::new(map)
    }

    /// `x ↦ (cos 2πkx_0/L, sin 2πkx_0/L, 0, ...)`, winding `k` times along the
    /// first axis.
    pub fn winding(domain: Arc<Domain>, target_dim: usize, k: i32) -> Result<Self> {
        let side = domain.extent();
        let map = VectorMap::from_fn(domain, target_dim, |x, out| {
            let t = 2.0 * PI * k as f64 * x[0] / side;
            out[0] = t.cos();
            out[1] = t.sin();
        });
        Self::new(map)
    }

    pub fn as_map(&self) -> &VectorMap {
        &self.map
    }

    pub fn into_map(self) -> VectorMap {
        self.map
    }

    pub fn domain(&self) -> &Arc<Domain> {
        self.map.domain()
    }

    pub fn target_dim(&self) -> usize {
        self.map.target_dim()
    }

    pub fn at(&self, i: usize) -> &[f64] {
        self.map.at(i)
    }

    pub fn values(&self) -> &[f64] {
        self.map.values()
    }

    /// `R u` for a row-major rotation `R`.
    pub fn rotated(&self, r: &[f64]) -> Result<Self> {
        Self::new(self.map.rotated(r))
    }

    /// Adds independent uniform noise of size `amplitude` per coordinate and
    /// projects back to the sphere.
    pub fn perturbed(&self, amplitude: f64, rng: &mut impl Rng) -> Result<Self> {
        let mut v = self.map.clone();
        for x in v.values_mut() {
            *x += amplitude * rng.random_range(-1.0..1.0);
        }
        project_sphere(&v)
    }
}

/// `π(v)_i = v_i / |v_i|`.
pub fn project_sphere(v: &VectorMap) -> Result<SphereMap> {
    let n = v.target_dim();
    let mut out = v.values().to_vec();
    for (i, chunk) in out.chunks_mut(n).enumerate() {
        let r = norm(chunk);
        if r.is_nan() || r < MIN_NORM {
            return Err(Error::Degenerate(format!("node {i} has norm {r:e}, too small to project")));
        }
        chunk.iter_mut().for_each(|x| *x /= r);
    }
    SphereMap::new(v.with_values(out))
}

fn check_unit(p: &[f64]) -> Result<()> {
    let r = norm(p);
    if (r - 1.0).abs() > UNIT_TOL {
        return Err(Error::NotOnManifold(format!("|p| = {r}")));
    }
    Ok(())
}

/// `(I - p pᵀ) w` for a unit vector `p`.
pub fn tangent_project(p: &[f64], w: &[f64]) -> Result<Vec<f64>> {
    check_unit(p)?;
    if p.len() != w.len() {
        return Err(Error::ShapeMismatch("p and w differ in length".into()));
    }
    Ok(tangent_part(p, w))
}

pub(crate) fn tangent_part(p: &[f64], w: &[f64]) -> Vec<f64> {
    let c = dot(p, w);
    w.iter().zip(p).map(|(a, b)| a - c * b).collect()
}

/// The generators `A_{αβ} = e_α e_βᵀ - e_β e_αᵀ`, `α < β`, of `so(N)`.
#[derive(Debug, Clone)]
pub struct KillingBasis {
    n: usize,
    pairs: Vec<(usize, usize)>,
}

impl KillingBasis {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParameter("Killing basis needs N >= 2".into()));
        }
        let pairs = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
        Ok(Self { n, pairs })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of generators, `N(N-1)/2`.
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Index pair `(α, β)` of generator `k`.
    pub fn pair(&self, k: usize) -> (usize, usize) {
        self.pairs[k]
    }

    /// Generator `k` as a row-major `N×N` matrix.
    pub fn matrix(&self, k: usize) -> Vec<f64> {
        let (a, b) = self.pairs[k];
        let mut m = vec![0.0; self.n * self.n];
        m[a * self.n + b] = 1.0;
        m[b * self.n + a] = -1.0;
        m
    }

    /// The Killing field `X_k(p) = A_k p`.
    pub fn apply(&self, k: usize, p: &[f64]) -> Vec<f64> {
        let (a, b) = self.pairs[k];
        let mut out = vec![0.0; self.n];
        out[a] = p[b];
        out[b] = -p[a];
        out
    }

    /// `pᵀ A_k q`.
    pub fn form(&self, k: usize, p: &[f64], q: &[f64]) -> f64 {
        let (a, b) = self.pairs[k];
        p[a] * q[b] - p[b] * q[a]
    }
}

/// `max |Σ_k (A_k p)(A_k p)ᵀ - (I - p pᵀ)|` entrywise.
pub fn killing_projection_identity(basis: &KillingBasis, p: &[f64]) -> Result<f64> {
    check_unit(p)?;
    let n = basis.dim();
    if p.len() != n {
        return Err(Error::ShapeMismatch("p does not match the basis dimension".into()));
    }
    let mut m = vec![0.0; n * n];
    for k in 0..basis.len() {
        let x = basis.apply(k, p);
        for a in 0..n {
            for b in 0..n {
                m[a * n + b] += x[a] * x[b];
            }
        }
    }
    let mut worst: f64 = 0.0;
    for a in 0..n {
        for b in 0..n {
            let pi = if a == b { 1.0 } else { 0.0 } - p[a] * p[b];
            worst = worst.max((m[a * n + b] - pi).abs());
        }
    }
    Ok(worst)
}

/// `max_k |⟨A_k(p - q), p - q⟩|`.
pub fn killing_pointwise_property(basis: &KillingBasis, p: &[f64], q: &[f64]) -> f64 {
    let d: Vec<f64> = p.iter().zip(q).map(|(a, b)| a - b).collect();
    (0..basis.len()).map(|k| basis.form(k, &d, &d).abs()).fold(0.0, f64::max)
}

/// `Σ_k ⟨A_k p, w⟩ A_k p`; recovers `w` when `w ⟂ p`.
pub fn killing_reconstruct(basis: &KillingBasis, p: &[f64], w: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; basis.dim()];
    for k in 0..basis.len() {
        let x = basis.apply(k, p);
        let c = dot(&x, w);
        out.iter_mut().zip(&x).for_each(|(o, xi)| *o += c * xi);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TangencyDefect {
    pub max_ratio: f64,
    pub mean_ratio: f64,
    pub pairs: usize,
}

/// Ratios `|(u_i - u_j) - Π(u_j)(u_i - u_j)| / |u_i - u_j|²` over all ordered
/// pairs with `|u_i - u_j| ≥ 1e-10`.
pub fn tangency_defect(u: &SphereMap) -> Result<TangencyDefect> {
    let m = u.domain().len();
    let mut max_ratio: f64 = 0.0;
    let mut sum = 0.0;
    let mut pairs = 0;
    for i in 0..m {
        for j in 0..m {
            if i == j {
                continue;
            }
            let (ui, uj) = (u.at(i), u.at(j));
            let d: Vec<f64> = ui.iter().zip(uj).map(|(a, b)| a - b).collect();
            let r = norm(&d);
            if r < 1e-10 {
                continue;
            }
            let normal = dot(&d, uj).abs() * norm(uj);
            let ratio = normal / (r * r);
            max_ratio = max_ratio.max(ratio);
            sum += ratio;
            pairs += 1;
        }
    }
    if pairs == 0 {
        return Err(Error::Degenerate("constant map has no pairs with distinct values".into()));
    }
    Ok(TangencyDefect { max_ratio, mean_ratio: sum / pairs as f64, pairs })
}

/// Random unit vector in `R^n`, uniform on the sphere.
pub fn random_unit(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let r = norm(&v);
        if r > 0.1 && r <= 1.0 {
            return v.into_iter().map(|x| x / r).collect();
        }
    }
}
