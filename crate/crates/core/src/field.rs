//! Node-indexed fields and off-diagonal pair fields.

use std::sync::Arc;

use crate::domain::Domain;
use crate::error::{Error, Result};

/// Values attached to the nodes of a domain, `components()` numbers per node.
pub trait NodeField: Sized {
    fn domain(&self) -> &Arc<Domain>;
    fn components(&self) -> usize;
    /// Node-major flat storage: node `i` owns `values[i*c..(i+1)*c]`.
    fn values(&self) -> &[f64];
    /// A field of the same kind and shape holding `values`.
    fn with_values(&self, values: Vec<f64>) -> Self;

    fn at(&self, i: usize) -> &[f64] {
        let c = self.components();
        &self.values()[i * c..(i + 1) * c]
    }
}

pub(crate) fn same_domain(a: &Arc<Domain>, b: &Arc<Domain>) -> Result<()> {
    if Arc::ptr_eq(a, b) {
        Ok(())
    } else {
        Err(Error::DomainMismatch)
    }
}

/// One real value per node.
#[derive(Debug, Clone)]
pub struct ScalarField {
    domain: Arc<Domain>,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(domain: Arc<Domain>, values: Vec<f64>) -> Result<Self> {
        if values.len() != domain.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {} nodes",
                values.len(),
                domain.len()
            )));
        }
        Ok(Self { domain, values })
    }

    pub fn from_fn(domain: Arc<Domain>, mut f: impl FnMut(&[f64]) -> f64) -> Self {
        let values = (0..domain.len()).map(|i| f(domain.node(i))).collect();
        Self { domain, values }
    }

    pub fn constant(domain: Arc<Domain>, c: f64) -> Self {
        let values = vec![c; domain.len()];
        Self { domain, values }
    }

    pub fn zeros(domain: Arc<Domain>) -> Self {
        Self::constant(domain, 0.0)
    }

    #[inline]
    pub fn get(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// `Σ_i f_i μ_i`.
    pub fn integral(&self) -> f64 {
        self.values.iter().zip(self.domain.weights()).map(|(f, w)| f * w).sum()
    }

    /// `Σ_i f_i g_i μ_i`.
    pub fn dot(&self, other: &ScalarField) -> Result<f64> {
        same_domain(&self.domain, &other.domain)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .zip(self.domain.weights())
            .map(|((a, b), w)| a * b * w)
            .sum())
    }

    pub fn l1_norm(&self) -> f64 {
        self.values.iter().zip(self.domain.weights()).map(|(f, w)| f.abs() * w).sum()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, lambda: f64) -> Self {
        self.with_values(self.values.iter().map(|v| lambda * v).collect())
    }
}

impl NodeField for ScalarField {
    fn domain(&self) -> &Arc<Domain> {
        &self.domain
    }
    fn components(&self) -> usize {
        1
    }
    fn values(&self) -> &[f64] {
        &self.values
    }
    fn with_values(&self, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), self.values.len());
        Self { domain: self.domain.clone(), values }
    }
}

/// A map from the nodes into `R^N`.
#[derive(Debug, Clone)]
pub struct VectorMap {
    domain: Arc<Domain>,
    target_dim: usize,
    values: Vec<f64>,
}

impl VectorMap {
    pub fn new(domain: Arc<Domain>, target_dim: usize, values: Vec<f64>) -> Result<Self> {
        if target_dim == 0 {
            return Err(Error::InvalidParameter("target dimension must be positive".into()));
        }
        if values.len() != domain.len() * target_dim {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {} nodes of dimension {}",
                values.len(),
                domain.len(),
                target_dim
            )));
        }
        Ok(Self { domain, target_dim, values })
    }

    pub fn from_fn(domain: Arc<Domain>, target_dim: usize, mut f: impl FnMut(&[f64], &mut [f64])) -> Self {
        let mut values = vec![0.0; domain.len() * target_dim];
        for (i, chunk) in values.chunks_mut(target_dim).enumerate() {
            f(domain.node(i), chunk);
        }
        Self { domain, target_dim, values }
    }

    pub fn zeros(domain: Arc<Domain>, target_dim: usize) -> Self {
        let values = vec![0.0; domain.len() * target_dim];
        Self { domain, target_dim, values }
    }

    pub fn target_dim(&self) -> usize {
        self.target_dim
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn at_mut(&mut self, i: usize) -> &mut [f64] {
        let n = self.target_dim;
        &mut self.values[i * n..(i + 1) * n]
    }

    /// Component `k` as a scalar field.
    pub fn component(&self, k: usize) -> ScalarField {
        let n = self.target_dim;
        let values = self.values.iter().skip(k).step_by(n).copied().collect();
        ScalarField { domain: self.domain.clone(), values }
    }

    /// `Σ_i ⟨u_i, v_i⟩ μ_i`.
    pub fn dot(&self, other: &VectorMap) -> Result<f64> {
        same_domain(&self.domain, &other.domain)?;
        if self.target_dim != other.target_dim {
            return Err(Error::ShapeMismatch("target dimensions differ".into()));
        }
        let n = self.target_dim;
        Ok(self
            .values
            .chunks(n)
            .zip(other.values.chunks(n))
            .zip(self.domain.weights())
            .map(|((a, b), w)| w * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>())
            .sum())
    }

    /// `u + λ v`.
    pub fn axpy(&self, lambda: f64, v: &VectorMap) -> Result<VectorMap> {
        same_domain(&self.domain, &v.domain)?;
        if self.target_dim != v.target_dim {
            return Err(Error::ShapeMismatch("target dimensions differ".into()));
        }
        Ok(self.with_values(self.values.iter().zip(&v.values).map(|(a, b)| a + lambda * b).collect()))
    }

    /// Applies the `N×N` row-major matrix `r` to every node value.
    pub fn rotated(&self, r: &[f64]) -> VectorMap {
        let n = self.target_dim;
        assert_eq!(r.len(), n * n);
        let mut out = vec![0.0; self.values.len()];
        for (src, dst) in self.values.chunks(n).zip(out.chunks_mut(n)) {
            for a in 0..n {
                dst[a] = (0..n).map(|b| r[a * n + b] * src[b]).sum();
            }
        }
        self.with_values(out)
    }
}

impl NodeField for VectorMap {
    fn domain(&self) -> &Arc<Domain> {
        &self.domain
    }
    fn components(&self) -> usize {
        self.target_dim
    }
    fn values(&self) -> &[f64] {
        &self.values
    }
    fn with_values(&self, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), self.values.len());
        Self { domain: self.domain.clone(), target_dim: self.target_dim, values }
    }
}

/// Values `F(x_i, x_j) ∈ R^c` on ordered node pairs with a zero diagonal.
///
/// No antisymmetry is imposed.
#[derive(Debug, Clone)]
pub struct OffDiagField {
    domain: Arc<Domain>,
    components: usize,
    values: Vec<f64>,
}

impl OffDiagField {
    pub fn new(domain: Arc<Domain>, components: usize, values: Vec<f64>) -> Result<Self> {
        let m = domain.len();
        if components == 0 {
            return Err(Error::InvalidParameter("component count must be positive".into()));
        }
        if values.len() != m * m * components {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {m}x{m} pairs with {components} components",
                values.len()
            )));
        }
        for i in 0..m {
            let base = (i * m + i) * components;
            if values[base..base + components].iter().any(|&v| v != 0.0) {
                return Err(Error::InvalidParameter(format!("nonzero diagonal entry at node {i}")));
            }
        }
        Ok(Self { domain, components, values })
    }

    pub fn zeros(domain: Arc<Domain>, components: usize) -> Self {
        let m = domain.len();
        Self { domain, components, values: vec![0.0; m * m * components] }
    }

    /// Fills `F_ij` for `i ≠ j` from `f(i, j, out)`; the diagonal stays zero.
    pub fn from_fn(domain: Arc<Domain>, components: usize, mut f: impl FnMut(usize, usize, &mut [f64])) -> Self {
        let mut field = Self::zeros(domain, components);
        let m = field.domain.len();
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    let base = (i * m + j) * components;
                    f(i, j, &mut field.values[base..base + components]);
                }
            }
        }
        field
    }

    /// Scalar field `F_ij = f(i, j)`, diagonal zero.
    pub fn scalar_from_fn(domain: Arc<Domain>, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        Self::from_fn(domain, 1, |i, j, out| out[0] = f(i, j))
    }

    pub fn domain(&self) -> &Arc<Domain> {
        &self.domain
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> &[f64] {
        let m = self.domain.len();
        let c = self.components;
        let base = (i * m + j) * c;
        &self.values[base..base + c]
    }

    /// First component of `F_ij`.
    #[inline]
    pub fn scalar(&self, i: usize, j: usize) -> f64 {
        self.values[(i * self.domain.len() + j) * self.components]
    }

    pub fn set(&mut self, i: usize, j: usize, v: &[f64]) -> Result<()> {
        if i == j {
            return Err(Error::InvalidParameter("diagonal entries are fixed at zero".into()));
        }
        let m = self.domain.len();
        let c = self.components;
        let base = (i * m + j) * c;
        self.values[base..base + c].copy_from_slice(v);
        Ok(())
    }

    pub fn component(&self, k: usize) -> OffDiagField {
        let c = self.components;
        let values = self.values.iter().skip(k).step_by(c).copied().collect();
        OffDiagField { domain: self.domain.clone(), components: 1, values }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> OffDiagField {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v = f(*v));
        out
    }

    pub fn scaled(&self, lambda: f64) -> OffDiagField {
        self.map(|v| lambda * v)
    }

    /// Entrywise `self + λ other`.
    pub fn axpy(&self, lambda: f64, other: &OffDiagField) -> Result<OffDiagField> {
        same_domain(&self.domain, &other.domain)?;
        if self.components != other.components {
            return Err(Error::ShapeMismatch("component counts differ".into()));
        }
        let mut out = self.clone();
        out.values.iter_mut().zip(&other.values).for_each(|(a, b)| *a += lambda * b);
        Ok(out)
    }

    /// Entrywise product with a scalar pair weight `w(i, j)`.
    pub fn weighted(&self, w: impl Fn(usize, usize) -> f64) -> OffDiagField {
        let m = self.domain.len();
        let c = self.components;
        let mut out = self.clone();
        for i in 0..m {
            for j in 0..m {
                let wij = if i == j { 0.0 } else { w(i, j) };
                let base = (i * m + j) * c;
                out.values[base..base + c].iter_mut().for_each(|v| *v *= wij);
            }
        }
        out
    }

    /// Swaps the arguments: `G_ij = F_ji`.
    pub fn transposed(&self) -> OffDiagField {
        let m = self.domain.len();
        let c = self.components;
        let mut out = self.clone();
        for i in 0..m {
            for j in 0..m {
                let (dst, src) = ((i * m + j) * c, (j * m + i) * c);
                out.values[dst..dst + c].copy_from_slice(&self.values[src..src + c]);
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}
