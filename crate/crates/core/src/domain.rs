//! Uniform lattices on a periodic torus or a truncated box.
//!
//! Every nonlocal integral in the crate becomes a weighted double sum over the
//! nodes of a [`Domain`]: node `i` carries the cell volume `μ_i = h^n` and the
//! pair `(i, j)` carries the distance `d_ij` (minimal-image geodesic distance on
//! the torus, Euclidean distance in the box).

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ambient geometry of the lattice. The same extent is used on every axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Topology {
    PeriodicTorus { side: f64 },
    TruncatedBox { lower: f64, upper: f64 },
}

impl Topology {
    fn extent(&self) -> f64 {
        match *self {
            Topology::PeriodicTorus { side } => side,
            Topology::TruncatedBox { lower, upper } => upper - lower,
        }
    }

    fn origin(&self) -> f64 {
        match *self {
            Topology::PeriodicTorus { .. } => 0.0,
            Topology::TruncatedBox { lower, .. } => lower,
        }
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self, Topology::PeriodicTorus { .. })
    }
}

/// Serializable description of a domain; [`DomainSpec::build`] expands it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub dim: usize,
    pub topology: Topology,
    pub nodes_per_axis: usize,
}

impl DomainSpec {
    pub fn build(&self) -> Result<Arc<Domain>> {
        build_domain(self.dim, self.topology, self.nodes_per_axis)
    }
}

/// Finite weighted node set with a dense pairwise distance table.
#[derive(Debug)]
pub struct Domain {
    dim: usize,
    topology: Topology,
    nodes_per_axis: usize,
    spacing: f64,
    coords: Vec<f64>,
    weights: Vec<f64>,
    distances: Vec<f64>,
    diameter: f64,
}

/// A ball `B(x_center, radius)` with the center given as a node index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: usize,
    pub radius: f64,
}

/// Builds a uniform lattice with `nodes_per_axis^dim` nodes.
pub fn build_domain(dim: usize, topology: Topology, nodes_per_axis: usize) -> Result<Arc<Domain>> {
    if !(1..=2).contains(&dim) {
        return Err(Error::InvalidParameter(format!("dim = {dim} must be 1 or 2")));
    }
    if nodes_per_axis < 4 {
        return Err(Error::InvalidParameter(format!(
            "nodes_per_axis = {nodes_per_axis} must be at least 4"
        )));
    }
    lattice(dim, topology, nodes_per_axis)
}

/// Lattice construction without the minimum-size rule; tiny lattices back the
/// hand-evaluated test oracles.
pub(crate) fn lattice(dim: usize, topology: Topology, nodes_per_axis: usize) -> Result<Arc<Domain>> {
    let extent = topology.extent();
    if !(extent > 0.0 && extent.is_finite()) {
        return Err(Error::InvalidParameter(format!("domain extent {extent} must be positive")));
    }

    let h = extent / nodes_per_axis as f64;
    let m = nodes_per_axis.pow(dim as u32);
    let origin = topology.origin();

    let mut coords = Vec::with_capacity(m * dim);
    for idx in 0..m {
        let mut rest = idx;
        for _ in 0..dim {
            coords.push(origin + (rest % nodes_per_axis) as f64 * h);
            rest /= nodes_per_axis;
        }
    }

    let weights = vec![h.powi(dim as i32); m];

    let mut distances = vec![0.0; m * m];
    let mut diameter: f64 = 0.0;
    for i in 0..m {
        for j in (i + 1)..m {
            let mut sq = 0.0;
            for a in 0..dim {
                let mut delta = (coords[i * dim + a] - coords[j * dim + a]).abs();
                if topology.is_periodic() {
                    delta = delta.min(extent - delta);
                }
                sq += delta * delta;
            }
            let d = sq.sqrt();
            distances[i * m + j] = d;
            distances[j * m + i] = d;
            diameter = diameter.max(d);
        }
    }

    Ok(Arc::new(Domain {
        dim,
        topology,
        nodes_per_axis,
        spacing: h,
        coords,
        weights,
        distances,
        diameter,
    }))
}

impl Domain {
    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    pub fn nodes_per_axis(&self) -> usize {
        self.nodes_per_axis
    }

    pub fn spec(&self) -> DomainSpec {
        DomainSpec { dim: self.dim, topology: self.topology, nodes_per_axis: self.nodes_per_axis }
    }

    /// Lattice spacing `h`.
    #[inline]
    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Side length of the torus or the box.
    pub fn extent(&self) -> f64 {
        self.topology.extent()
    }

    /// Largest pairwise distance.
    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.distances[i * self.len() + j]
    }

    /// Row `i` of the distance table.
    #[inline]
    pub fn distance_row(&self, i: usize) -> &[f64] {
        let m = self.len();
        &self.distances[i * m..(i + 1) * m]
    }

    pub fn volume(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Kernel table `K_ij = μ_j / d_ij^exponent` with a zero diagonal.
    pub fn kernel(&self, exponent: f64) -> Vec<f64> {
        let m = self.len();
        let mut k = vec![0.0; m * m];
        for i in 0..m {
            let row = self.distance_row(i);
            for j in 0..m {
                if i != j {
                    k[i * m + j] = self.weights[j] / row[j].powf(exponent);
                }
            }
        }
        k
    }

    /// Dyadic radii `2h, 4h, …` up to half the diameter; always at least `2h`.
    pub fn dyadic_radii(&self) -> Vec<f64> {
        let top = (self.diameter / 2.0).max(2.0 * self.spacing);
        let mut radii = Vec::new();
        let mut r = 2.0 * self.spacing;
        while r <= top * (1.0 + 1e-12) {
            radii.push(r);
            r *= 2.0;
        }
        radii
    }

    /// Node indices `j` with `d(center, j) < radius`, center included.
    pub fn ball_members(&self, ball: &Ball) -> Result<Vec<usize>> {
        if ball.center >= self.len() {
            return Err(Error::InvalidParameter(format!(
                "ball center {} out of range for {} nodes",
                ball.center,
                self.len()
            )));
        }
        Ok(self
            .distance_row(ball.center)
            .iter()
            .enumerate()
            .filter(|&(j, &d)| j == ball.center || d < ball.radius)
            .map(|(j, _)| j)
            .collect())
    }

    /// Default ball family: every node center paired with every dyadic radius.
    pub fn default_balls(&self) -> Vec<Ball> {
        let radii = self.dyadic_radii();
        (0..self.len())
            .flat_map(|c| radii.iter().map(move |&r| Ball { center: c, radius: r }))
            .collect()
    }
}

/// Free-function form of [`Domain::ball_members`].
pub fn ball_members(domain: &Domain, ball: &Ball) -> Result<Vec<usize>> {
    domain.ball_members(ball)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn torus(dim: usize, n: usize) -> Arc<Domain> {
        build_domain(dim, Topology::PeriodicTorus { side: 1.0 }, n).unwrap()
    }

    #[test]
    fn four_node_torus() {
        let d = torus(1, 4);
        assert_eq!(d.len(), 4);
        let xs: Vec<f64> = (0..4).map(|i| d.node(i)[0]).collect();
        assert_eq!(xs, vec![0.0, 0.25, 0.5, 0.75]);
        assert_eq!(d.spacing(), 0.25);
        assert_eq!(d.distance(0, 2), 0.5);
        assert_eq!(d.distance(0, 3), 0.25);
    }

    #[test]
    fn four_node_box() {
        let d = build_domain(1, Topology::TruncatedBox { lower: 0.0, upper: 1.0 }, 4).unwrap();
        assert_eq!(d.distance(0, 3), 0.75);
    }

    #[test]
    fn torus_2d_volume() {
        let d = torus(2, 8);
        assert_eq!(d.len(), 64);
        assert!((d.volume() - 1.0).abs() < 1e-12);
        assert!(d.diameter() <= 2f64.sqrt() / 2.0 + 1e-15);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(build_domain(3, Topology::PeriodicTorus { side: 1.0 }, 8).is_err());
        assert!(build_domain(0, Topology::PeriodicTorus { side: 1.0 }, 8).is_err());
        assert!(build_domain(1, Topology::PeriodicTorus { side: 1.0 }, 3).is_err());
        assert!(build_domain(1, Topology::PeriodicTorus { side: -1.0 }, 8).is_err());
    }

    #[test]
    fn balls() {
        let d = torus(1, 8);
        let mut b = d.ball_members(&Ball { center: 0, radius: 0.2 }).unwrap();
        b.sort();
        assert_eq!(b, vec![0, 1, 7]);
        let h = d.spacing();
        assert_eq!(d.ball_members(&Ball { center: 3, radius: h / 2.0 }).unwrap(), vec![3]);
        assert_eq!(d.ball_members(&Ball { center: 5, radius: 1.0 }).unwrap().len(), 8);
        assert!(d.ball_members(&Ball { center: 8, radius: 1.0 }).is_err());
    }

    #[test]
    fn refinement_keeps_volume() {
        for dim in 1..=2 {
            let mut n = 4;
            while n <= 32 {
                let v = torus(dim, n).volume();
                assert!((v - 1.0).abs() < 1e-12);
                let b = build_domain(dim, Topology::TruncatedBox { lower: -1.0, upper: 2.0 }, n)
                    .unwrap()
                    .volume();
                assert!((b - 3f64.powi(dim as i32)).abs() < 1e-12 * b);
                n *= 2;
            }
        }
    }

    #[test]
    fn dyadic_radii_cover_half_diameter() {
        let d = torus(1, 64);
        let r = d.dyadic_radii();
        assert_eq!(r.first().copied(), Some(2.0 / 64.0));
        assert!((r.last().unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(torus(1, 4).dyadic_radii(), vec![0.5]);
    }

    proptest! {
        #[test]
        fn metric_axioms(dim in 1usize..=2, n in 4usize..10, periodic in any::<bool>(),
                         i in 0usize..100, j in 0usize..100, k in 0usize..100) {
            let topo = if periodic {
                Topology::PeriodicTorus { side: 1.3 }
            } else {
                Topology::TruncatedBox { lower: 0.0, upper: 1.3 }
            };
            let d = build_domain(dim, topo, n).unwrap();
            let m = d.len();
            let (i, j, k) = (i % m, j % m, k % m);
            prop_assert_eq!(d.distance(i, j), d.distance(j, i));
            prop_assert_eq!(d.distance(i, i), 0.0);
            if i != j {
                prop_assert!(d.distance(i, j) > 0.0);
            }
            prop_assert!(d.distance(i, k) <= d.distance(i, j) + d.distance(j, k) + 1e-12);
            if periodic {
                prop_assert!(d.distance(i, j) <= 1.3 * (dim as f64).sqrt() / 2.0 + 1e-12);
            }
        }
    }
}
