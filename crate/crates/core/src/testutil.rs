//! Shared helpers for unit tests.

use std::sync::Arc;

use rand::Rng;

use crate::domain::{lattice, Domain, Topology};
use crate::field::{OffDiagField, ScalarField};

/// One-dimensional unit torus with `m` nodes, `m` possibly below four.
pub fn small_torus(m: usize) -> Arc<Domain> {
    lattice(1, Topology::PeriodicTorus { side: 1.0 }, m).unwrap()
}

pub fn random_scalar(d: &Arc<Domain>, rng: &mut impl Rng) -> ScalarField {
    ScalarField::from_fn(d.clone(), |_| rng.random_range(-1.0..1.0))
}

pub fn random_offdiag(d: &Arc<Domain>, c: usize, rng: &mut impl Rng) -> OffDiagField {
    OffDiagField::from_fn(d.clone(), c, |_, _, out| {
        out.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0))
    })
}
