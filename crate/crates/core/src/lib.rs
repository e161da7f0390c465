//! Discrete fractional calculus on uniform lattices.
//!
//! The crate provides the s-gradient / s-divergence calculus of off-diagonal
//! pair fields, BMO / Hardy / maximal functionals, projected gradient solvers
//! for sphere-valued `W^{s,p}`-harmonic maps with their conserved quantities,
//! and the `SO(N)` gauge minimizing `∬ |d_s Q - Q Ω|²`.

pub mod analysis;
pub mod cli;
pub mod domain;
pub mod error;
pub mod field;
pub mod fracops;
pub mod gauge;
pub mod manifold;
pub mod solver;

#[cfg(test)]
mod testutil;

pub use domain::{ball_members, build_domain, Ball, Domain, DomainSpec, Topology};
pub use error::{Error, Result};
pub use field::{NodeField, OffDiagField, ScalarField, VectorMap};
