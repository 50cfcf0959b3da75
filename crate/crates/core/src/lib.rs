//! Symbolic and numeric tools for pre-multisymplectic field theories on a
//! single fibred coordinate chart.
//!
//! The pipeline: build an `(m+1)`-form `Omega` (from a Lagrangian, a
//! Hamiltonian, or directly), split it against an Ehresmann connection,
//! assemble the affine-linear system for the vertical coefficients of a
//! candidate section, and iterate constraint generations to a fixed point.
//! The integrability algorithm then enforces flatness of the chosen
//! solution, and [`integrate`] checks the result numerically.

pub mod symexpr;
pub mod geometry;
pub mod linsolve;
pub mod constraints;
pub mod fieldtheory;
pub mod integrate;
