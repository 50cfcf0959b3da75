//! Exterior calculus on a single chart: differential forms, multivector
//! fields, Ehresmann connections and the splitting of a pre-multisymplectic
//! form they induce.
//!
//! Contraction convention: a multivector fills the *first* slots of a form,
//! `(i(X_1 ^ ... ^ X_k) a)(V...) = a(X_1, ..., X_k, V...)`. Other texts put
//! the factors in the last slots, which differs by `(-1)^(k(p-k))`.

mod connection;
mod form;
mod multivector;

use thiserror::Error;

pub use connection::{
    mvf_to_section, section_to_mvf, split_omega, CandidateSection, EhresmannConnection, Splitting,
};
pub use form::{DiffForm, FormDisplay, Index};
pub use multivector::{MultiVector, VectorField};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GeometryError {
    #[error("wedge of degree {degree} exceeds chart dimension {dim}")]
    DegreeOverflow { degree: usize, dim: usize },
    #[error("degree mismatch: expected {expected}, found {found}")]
    DegreeMismatch { expected: usize, found: usize },
    #[error("coordinate index out of range")]
    IndexOutOfRange,
    #[error("multivector is not transverse to the volume form (pairing = {0})")]
    NotTransverse(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
}

#[cfg(test)]
mod tests;
