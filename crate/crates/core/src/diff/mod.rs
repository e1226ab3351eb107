//! Reverse-mode differentiation, parameter storage and the Adam optimizer.

mod adam;
mod params;
mod tape;

pub use adam::{Adam, AdamConfig};
pub use params::{ParamId, ParamRecord, ParamStore};
pub use tape::{Gradients, Tape, Var};

#[derive(Debug, thiserror::Error)]
pub enum DiffError {
    #[error("parameter `{0}` already exists")]
    DuplicateParam(String),
    #[error("parameter `{0}` contains non-finite values")]
    NonFiniteParam(String),
    #[error("non-finite value produced at tape node {node}")]
    NonFinite { node: usize },
    #[error("backward requires a scalar output, got shape {shape:?}")]
    NotScalar { shape: (usize, usize) },
    #[error("backward called before any forward evaluation")]
    NoForward,
    #[error("gradient for `{0}` is not finite")]
    NonFiniteGradient(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },
}
