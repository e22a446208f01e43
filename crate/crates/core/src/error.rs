//! Crate-wide error type.
//!
//! Variants are grouped by failure class so callers (in particular the CLI)
//! can map them onto exit codes: input and syntax problems, model constraint
//! violations, and numerical failures during assembly or stepping.

use thiserror::Error;

/// Errors produced anywhere in the pricing pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Expression text failed to parse. `offset` is the zero-based character
    /// position where the failure was detected.
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },

    /// An identifier in an expression is neither a declared variable nor a
    /// known function.
    #[error("unknown identifier `{name}` at offset {offset}")]
    UnknownIdentifier { offset: usize, name: String },

    /// Evaluating an expression left its mathematical domain (log or square
    /// root of a negative number, division by zero).
    #[error("domain error: {0}")]
    Domain(String),

    /// A structural input is invalid (bad grid bounds, missing model field,
    /// malformed argument).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A model constraint does not hold (mismatched drift matching, forbidden
    /// parameter combination).
    #[error("constraint violation: {0}")]
    Constraint(String),

    /// A metric factor, deformation, or diffusion coefficient fails strict
    /// positivity on the requested domain.
    #[error("positivity violation: {0}")]
    Positivity(String),

    /// Numerical failure at solve time (singular system, non-finite values).
    #[error("numerical failure: {0}")]
    Numerics(String),
}

pub type Result<T> = std::result::Result<T, Error>;
