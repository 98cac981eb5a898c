//! Crate-wide error type.
//!
//! Errors are split into two kinds so that callers (and the CLI exit-code
//! mapping) can distinguish "you asked for something unphysical" from
//! "the numerics did not converge".

use thiserror::Error;

/// Errors produced by this crate.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A parameter lies outside the physical or supported domain
    /// (negative transmissivity, noise below the amplification floor,
    /// gain below one, singular points of closed forms, ...).
    #[error("parameter domain: {0}")]
    Domain(String),

    /// A numerical routine failed to converge to the requested tolerance
    /// (adaptive quadrature subdivision limit, series iteration cap,
    /// Fock cutoff growth limit, ...).
    #[error("numerical convergence: {0}")]
    Convergence(String),
}

/// Convenience alias used throughout the crate.
pub type Result<T> = core::result::Result<T, Error>;

impl Error {
    /// Shorthand for a domain error with a formatted message.
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Shorthand for a convergence error with a formatted message.
    pub fn convergence(msg: impl Into<String>) -> Self {
        Error::Convergence(msg.into())
    }
}
