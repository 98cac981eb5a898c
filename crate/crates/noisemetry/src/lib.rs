//! Fisher-information tools for estimating weak excess noise injected by a
//! phase-covariant Gaussian bosonic channel.
//!
//! The crate models a single-parameter estimation problem: a channel with
//! transmissivity `kappa` adds `n_b` excess noise photons per mode, and the
//! task is to estimate `n_b` as precisely as possible. It provides
//!
//! * exact Gaussian-state evolution through the channel ([`gaussian`]),
//! * quantum Fisher information in closed form, from covariance matrices, and
//!   from a truncated Fock-space oracle ([`qfi`], [`fock`]),
//! * classical Fisher information of concrete receivers: homodyne, a
//!   two-quadrature Bell-type readout, photon counting, and photon counting
//!   after squeezing-based state nulling ([`measurements`]),
//! * frequency-integrated figures of merit for a cavity haloscope whose
//!   effective channel parameters depend on detuning ([`haloscope`]), and
//! * a multimode reduction for channels with fully correlated added noise
//!   ([`distributed`]).
//!
//! Conventions: quadratures are ordered `(q1, p1, q2, p2, ...)`, the vacuum
//! covariance is `I/2`, gains are linear power gains `G >= 1`, and photon
//! numbers are mean occupations.

pub mod distributed;
pub mod error;
pub mod fock;
pub mod gaussian;
pub mod haloscope;
pub mod measurements;
pub mod numerics;
pub mod qfi;

pub use error::{Error, Result};
