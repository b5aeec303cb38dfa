//! Numerical engine for a two-player linear-quadratic stochastic differential
//! game driven by two independent Brownian motions `W` and `B`.
//!
//! The state pair solves a coupled system on `[0, T]`:
//!
//! ```text
//! -dY = (a0 + a1 Y + a2 Z + a3 v1 + a4 v2) dt + b0 dB_back - Z dW,   Y(T) = k0 + k1 W(T)
//!  dy = (c0 + c1 y + c2 Y + c3 Z) dt + d0 dW - z dB_back,            y(0) = M Y(0)
//! ```
//!
//! where `dB_back` denotes the backward (right-endpoint) Ito differential and
//! `dW` the usual forward one. Each player observes only `W` and maximizes a
//! quadratic payoff `J_i`. The crate
//!
//! * synthesizes the candidate equilibrium feedback `u_i = -(a_{2+i}/e_{i7}) p~_i`
//!   by solving the matrix Riccati system that decouples the filtered
//!   state/adjoint equations ([`filtering`]),
//! * evaluates any control policy *exactly* in the discretized game on a binary
//!   two-noise tree that enumerates all `2^(2N)` sign scenarios ([`oracle`]),
//! * checks the equilibrium/saddle-point inequalities, stationarity conditions,
//!   and discretization consistency ([`verify`]).
//!
//! The crate is `no_std` + `alloc`; float transcendentals come from `libm` so
//! results do not depend on the host math library. All randomness is derived
//! from counter-based streams ([`noise`]), which makes every computation a pure
//! function of `(seed, shape)` and therefore reproducible across thread counts
//! and platforms.

#![cfg_attr(not(test), no_std)]
// Validation guards are written `!(x > 0.0)` so NaN fails them; kernels index
// several arrays by one loop variable; tree children are addressed as the
// visible pair `(w << 1) | 0` / `(w << 1) | 1`.
#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::needless_range_loop,
    clippy::identity_op
)]

extern crate alloc;

use alloc::string::String;
use core::fmt;

/// Crate version, for run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub mod coeff;
pub mod filtering;
pub mod hamiltonian;
pub mod instances;
mod math;
pub mod mat;
pub mod model;
pub mod noise;
pub mod oracle;
pub mod verify;

/// Errors produced by construction and solver routines.
///
/// Numerical failure modes are explicit: near-singular decoupling algebra and
/// Riccati blow-up are reported as dedicated variants rather than silently
/// returning garbage, so callers can map them to a distinct exit status.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An argument violates a documented precondition (sizes, signs, ranges).
    InvalidArgument { arg: &'static str, reason: String },
    /// A requested enumeration exceeds the supported resource bound.
    ResourceLimit { what: &'static str, requested: usize, limit: usize },
    /// A spec failed validation; the report lists every violation.
    InvalidSpec(model::ValidationReport),
    /// The feature is defined but deliberately not supported (e.g. filtering
    /// under full information, where conditioning is the identity).
    UnsupportedConfiguration(String),
    /// A linear solve inside the decoupling algebra became ill-conditioned.
    DecouplingBreakdown { t: f64, cond: f64, limit: f64 },
    /// A Riccati entry left the configured trust region during integration.
    RiccatiBlowup { t: f64, max_abs: f64, limit: f64 },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument { arg, reason } => {
                write!(f, "invalid argument `{arg}`: {reason}")
            }
            Error::ResourceLimit { what, requested, limit } => {
                write!(f, "resource limit: {what} = {requested} exceeds supported maximum {limit}")
            }
            Error::InvalidSpec(report) => {
                write!(f, "spec failed validation with {} violation(s)", report.violations.len())?;
                for v in &report.violations {
                    write!(f, "; {v}")?;
                }
                Ok(())
            }
            Error::UnsupportedConfiguration(msg) => write!(f, "unsupported configuration: {msg}"),
            Error::DecouplingBreakdown { t, cond, limit } => write!(
                f,
                "decoupling breakdown at t = {t}: condition estimate {cond:.3e} exceeds {limit:.1e}"
            ),
            Error::RiccatiBlowup { t, max_abs, limit } => write!(
                f,
                "riccati blow-up at t = {t}: max |entry| = {max_abs:.3e} exceeds {limit:.1e}"
            ),
        }
    }
}

#[cfg(test)]
impl std::error::Error for Error {}

/// Crate-wide result alias.
pub type Result<T> = core::result::Result<T, Error>;
