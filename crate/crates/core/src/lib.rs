//! Particle simulation of diffusions whose time-marginal laws are pushed
//! toward a constraint set `K` of probability measures.
//!
//! The drift correction at time `t` is `(T(x) − x) / ε`, where `T` is the
//! quadratic optimal transport map from the current particle cloud to its
//! W₂-projection on `K`. The crate provides the transport and projection
//! machinery, a frozen-drift Euler–Maruyama scheme, property checks for the
//! monotonicity and convexity inequalities behind the scheme, and a CLI.

pub mod cli;
pub mod constraint;
pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod measure;
pub mod transport;

pub use error::{Error, Result};
