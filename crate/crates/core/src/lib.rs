//! Numerical toolkit for second-order penalized dynamics
//!
//! ```text
//! x'' + gamma(t) x' + x = J_{lambda(t) A}(x - lambda(t) D x - lambda(t) beta(t) B x)
//! ```
//!
//! whose trajectories approach solutions of `0 in A x + D x + N_C(x)` with
//! `C = zer B`. The crate provides the operator library, parameter schedules
//! with hypothesis checks, an RK4 integrator, Lyapunov-style trajectory
//! diagnostics, a problem gallery with reference solutions, and the `pendyn` CLI.

pub mod cli;
pub mod diagnostics;
pub mod dynamics;
mod error;
pub mod io;
pub mod operators;
pub mod problems;
pub mod schedules;

pub use error::{Error, Result};
pub use operators::{Matrix, Vector};
