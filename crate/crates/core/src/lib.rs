//! Radial sign-changing solutions of `-Δ_p u + |u|^{p-2} u = f(|x|, u)` on `ℝ^N`.
//!
//! The solver minimizes the energy over profiles with `k` prescribed sign
//! changes by gluing one-signed Nehari ground states on consecutive annuli and
//! optimizing the node radii. An independent shooting integrator serves as a
//! cross-check.

pub mod annulus;
pub mod config;
pub mod discretization;
pub mod error;
pub mod nehari;
pub mod nelder_mead;
pub mod nodal;
pub mod ode;
pub mod problem;
pub mod report;
pub mod scalar;
pub mod shooting;
pub mod tridiag;

pub use error::{Result, SolverError};
pub use problem::{ProblemSpec, Sign};
