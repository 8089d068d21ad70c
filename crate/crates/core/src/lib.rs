//! Second-order deformation calculus for super Riemann surfaces.
//!
//! Values are truncated superseries in one even chart coordinate and odd
//! generators θ, ξ₁…ξₙ, cut off at ξ-degree 2. Two base curves are supported:
//! the projective line with exact Laurent arithmetic, and a flat torus with
//! truncated Fourier arithmetic.
//!
//! Module map:
//! - [`supernumber`]: the graded series type and its odd calculus.
//! - [`funcfield`]: coefficient rings (Laurent, holomorphic strip series, Fourier).
//! - [`superconformal`]: maps, vector fields, brackets, reduction modulo `D`.
//! - [`atlas`]: covers, algebraic deformations, Čech classes, equivalences.
//! - [`analytic`]: perturbed Dolbeault operators and their gauge action.
//! - [`bridge`]: Čech ↔ Dolbeault conversion, the correspondence, the pairing.
//! - [`cli`]: deformation-spec files and the command-line driver.

pub mod analytic;
pub mod atlas;
pub mod bridge;
pub mod cli;
pub mod error;
pub mod funcfield;
pub mod linalg;
pub mod superconformal;
pub mod supernumber;

pub use error::{Error, Result};
