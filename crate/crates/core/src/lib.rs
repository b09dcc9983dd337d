//! Null-controllability analysis for linear parabolic-transport systems
//!
//! ```text
//! d/dt f - B d2/dx2 f + A d/dx f + K f = M u 1_omega   on the circle R / 2 pi Z
//! ```
//!
//! with `B = diag(0, D)`: per-mode Kalman analysis, minimal control time,
//! Gramian-based controls, the algebraic-solvability reduction and
//! geometric-optics quasi-solutions of the adjoint system.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algsolv;
pub mod casebook;
pub mod dynamics;
pub mod error;
pub mod hum;
pub mod linalg;
pub mod modal;
pub mod model;
pub mod polymat;
pub mod quad;
pub mod sample;
pub mod spectral;
pub mod wkb;

pub use error::{Error, Result};
