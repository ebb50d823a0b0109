//! Singular trajectories of control-affine and driftless systems.
//!
//! The crate parses symbolic vector fields, computes Lie brackets, builds
//! Goh matrices and Pfaffians along abnormal extremals, recovers singular
//! controls, measures corank through the controllability Gramian, tests
//! strict abnormality, solves the quadratic-cost problem by shooting and
//! cross-checks values with a two-dimensional Hamilton–Jacobi solver.

pub mod error;
pub mod expr;
pub mod extremal;
pub mod genericity;
pub mod goh;
pub mod hjb;
pub mod lie;
pub mod ocp;
pub mod ode;
pub mod singular;
pub mod system;

pub use error::{Error, Result};
