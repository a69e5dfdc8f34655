//! Numerical laboratory for sub-Laplacians with drift on the affine group
//! `ax+b` of the line.
//!
//! The crate covers group arithmetic, grid discretisations in `(x, ln a)`
//! coordinates, drifted heat kernels anchored to the hyperbolic heat kernel,
//! Bessel potentials and three routes to weighted Sobolev norms, embedding
//! and counterexample scans, and Duhamel/Picard solvers for semilinear heat
//! and Schrödinger equations.

pub mod balls;
pub mod bessel;
pub mod embeddings;
pub mod error;
pub mod families;
pub mod group;
pub mod hardy;
pub mod grid;
pub mod heat;
pub mod kernel;
pub mod pde;
pub mod quad;
pub mod report;
pub mod sobolev;

pub use error::{LabError, Result};
pub use group::{CharacterSpec, DriftData, GroupKind, GroupModel, GroupPoint};
pub use grid::{Field, GridFunction, GridSpec, MeasureTag};

/// Library version, recorded in every run report.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
