//! Numerical laboratory for diffusions with singular drift.
//!
//! The deterministic numerics (grids, norms, heat semigroup, dyadic boxes) are
//! generic over [`Real`]; the Monte Carlo layer works in `f64`.

pub mod chaos;
pub mod counterexamples;
pub mod error;
pub mod estimators;
pub mod fields;
pub mod gehring;
pub mod geometry;
pub mod green;
pub mod grid;
pub mod heat;
pub mod morrey;
pub mod num;
pub mod quadrature;
pub mod rng;
pub mod sde;
pub mod stats;

pub use error::{Error, Result};
pub use fields::{DriftKind, MatrixField, ScalarField, ScalarKind, SigmaKind, VectorField};
pub use geometry::{Ball, Cylinder, SpaceTimePoint};
pub use num::Real;

pub type Grid = grid::GridFunction<f64>;
pub type Grid32 = grid::GridFunction<f32>;
pub type CellField64 = gehring::CellField<f64>;
pub type CellField32 = gehring::CellField<f32>;
pub type BoxFunction64 = gehring::BoxFunction<f64>;
pub type BoxFunction32 = gehring::BoxFunction<f32>;
