//! Partial-identification bounds for extrapolated treatment effects in
//! multi-cutoff regression discontinuity designs.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod bandwidth;
pub mod bounds;
pub mod decision_model;
pub mod error;
pub mod fuzzy;
pub mod inference;
pub mod kernels;
pub mod linalg;
pub mod local_poly;
pub mod quadrature;
pub mod rng;
pub mod simulation;

pub use bandwidth::{BandwidthChoice, BandwidthPlan};
pub use bounds::{BoundsCurve, CutoffPair, Direction};
pub use error::{Error, Result};
pub use fuzzy::FuzzyBoundsCurve;
pub use inference::{PointwiseCI, UniformBand};
pub use kernels::{KernelFamily, KernelSpec};
pub use local_poly::{ArmSelector, Boundary, LocalFit, RdSample, Side, Subsample};
pub use simulation::Design;
