//! Numerical laboratory for the planar-director variational wave equation of
//! nematic liquid crystals: the pointwise model algebra, finite-difference
//! grids and stencils, an explicit RK4 solver with blowup detection,
//! vector-field diagnostics, and scripted experiments.

pub mod bump;
pub mod diagnostics;
pub mod experiments;
pub mod grid;
pub mod model;
pub mod solver;
pub mod verify;

pub use grid::{GridSpec, ScalarField, State};
pub use model::ElasticConstants;
pub use solver::{RunOutcome, RunStatus, SolverConfig, SourceSpec};
