//! Extended combinatorial Ricci flow for inversive distance circle packings.
//!
//! The crate deforms radius assignments on a closed triangulated surface
//! towards constant or prescribed discrete Gaussian curvature. Faces whose
//! induced edge lengths break a triangle inequality are handled through
//! generalized angles `(π, 0, 0)`, so the flow runs for every positive
//! radius vector and never needs surgery.

pub mod admissibility;
pub mod cli;
pub mod complex;
pub mod curvature;
pub mod error;
pub mod fixtures;
pub mod flow;
pub mod geometry;
pub mod potential;
pub mod problem;
pub mod quadrature;

pub use complex::{FaceClasses, TriangulatedSurface, VertexSubset};
pub use curvature::{InversivePacking, PackingMetric};
pub use error::{Error, Result};
pub use geometry::{InversiveWeights, TriangleConfig};
pub use potential::{CurvatureTarget, RicciPotential};
pub use flow::{FlowConfig, FlowStatus, FlowTrajectory, Method};
