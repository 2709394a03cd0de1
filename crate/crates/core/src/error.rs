use thiserror::Error;

/// Errors raised by the packing library.
///
/// Vertex indices carried by variants are zero-based; the CLI converts them
/// to the one-based convention of the problem file before printing.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("face {face:?} references vertex {vertex} but the surface has {vertex_count} vertices")]
    VertexOutOfRange {
        face: [usize; 3],
        vertex: usize,
        vertex_count: usize,
    },
    #[error("face {0:?} repeats a vertex")]
    DegenerateFace([usize; 3]),
    #[error("face {0:?} appears more than once")]
    DuplicateFace([usize; 3]),
    #[error("edge {edge:?} belongs to {count} faces, expected exactly 2")]
    NonManifoldEdge { edge: [usize; 2], count: usize },
    #[error("vertex {0} is not incident to any face")]
    DanglingVertex(usize),
    #[error("surface must have at least one vertex")]
    EmptySurface,
    #[error("vertex subset must be nonempty and proper (got {size} of {vertex_count})")]
    EmptyOrFullSubset { size: usize, vertex_count: usize },
    #[error("vertex {vertex} in subset is out of range (surface has {vertex_count} vertices)")]
    SubsetVertexOutOfRange { vertex: usize, vertex_count: usize },
    #[error("radius must be positive and finite, got {0}")]
    NonPositiveRadius(f64),
    #[error("edge length must be positive and finite, got {0}")]
    NonPositiveLength(f64),
    #[error("inversive distance must be finite and >= 0, got {value} on edge {edge:?}")]
    NegativeInversiveDistance { edge: [usize; 2], value: f64 },
    #[error("non-finite input")]
    NonFiniteInput,
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("edge {0:?} is not an edge of the surface")]
    UnknownEdge([usize; 2]),
    #[error("configuration violates a strict triangle inequality")]
    OutsideDelta,
    #[error("metric is outside the packing domain (some face is not a Euclidean triangle)")]
    OutsideOmega,
    #[error("circles are not separated: inversive distance {0} <= 1")]
    NotSeparated(f64),
    #[error("target angles lie outside the admissible range")]
    TargetOutsideZ,
    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("target curvature sums to {sum}, expected 2*pi*chi = {expected}")]
    BadTotalCurvature { sum: f64, expected: f64 },
    #[error("quadrature tolerance {tolerance:e} not met with {panels} panels (estimate {estimate:e})")]
    QuadratureFailure {
        tolerance: f64,
        panels: usize,
        estimate: f64,
    },
    #[error("state became non-finite at t = {t}")]
    NonFiniteState { t: f64 },
    #[error("line search stalled at iteration {iteration} (residual {residual:e})")]
    LineSearchStall { iteration: usize, residual: f64 },
    #[error("{vertex_count} vertices need {subsets} subsets, above the budget of {budget} vertices")]
    TooManySubsets {
        vertex_count: usize,
        subsets: u128,
        budget: usize,
    },
    #[error("not enough samples for a rate fit: {0}")]
    InsufficientSamples(usize),
    #[error("trajectory did not converge")]
    NotConverged,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
