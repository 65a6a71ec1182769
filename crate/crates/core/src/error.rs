use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("face on line {line} has {arity} vertices; only triangles are supported")]
    NonTriangular { line: usize, arity: usize },

    #[error("non-manifold mesh: {0}")]
    NonManifold(String),

    #[error("mesh is not orientable")]
    NonOrientable,

    #[error("value out of domain: {0}")]
    Domain(String),

    /// The metric left the admissible space: radicand, cosh or cos argument out of range.
    #[error("degenerate edge length: {0}")]
    DegenerateLength(String),

    #[error("triangle inequality violated for lengths ({0}, {1}, {2})")]
    TriangleInequalityViolation(f64, f64, f64),

    #[error("degenerate face: {0}")]
    DegenerateFace(String),

    #[error("power circle undefined: {0}")]
    PowerCircleUndefined(String),

    #[error("cannot invert eta = {0} for the requested scheme indicators")]
    InverseUndefined(f64),

    #[error("circle packing initialization infeasible: {0}")]
    InitializationInfeasible(String),

    #[error("linear system is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("solver did not converge in {iterations} iterations (relative residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("finite-difference neighborhood is degenerate: {0}")]
    DegenerateNeighborhood(String),

    #[error("mesh is not a topological disk: {0}")]
    NotADisk(String),

    #[error("metric is not flat: max interior |K| = {max:e} exceeds {bound:e}")]
    NotFlat { max: f64, bound: f64 },

    #[error("ambiguous vertex placement at vertex {0}")]
    PlacementAmbiguity(usize),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}
