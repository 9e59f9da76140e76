//! Error types shared across the crate.

use thiserror::Error;

/// Errors from parsing or evaluating metric expressions.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at offset {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("`{name}` takes exactly one argument, got {got} (offset {offset})")]
    ArityMismatch {
        name: String,
        got: usize,
        offset: usize,
    },
}

/// Errors from metric validation and tetrad construction.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("expression error: {0}")]
    Expr(#[from] ExprError),
    #[error("g_tt = {value} must be positive at (t={t}, x={x}, y={y})")]
    NonPositiveGtt { value: f64, t: f64, x: f64, y: f64 },
    #[error("spatial block is not negative definite at (t={t}, x={x}, y={y})")]
    SpatialNotNegativeDefinite { t: f64, x: f64, y: f64 },
    #[error("metric entry is not finite at (t={t}, x={x}, y={y})")]
    NonFiniteEntry { t: f64, x: f64, y: f64 },
    #[error("coordinate transform is singular (det = {det})")]
    SingularTransform { det: f64 },
    #[error("{context}: {message}")]
    Invalid { context: String, message: String },
}

/// Errors from the coin compiler.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoinError {
    /// The deformation lies outside the region any coin set can represent.
    #[error("infeasible deformation: {message}")]
    Infeasible { message: String },
    /// Locates a per-site failure within a compiled field.
    #[error("coin compilation failed at site ({a}, {b})")]
    AtSite {
        a: usize,
        b: usize,
        #[source]
        source: Box<CoinError>,
    },
    #[error("geometry error during compilation: {0}")]
    Geometry(#[from] GeometryError),
}

/// Errors from the continuum reference solver.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("time step {dt} violates the CFL bound {bound}")]
    CflViolation { dt: f64, bound: f64 },
    #[error("norm drifted by {drift:.3e}, budget {budget:.3e}")]
    NormDrift { drift: f64, budget: f64 },
    #[error("geometry error in generator: {0}")]
    Geometry(#[from] GeometryError),
}

/// Errors from walk construction and evolution.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum WalkError {
    #[error("field dims {field:?} do not match coin dims {coins:?}")]
    DimensionMismatch {
        field: (usize, usize),
        coins: (usize, usize),
    },
    #[error("coin compilation failed: {0}")]
    Coin(#[from] CoinError),
    #[error("geometry error: {0}")]
    Geometry(#[from] GeometryError),
}

/// Errors from the comparison harness.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarnessError {
    #[error("field shapes differ: {a:?} vs {b:?}")]
    ShapeMismatch { a: (usize, usize), b: (usize, usize) },
    #[error("convergence study needs at least 3 strictly halving step sizes, got {0:?}")]
    BadEpsilonList(Vec<f64>),
    #[error("reference solution not converged: self-distance {self_distance:.3e} vs walk error {walk_error:.3e}")]
    OracleNotConverged {
        self_distance: f64,
        walk_error: f64,
    },
    #[error("geometry error: {0}")]
    Geometry(#[from] GeometryError),
    #[error("walk error: {0}")]
    Walk(#[from] WalkError),
    #[error("oracle error: {0}")]
    Oracle(#[from] OracleError),
}
