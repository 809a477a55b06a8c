use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("period matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("period matrix is not symmetric (max asymmetry {max_asymmetry:e})")]
    NotSymmetric { max_asymmetry: f64 },

    #[error(
        "imaginary part of the period matrix is not positive definite (smallest eigenvalue {smallest_eigenvalue:e})"
    )]
    ImaginaryPartNotPositiveDefinite { smallest_eigenvalue: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid truncation policy: {0}")]
    InvalidPolicy(String),

    #[error("tail bound {tail:e} still above tolerance at the radius cap {max_radius}")]
    RadiusCapExceeded { tail: f64, max_radius: f64 },

    #[error("order {order} exceeds the implementation ceiling {ceiling}")]
    OrderCeilingExceeded { order: usize, ceiling: usize },

    #[error("jet requested with no directions and positive order")]
    NoDirections,

    #[error("all Kummer coordinates vanish")]
    AllCoordinatesVanish,

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("direction vector is zero")]
    ZeroDirection,

    #[error("points coincide modulo the lattice: {0}")]
    DuplicatePoints(String),

    #[error("jet does not contain the required entry {multi_order:?}")]
    JetTooShallow { multi_order: Vec<u32> },

    #[error("power series shapes are incompatible: {left} vs {right}")]
    ShapeMismatch { left: usize, right: usize },

    #[error("order {requested} requested but only orders up to {solved} are solved")]
    LowerOrdersUnsolved { requested: usize, solved: usize },

    #[error("order {order} unsolvable: residual {residual:e} exceeds {tolerance:e}")]
    OrderUnsolvable {
        order: usize,
        residual: f64,
        tolerance: f64,
    },

    #[error("order {order}: least-squares matrix condition number {condition:e} exceeds 1e12")]
    IllConditioned { order: usize, condition: f64 },

    #[error("leading vector field D_1 vanishes")]
    ZeroLeadingField,

    #[error("invalid sample grid: {0}")]
    InvalidGrid(String),

    #[error("secant search failed after {iterations} iterations (best residual {best_residual:e})")]
    SearchFailed { best_residual: f64, iterations: usize },

    #[error("secant search kept collapsing onto degenerate iterates ({0})")]
    DegenerateIterate(String),

    #[error("no divisor intersection points found from {starts} starts")]
    NoPointsFound { starts: usize },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),
}
