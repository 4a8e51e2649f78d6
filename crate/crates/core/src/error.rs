use thiserror::Error;

pub type Result<T, E = VemError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum VemError {
    #[error("ambient dimension {0} is not supported (expected 1, 2 or 3)")]
    UnsupportedDimension(usize),

    #[error("invalid polynomial degree {degree}: {reason}")]
    InvalidDegree { degree: i32, reason: String },

    #[error("operator {op} is not defined in dimension {dim}")]
    OperatorMismatch { op: &'static str, dim: usize },

    #[error("length mismatch: expected {expected}, got {got} ({what})")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("polynomial bases do not share a center and scale")]
    BasisMismatch,

    #[error("unsupported degree profile (k_b={kb}, k_d={kd}, k_r={kr}): {reason}")]
    InvalidProfile {
        kb: i32,
        kd: i32,
        kr: i32,
        reason: String,
    },

    #[error("mesh schema violation: {0}")]
    Schema(String),

    #[error("face {face} is not planar (deviation {deviation:.3e} exceeds {tolerance:.3e})")]
    NonPlanarFace {
        face: usize,
        deviation: f64,
        tolerance: f64,
    },

    #[error("cell {cell} has an open boundary (closure residual {residual:.3e})")]
    OpenCell { cell: usize, residual: f64 },

    #[error("inconsistent orientation at face {face}: {detail}")]
    Orientation { face: usize, detail: String },

    #[error("degenerate geometry in object {object}: {detail}")]
    Degenerate { object: usize, detail: String },

    #[error(
        "moment cross-check failed on element {element}: boundary reduction and simplex \
         subdivision differ by {difference:.3e} (monomial #{monomial})"
    )]
    MomentMismatch {
        element: usize,
        monomial: usize,
        difference: f64,
    },

    #[error(
        "ambiguous numerical rank on element {element} ({what}): relative singular value \
         {value:.3e} lies in the rejection zone"
    )]
    RankAmbiguous {
        element: usize,
        what: String,
        value: f64,
    },

    #[error("rank deficiency on element {element} ({what}): expected {expected}, found {found}")]
    RankDeficient {
        element: usize,
        what: String,
        expected: usize,
        found: usize,
    },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("family {family} does not support {operation}")]
    Unsupported {
        family: &'static str,
        operation: &'static str,
    },

    #[error("degree {k} is below the exactness threshold {min} for the {dim}D complex")]
    Threshold { k: i32, min: i32, dim: usize },

    #[error("mesh is not simply connected: {0}")]
    NotSimplyConnected(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}
