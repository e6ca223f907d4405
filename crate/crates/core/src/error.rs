use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the library reports. Validation variants name the offending
/// simplex, vertex or orbit so diagnostics can be traced back to the input.
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed mesh: {0}")]
    Malformed(String),

    #[error("non-manifold incidence: simplex {simplex:?} has {cofaces} top-dimensional cofaces")]
    NonManifold { simplex: Vec<usize>, cofaces: usize },

    #[error("inconsistent orientation across face {face:?}")]
    InconsistentOrientation { face: Vec<usize> },

    #[error("dangling vertex {vertex}: not contained in any top-dimensional simplex")]
    DanglingVertex { vertex: usize },

    #[error("boundary is not closed at simplex {simplex:?} ({cofaces} boundary cofaces)")]
    OpenBoundary { simplex: Vec<usize>, cofaces: usize },

    #[error("degenerate simplex {simplex:?} (volume {volume:e})")]
    DegenerateSimplex { simplex: Vec<usize>, volume: f64 },

    #[error("invalid action: {0}")]
    InvalidAction(String),

    #[error("action is not an isometry: edge {edge:?} changes length by {defect:e}")]
    NotIsometry { edge: Vec<usize>, defect: f64 },

    #[error("action reverses orientation on the orbit of simplex {simplex:?}")]
    OrientationReversing { simplex: Vec<usize> },

    #[error("action does not preserve the boundary: orbit of simplex {simplex:?}")]
    BoundaryNotPreserved { simplex: Vec<usize> },

    #[error("field not tangent to the boundary at vertex {vertex}: defect {defect:e} > {tolerance:e}")]
    FieldNotTangent { vertex: usize, defect: f64, tolerance: f64 },

    #[error("field does not vanish at fixed vertex {vertex} (|X| = {norm:e})")]
    FieldNotZeroAtFixed { vertex: usize, norm: f64 },

    #[error("field is not invariant under the action at vertex {vertex}: defect {defect:e}")]
    FieldNotInvariant { vertex: usize, defect: f64 },

    #[error("mass matrix of degree {degree} is not positive definite")]
    SingularMass { degree: usize },

    #[error("eigensolver did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("ambiguous near-kernel: no spectral gap in {spectrum:?}")]
    AmbiguousKernel { spectrum: Vec<f64> },

    #[error("right-hand side is not orthogonal to the harmonic space (projection {projection:e})")]
    NotOrthogonalToKernel { projection: f64 },

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("oblique harmonic split is ill-conditioned: smallest principal angle {angle:e}")]
    IllConditionedOblique { angle: f64 },

    #[error("interior/boundary methods disagree: gram says interior {gram_interior}, trace says {trace_interior} (largest angle {angle:e})")]
    MethodDisagreement {
        gram_interior: usize,
        trace_interior: usize,
        angle: f64,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by the caller's input rather than by the
    /// numerical pipeline.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::NoConvergence { .. }
                | Error::SingularMass { .. }
                | Error::IllConditionedOblique { .. }
                | Error::MethodDisagreement { .. }
                | Error::AmbiguousKernel { .. }
                | Error::Csv(_)
        )
    }
}
