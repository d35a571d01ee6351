//! Error taxonomy for the quantization pipeline.
//!
//! Every fallible stage reports a dedicated variant so callers can tell a
//! modeling mistake (bad polytope, non-convex potential) from a numerical
//! failure (quadrature disagreement, eigensolver stagnation) without parsing
//! strings.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// The half-plane data does not describe a Delzant polytope.
    #[error("Delzant violation: {0}")]
    DelzantViolation(String),

    /// A symplectic potential failed its positive-definiteness probe.
    #[error("convexity failure at x = {x:?}: leading minors {minors:?}")]
    ConvexityFailure { x: [f64; 2], minors: [f64; 2] },

    /// Metric or Hessian data is singular where it must be invertible.
    #[error("singular metric: {0}")]
    SingularMetric(String),

    /// A torus action direction does not lift to the line bundle.
    #[error("lift obstruction: {0}")]
    LiftObstruction(String),

    /// Two quadrature refinements disagree beyond the requested tolerance.
    #[error("quadrature failure: {context}: coarse {coarse:.6e} vs fine {fine:.6e}")]
    QuadratureFailure {
        context: String,
        coarse: f64,
        fine: f64,
    },

    /// Lattice resolution too coarse for the requested flux.
    #[error("resolution error: {0}")]
    ResolutionError(String),

    /// The spectral window boundary falls inside an eigenvalue cluster.
    #[error("ambiguous spectral window: cutoff {cutoff:.4e} splits gap [{below:.4e}, {above:.4e}] with margin below 10%")]
    AmbiguousWindow { cutoff: f64, below: f64, above: f64 },

    /// A computed dimension disagrees with the lattice-count oracle.
    #[error("dimension anomaly: computed {computed}, expected {expected} ({context})")]
    DimensionAnomaly {
        computed: usize,
        expected: usize,
        context: String,
    },

    /// A section basis fails completeness or orthonormality checks.
    #[error("incomplete basis: {0}")]
    IncompleteBasis(String),

    /// Least-squares fit is rank-deficient or produced non-finite output.
    #[error("fit error: {0}")]
    FitError(String),

    /// Exact trace polynomial has wrong degree or non-matching samples.
    #[error("trace anomaly: {0}")]
    TraceAnomaly(String),

    /// A point of the manifold where every section of the sample vanishes.
    #[error("base point failure: all {dim} sections below {floor:.3e} at node {node:?}")]
    BasePointFailure {
        dim: usize,
        node: [f64; 2],
        floor: f64,
    },

    /// A finite-difference stencil would leave the valid chart.
    #[error("stencil error: {0}")]
    StencilError(String),

    /// Log-scale evaluation underflowed at a quadrature node.
    #[error("underflow at node {node:?}: log-weight {log_weight:.3e}")]
    UnderflowAtNode { node: [f64; 2], log_weight: f64 },

    /// The flow energy decreased along the degeneration direction.
    #[error("monotonicity violation at t = {t:.6e}: f jumped by {drop:.6e}")]
    MonotonicityViolation { t: f64, drop: f64 },

    /// Boundary quadrature failed to certify the requested digits.
    #[error("boundary quadrature failure: {0}")]
    BoundaryQuadratureFailure(String),

    /// Configuration or input-format problem.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Binary container is malformed or version-incompatible.
    #[error("container error: {0}")]
    ContainerError(String),
}

pub type Result<T> = std::result::Result<T, Error>;
