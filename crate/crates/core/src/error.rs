use crate::mesh::Point2;

/// Errors surfaced by mesh generation, assembly and compression.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("grading point ({x}, {y}) does not lie on the mesh skeleton")]
    GradingPointOffSkeleton { x: f64, y: f64 },

    #[error(
        "grading law not achievable with the given parameters: \
         measured ratio band [{c_lo:.3e}, {c_hi:.3e}] exceeds the allowed spread {max_spread}"
    )]
    GradingUnachievable { c_lo: f64, c_hi: f64, max_spread: f64 },

    #[error("cluster is empty")]
    EmptyCluster,

    #[error("cluster references element {id}, but the mesh has only {count} elements")]
    ClusterOutOfRange { id: usize, count: usize },

    #[error("coefficient a1 loses coercivity at ({x}, {y}): min eigenvalue of sym part = {eig:.3e}")]
    CoercivityFailure { x: f64, y: f64, eig: f64 },

    #[error("linear solver failed: {0}")]
    SolverFailure(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error(
        "dense budget exceeded: N = {n} > budget {budget} \
         (a dense inverse would need about {bytes} bytes)"
    )]
    DenseBudgetExceeded { n: usize, budget: usize, bytes: u64 },

    #[error(
        "cut-off radius too small: delta = {delta:.3e} < floor {floor:.3e} \
         (h_max of the cluster is {h_max:.3e})"
    )]
    CutoffRadiusTooSmall { delta: f64, floor: f64, h_max: f64 },

    #[error("function is not locally discrete harmonic: residual {residual:.3e} > {tolerance:.3e}")]
    NotHarmonic { residual: f64, tolerance: f64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn coercivity(p: Point2, eig: f64) -> Self {
        Error::CoercivityFailure { x: p.x, y: p.y, eig }
    }
}
