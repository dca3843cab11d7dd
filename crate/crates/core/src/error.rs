use thiserror::Error;

/// Errors produced by the adaptive solver and its building blocks.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported domain specification: {0}")]
    UnsupportedDomain(String),

    #[error("vertex on edge ({0}, {1}) is not a new interior vertex of the mesh")]
    NotANewVertex(u32, u32),

    #[error("element {0} is degenerate (zero area)")]
    DegenerateElement(usize),

    #[error("refinement depth exceeds the supported maximum of {0} bisections")]
    LevelOverflow(usize),

    #[error("meshes do not share the same initial mesh")]
    MeshMismatch,

    #[error("mesh {fine} is not a refinement of mesh {coarse}")]
    NotNested { coarse: u64, fine: u64 },

    #[error("overlay search found {found} containers for element {element} (ancestor {ancestor})")]
    AmbiguousContainer {
        element: usize,
        ancestor: usize,
        found: usize,
    },

    #[error("overlay index and barycentric test disagree for element {element}")]
    OverlayInconsistent { element: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("polynomial degree {degree} exceeds the recurrence table size {n_max}")]
    DegreeExceedsTable { degree: usize, n_max: usize },

    #[error("sparse factorization failed: {0}")]
    Factorization(String),

    #[error("solver did not converge in {iterations} iterations (last relative residual {last:.3e})")]
    NotConverged {
        iterations: usize,
        last: f64,
        residual_history: Vec<f64>,
    },

    #[error("enriched space has {size} degrees of freedom, above the cap of {cap}")]
    CapExceeded { size: usize, cap: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
