use thiserror::Error;

/// Errors produced by the focal-length pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("point is behind the camera (depth {0})")]
    NonPositiveDepth(f64),
    #[error("degenerate point configuration")]
    DegenerateConfiguration,
    #[error("generator table is invalid: {0}")]
    InvalidTable(alloc::string::String),
    #[error("Sturm chain degenerated")]
    IllConditioned,
    #[error("eigenvalue iteration did not converge")]
    EigenNoConvergence,
    #[error("constant coefficient matrix of the pencil is singular")]
    SingularC0,
    #[error("leading coefficient matrix has rank {found}, expected {expected}")]
    UnexpectedRank { expected: usize, found: usize },
    #[error("matrix is not numerically rank deficient")]
    NotRankDeficient,
    #[error("null space has dimension greater than one")]
    RankDeficiencyMismatch,
    #[error("constraint polynomial vanishes identically (degenerate motion)")]
    DegenerateMotion,
    #[error("no real root inside the focal bracket")]
    NoRealRoot,
    #[error("homography decomposition failed")]
    DecompositionFailed,
    #[error("viewing rays are parallel")]
    ParallelRays,
    #[error("world points are collinear")]
    CollinearPoints,
    #[error("no real P3P solution")]
    NoSolution,
    #[error("zero baseline")]
    ZeroBaseline,
    #[error("minimal sample rejected")]
    RejectSample,
    #[error("not enough correspondences: need {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("no model was found")]
    NoModelFound,
    #[error("known focal length of the reference view is required for this case")]
    MissingKnownFocal,
    #[error("scene generation failed after {0} attempts")]
    GenerationFailed(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
}

pub type Result<T> = core::result::Result<T, Error>;
