use thiserror::Error;

/// Crate-wide error type.
///
/// Variants mirror the failure modes of the public operations: domain and
/// range violations of loss functions, growth-ratio divergence on the
/// estimation grid, geometric failures (invalid points, cut locus), and
/// solver-level problems.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("growth ratio still rising at the end of the grid: {0}")]
    Divergence(String),

    #[error("family admits no finite exponential dominator: {0}")]
    NotDominated(String),

    #[error("invalid point: {0}")]
    InvalidPoint(String),

    #[error("cut locus: {0}")]
    CutLocus(String),

    #[error("non-differentiable: {0}")]
    NonDifferentiable(String),

    #[error("region required: {0}")]
    RegionRequired(String),

    #[error("resolution error: {0}")]
    Resolution(String),

    #[error("empty set: {0}")]
    EmptySet(String),

    #[error("unsupported space: {0}")]
    UnsupportedSpace(String),

    #[error("inner solver failed: {0}")]
    InnerSolver(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
