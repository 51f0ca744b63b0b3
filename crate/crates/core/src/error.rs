use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CrError {
    #[error("invalid signature: {0}")]
    InvalidSignature(String),

    #[error("inadmissible point: |z_{block}| = {norm:e} is below the admissibility margin")]
    InadmissiblePoint { block: usize, norm: f64 },

    #[error("point has dimension {found}, signature needs {expected}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("branch failure: {0}")]
    BranchFailure(String),

    #[error("rank deficiency in block {block}: expected {expected}, found {found}")]
    RankDeficiency { block: usize, expected: usize, found: usize },

    #[error("vector is not of type (1,0)")]
    TypeMismatch,

    #[error("unsupported frame field: {0}")]
    UnsupportedField(String),

    #[error("zero vector")]
    ZeroVector,

    #[error("map not defined here: {0}")]
    MapDomainError(String),

    #[error("syntax error at offset {offset}: {message}")]
    SyntaxError { offset: usize, message: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("evaluation failure: {0}")]
    EvaluationFailure(String),

    #[error("CR factor fit failed: residual {residual:e} exceeds {tolerance:e}")]
    FitFailure { residual: f64, tolerance: f64 },

    #[error("map is not Levi-isometric: CR factor deviates from 1 by {deviation:e}")]
    NotLeviIsometric { deviation: f64 },

    #[error("block routing ambiguous: {0}")]
    BlockRoutingAmbiguous(String),

    #[error("pushforward sends the radial bundle into block {block}, which no CR automorphism does")]
    RadialBundleEscaped { block: usize },

    #[error("reconstruction residual {residual:e} exceeds {tolerance:e}")]
    ValidationFailure { residual: f64, tolerance: f64 },
}

pub type Result<T, E = CrError> = std::result::Result<T, E>;
