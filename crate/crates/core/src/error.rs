use thiserror::Error;

/// Errors raised by the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("level not bracketed: level {level} outside field range [{min}, {max}] on the grid")]
    LevelNotBracketed { level: f64, min: f64, max: f64 },

    #[error("empty level set at level {0}")]
    EmptyLevelSet(f64),

    #[error("degenerate gradient: |grad f| = {norm:e} below floor {floor:e}")]
    DegenerateGradient { norm: f64, floor: f64 },

    #[error("degenerate gradient on {bad} of {total} quadrature points (more than 1%)")]
    DegenerateRegion { bad: usize, total: usize },

    #[error("no root of the projection within |t| <= {t_max}")]
    NoBracket { t_max: f64 },

    #[error("focal point: 1 + eps*kappa = {0:e} (eps too large for the local reach)")]
    FocalPoint(f64),

    #[error("empty integration region: {0}")]
    EmptyRegion(String),

    #[error("non-manifold complex: {0}")]
    NonManifold(String),

    #[error("malformed expression: {0}")]
    MalformedExpr(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("integrand evaluation failed at cell {cell}: {source}")]
    Integrand {
        cell: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by bad user input rather than numerical breakdown.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidArgument(_) | Error::MalformedExpr(_) | Error::Parse(_) | Error::Io(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
