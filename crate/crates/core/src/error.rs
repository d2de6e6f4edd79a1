use thiserror::Error;

/// Errors raised across the model, inference and assessment layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    /// Zero ventilation: the equilibrium is unbounded, the caller must use
    /// the linear-growth branch instead.
    #[error("no ventilation (q_vent = 0): concentration grows without bound")]
    NoVentilation,

    #[error("time step {dt_h} h exceeds stability limit 2/lambda = {limit_h} h")]
    UnstableStep { dt_h: f64, limit_h: f64 },

    #[error("series too short: need at least {needed} samples, got {got}")]
    SeriesTooShort { needed: usize, got: usize },

    #[error("degenerate data: sigma = 0 and every residual is exactly zero")]
    DegenerateData,

    #[error("posterior unreachable: no finite log-posterior after {attempts} initialization attempts")]
    PosteriorUnreachable { attempts: usize },

    #[error("prior set '{name}': {source}")]
    PriorSetRun {
        name: String,
        #[source]
        source: Box<Error>,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{bad} of {total} rows unparseable (limit 5%); first error: {first}")]
    TooManyBadRows {
        bad: usize,
        total: usize,
        first: String,
    },

    #[error("empty result: {0}")]
    Empty(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(name: &'static str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(name))
    }
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
