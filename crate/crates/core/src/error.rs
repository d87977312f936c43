use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("size limit exceeded: {what} = {requested} > {limit}")]
    SizeLimit {
        what: &'static str,
        requested: usize,
        limit: usize,
    },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("degenerate state: squared norm {0:e} below floor")]
    DegenerateState(f64),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("eigensolver failed for {label}: {reason}")]
    Eigensolver { label: String, reason: String },

    #[error("numerical instability: {0}")]
    Instability(String),

    #[error("dark state: every jump channel has zero weight")]
    DarkState,

    #[error("perturbation direction does not move the observable (last distance {last_distance:e})")]
    DirectionDegenerate { last_distance: f64 },

    #[error("Lyapunov estimate aborted: {0}")]
    EstimateAborted(String),

    #[error("degenerate spectrum: all {0} spacing ratios have vanishing neighbor distances")]
    DegenerateSpectrum(usize),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("config error: {0}")]
    Config(String),

    #[error("invalid config:\n  {}", .0.join("\n  "))]
    ConfigIssues(Vec<String>),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("missing artifacts: {0:?}")]
    MissingArtifacts(Vec<String>),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
