use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{format} parse error at byte {offset}: {msg}")]
    Parse {
        format: &'static str,
        offset: usize,
        msg: String,
    },

    #[error("encode error: {0}")]
    Encode(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("degenerate luminance: image has no positive pixels")]
    DegenerateLuminance,

    #[error("degenerate base layer: bilateral base has zero span")]
    DegenerateBase,

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("feature extraction failed on raster '{raster}': {source}")]
    Feature {
        raster: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("training diverged at step {step}: loss = {loss}")]
    Diverged { step: usize, loss: f64 },

    #[error("SVR did not converge in {iterations} iterations (KKT violation {violation:.3e})")]
    NotConverged { iterations: usize, violation: f64 },

    #[error("trial {trial} failed: {source}")]
    Trial {
        trial: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("missing model for map '{0}'")]
    MissingModel(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(format: &'static str, offset: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            format,
            offset,
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
