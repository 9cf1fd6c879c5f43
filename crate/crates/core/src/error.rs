use std::fmt;

/// Errors produced by the splatforge pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("missing attribute: {0}")]
    MissingAttribute(&'static str),
    #[error("insufficient points: need at least {needed}, got {got}")]
    InsufficientPoints { needed: usize, got: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: u64, message: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("guidance failure: {0}")]
    Guidance(String),
    #[error("no target registered for view {0}")]
    MissingTarget(ViewKey),
    #[error("training aborted: {0}")]
    Aborted(String),
    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn parse(offset: u64, message: impl Into<String>) -> Self {
        Error::Parse { offset, message: message.into() }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidParameter(message.into())
    }
}

/// Bit-exact identity of a camera pose, used to key per-view data.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ViewKey(pub [u64; 6]);

impl fmt::Display for ViewKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v: Vec<f64> = self.0.iter().map(|b| f64::from_bits(*b)).collect();
        write!(
            f,
            "r={} az={} el={} look_at=({}, {}, {})",
            v[0], v[1], v[2], v[3], v[4], v[5]
        )
    }
}
