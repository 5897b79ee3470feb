use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("invalid shape {shape:?} for {len} values")]
    InvalidShape { shape: Vec<usize>, len: usize },

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("time {t} outside the valid range {range}")]
    TimeOutOfRange { t: f64, range: &'static str },

    #[error("decay schedule misconfigured: t1 == t_d == {0}")]
    DegenerateSchedule(f64),

    #[error("unregistered prompt {0:?}")]
    UnregisteredPrompt(String),

    #[error("invalid prompt: {0}")]
    Prompt(String),

    #[error("remote: {0}")]
    Remote(#[from] RemoteError),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Stable machine-readable label of the root error.
    pub fn kind(&self) -> &'static str {
        match self.root() {
            Error::ShapeMismatch { .. } | Error::InvalidShape { .. } => "shape",
            Error::NonFinite { .. } => "non_finite",
            Error::Empty(_) => "empty",
            Error::Config(_) | Error::DegenerateSchedule(_) => "config",
            Error::TimeOutOfRange { .. } => "time_range",
            Error::UnregisteredPrompt(_) => "unregistered_prompt",
            Error::Prompt(_) => "prompt",
            Error::Remote(r) => r.kind(),
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Context { .. } => unreachable!("root strips context"),
        }
    }

    /// Innermost error with all context layers stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }
}

/// Failure kinds of the velocity wire-protocol client.
#[derive(Debug, Error)]
pub enum RemoteError {
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },

    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },

    #[error("malformed response: {0}")]
    Malformed(String),

    #[error("response shape mismatch: expected {expected} values, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },

    #[error("request rejected ({status}, {kind}): {message}")]
    Rejected {
        status: u16,
        kind: String,
        message: String,
    },

    #[error("server error ({status}, {kind}): {message}")]
    Server {
        status: u16,
        kind: String,
        message: String,
    },
}

impl RemoteError {
    pub fn kind(&self) -> &'static str {
        match self {
            RemoteError::Timeout { .. } => "remote_timeout",
            RemoteError::Transport { .. } => "remote_transport",
            RemoteError::Malformed(_) => "remote_malformed",
            RemoteError::ShapeMismatch { .. } => "remote_shape",
            RemoteError::Rejected { .. } => "remote_rejected",
            RemoteError::Server { .. } => "remote_server",
        }
    }
}

pub(crate) trait ResultExt<T> {
    fn context_with<F: FnOnce() -> String>(self, f: F) -> Result<T>;
}

impl<T> ResultExt<T> for Result<T> {
    fn context_with<F: FnOnce() -> String>(self, f: F) -> Result<T> {
        self.map_err(|e| e.context(f()))
    }
}
