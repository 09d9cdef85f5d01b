use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Network or service failure talking to an encoder or generator.
    #[error("transport error: {message}")]
    Transport { message: String, retriable: bool },

    /// Vector dimensions disagree with the configured schema.
    #[error("schema error: {0}")]
    Schema(String),

    /// A service returned values that violate the data invariants (NaN, Inf, empty).
    #[error("data error: {0}")]
    Data(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("checksum mismatch in {file}: stored {stored:#010x}, computed {computed:#010x}")]
    Corruption {
        file: String,
        stored: u32,
        computed: u32,
    },

    #[error("case {0} not found")]
    NotFound(usize),

    #[error("store is empty")]
    EmptyStore,

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("image asset for case {index} unavailable: {message}")]
    Asset { index: usize, message: String },

    #[error("generator returned an empty description")]
    EmptyOutput,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate variance: all paired differences are identical")]
    DegenerateVariance,

    #[error("training aborted at epoch {epoch}, batch {batch}: {message}")]
    TrainingAborted {
        epoch: usize,
        batch: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn is_retriable(&self) -> bool {
        matches!(
            self,
            Error::Transport {
                retriable: true,
                ..
            }
        )
    }

    pub(crate) fn format(offset: u64, message: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: message.into(),
        }
    }
}
