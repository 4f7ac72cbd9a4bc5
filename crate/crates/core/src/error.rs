use thiserror::Error;

#[derive(Debug, Error)]
pub enum PeerError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("numeric failure: {message} (after {iterations} iterations)")]
    Numeric { message: String, iterations: usize },

    #[error("layer {layer}: {source}")]
    Layer {
        layer: usize,
        #[source]
        source: Box<PeerError>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl PeerError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        PeerError::InvalidInput(msg.into())
    }

    /// True for errors caused by the caller's data or configuration rather
    /// than by the environment or a numerical breakdown.
    pub fn is_validation(&self) -> bool {
        match self {
            PeerError::InvalidInput(_) | PeerError::Degenerate(_) | PeerError::Json(_) => true,
            PeerError::Layer { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, PeerError>;
