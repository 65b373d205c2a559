use crate::network::NeuronRef;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, found {found}")]
    Shape {
        context: String,
        expected: usize,
        found: usize,
    },

    /// One or more pre-activations sit on a breakpoint (within tolerance).
    #[error("point lies on a region boundary: neurons {neurons:?}")]
    OnBoundary { neurons: Vec<NeuronRef> },

    #[error("invalid activation: {0}")]
    InvalidActivation(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("bad IDX magic in {file}: expected {expected:#010x}, found {found:#010x}")]
    BadMagic {
        file: String,
        expected: u32,
        found: u32,
    },

    #[error("truncated IDX file {file}: expected {expected} bytes, found {actual}")]
    Truncated {
        file: String,
        expected: usize,
        actual: usize,
    },

    #[error("image/label count mismatch: {images} images, {labels} labels")]
    CountMismatch { images: usize, labels: usize },

    #[error("unsupported network file version {0}")]
    Version(u32),

    #[error("network file layer {layer}: {message}")]
    LayerShape { layer: usize, message: String },

    #[error("training diverged at epoch fraction {epoch_fraction}")]
    Diverged { epoch_fraction: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn shape(context: &str, expected: usize, found: usize) -> Error {
    Error::Shape {
        context: context.to_string(),
        expected,
        found,
    }
}
