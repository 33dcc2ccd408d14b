use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid bounding box: {0}")]
    InvalidBox(String),

    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("embedding dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("embedding for frame {frame}, detection index {index} has no matching detection")]
    DanglingEmbedding { frame: u32, index: usize },

    #[error("duplicate record key (camera {camera_id}, id {id}, frame {frame})")]
    DuplicateRecord { camera_id: u32, id: u64, frame: u32 },

    #[error("detections span multiple frames ({first} and {other})")]
    MixedFrames { first: u32, other: u32 },

    #[error("frame {frame} is not after the previous frame {previous}")]
    OutOfOrderFrame { frame: u32, previous: u32 },

    #[error("detection {index} in frame {frame} has no embedding but appearance matching is enabled")]
    MissingEmbedding { frame: u32, index: usize },

    #[error("singular matrix: {0}")]
    Singular(&'static str),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid batch: {0}")]
    Batch(String),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("empty embedding set")]
    EmptyEmbeddings,

    #[error("camera metadata: {0}")]
    Camera(String),

    #[error("evaluation: {0}")]
    Eval(String),

    #[error("infeasible scenario: {0}")]
    Scenario(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(source_name: &str, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            source_name: source_name.to_string(),
            line,
            message: message.into(),
        }
    }
}
