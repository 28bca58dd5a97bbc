use deci_numerics::NumericsError;

#[derive(Debug, thiserror::Error)]
pub enum DeciError {
    #[error("graph contains a directed cycle")]
    CyclicGraph,
    #[error("posterior produced cyclic graphs in {cyclic} of {draws} draws")]
    PosteriorNotDag { cyclic: usize, draws: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("node index {index} out of range for {nodes} nodes")]
    IndexOutOfRange { index: usize, nodes: usize },
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("non-finite loss at outer step {outer}, inner step {inner}")]
    NonFiniteLoss { outer: usize, inner: usize },
    #[error("unknown dataset `{name}`; valid names: {valid}")]
    UnknownDataset { name: String, valid: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("corrupt checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, DeciError>;
