use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("nearest-neighbor query on an empty index")]
    EmptyIndex,
    #[error("degenerate correspondences: {0}")]
    DegenerateCorrespondences(&'static str),
    #[error("no overlap between model and scene at any ICP level")]
    NoOverlap,
    #[error("no usable points in the neighborhood of the requested center")]
    EmptyNeighborhood,
    #[error("insufficient foreground: {found} points, {required} required")]
    InsufficientForeground { found: usize, required: usize },
    #[error("network configuration: {0}")]
    Config(String),
    #[error("no pose hypothesis: {0}")]
    NoHypothesis(&'static str),
    #[error("invalid hypothesis: density score {0} is not positive")]
    InvalidHypothesis(f64),
    #[error("scene yields no anchors")]
    EmptyScene,
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
