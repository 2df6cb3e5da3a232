use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid simulator parameters: {0}")]
    InvalidParams(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid bounds: {0}")]
    InvalidBounds(String),
    #[error("invalid mixture: {0}")]
    InvalidMixture(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("MDN training diverged at epoch {epoch}")]
    TrainingDiverged { epoch: usize },
    #[error("non-finite network output")]
    NonFiniteOutput,
    #[error("iteration {iteration}: no successful simulations in {attempts} attempts")]
    NoSuccesses { iteration: usize, attempts: usize },
    #[error("malformed snapshot: {0}")]
    Snapshot(String),
}

impl Error {
    pub(crate) fn dim(context: &'static str, expected: usize, got: usize) -> Self {
        Error::DimensionMismatch {
            context,
            expected,
            got,
        }
    }
}
