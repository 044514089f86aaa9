use alloc::string::String;
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("softmax slice {index} is fully masked")]
    DegenerateSlice { index: usize },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("index {index} out of bounds for lookup table with {rows} rows")]
    Lookup { index: usize, rows: usize },
    #[error("cannot align answer for `{id}`: {reason}")]
    Alignment { id: String, reason: String },
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("restore failed on `{name}`: {reason}")]
    Restore { name: String, reason: String },
    #[error("non-finite loss in batch with ids {ids:?}")]
    NonFiniteLoss { ids: Vec<String> },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

impl Error {
    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Shape {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }
}
