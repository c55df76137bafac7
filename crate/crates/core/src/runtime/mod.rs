//! Differentiable building blocks shared by the tokenizer, tagger and
//! parser: parameter storage, a reverse-mode tape, LSTM and affine layers,
//! SGD, gradient checking and the model file format.

mod gradcheck;
pub mod io;
mod layers;
mod optim;
mod pretrained;
mod tape;
mod tensor;
mod vocab;

use thiserror::Error;

pub use gradcheck::finite_diff_check;
pub use layers::{
    log_softmax, masked_log_softmax, softmax_cross_entropy, BiLstm, Embedding, Linear, Lstm,
};
pub use optim::{optimize_step, SgdConfig, SgdState, StepReport};
pub use pretrained::WordVectors;
pub use tape::{Gradients, NodeId, Tape};
pub use tensor::{ParamId, ParamStore, Tensor};
pub use vocab::{Vocab, UNK};

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum RuntimeError {
    #[error("index {index} out of bounds for `{param}` with {rows} rows")]
    IndexOutOfBounds {
        param: String,
        index: usize,
        rows: usize,
    },
    #[error("dimension mismatch in `{what}`: expected {expected}, found {found}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        found: usize,
    },
    #[error("parameters changed since the tape was recorded")]
    StaleTape,
    #[error("non-finite gradient in `{0}`")]
    NonFiniteGradient(String),
    #[error("non-finite value in parameter `{0}`")]
    NonFiniteParam(String),
    #[error("duplicate parameter name `{0}`")]
    DuplicateParam(String),
    #[error("missing parameter `{0}`")]
    MissingParam(String),
    #[error("model file: {0}")]
    Format(String),
    #[error("i/o: {0}")]
    Io(String),
}
