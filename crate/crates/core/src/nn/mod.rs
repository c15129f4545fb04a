//! Dense neural-network engine for the two detector architectures.
//!
//! * `Dff`: a chain of fully connected layers with ReLU and dropout after
//!   every layer but the last.
//! * `ResNet`: input FC + batch norm, then `depth` blocks of
//!   FC → batch norm → ReLU → dropout whose outputs accumulate onto a
//!   residual stream, then an output FC on the accumulated stream.
//!
//! Both end in independent per-device sigmoids and train with binary
//! cross-entropy and Adam.

mod adam;
mod gradcheck;
mod io;
mod layers;
mod loss;
mod model;
mod select;
mod tensor;
mod train;

use thiserror::Error;

pub use adam::{Adam, AdamConfig};
pub use gradcheck::{check_gradients, relative_error, GradCheck, TensorCheck};
pub use io::{load_model, save_model, MODEL_MAGIC};
pub use layers::{dense_forward, dropout, relu, relu_vec, sigmoid, sigmoid_vec, BatchNorm, BatchNormCache};
pub use loss::{bce_loss, BCE_CLAMP};
pub use model::{Architecture, Dense, ForwardCache, Gradients, Layer, LayerGrads, Model, ModelConfig};
pub use select::{select_support, SelectionPolicy};
pub use tensor::{Matrix, Real};
pub use train::{evaluate, train, EpochRecord, EvalSummary, History, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug, Error)]
pub enum NnError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("forward cache does not belong to the current parameters")]
    StaleCache,
    #[error("backward needs a train-mode forward cache")]
    InferCache,
    #[error("wrong architecture: expected {expected:?}, model is {actual:?}")]
    Architecture {
        expected: Architecture,
        actual: Architecture,
    },
    #[error("dataset: {0}")]
    Data(String),
    #[error("model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NnError>;
