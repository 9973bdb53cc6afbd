//! Minimal neural-network toolkit: tensors, dense/convolution/ConvLSTM
//! layers with hand-written backward passes, optimizers, finite-difference
//! gradient checks and binary checkpoints.

pub mod checkpoint;
pub mod convlstm;
pub mod gradcheck;
pub mod layers;
pub mod optim;
pub mod param;
mod tensor;

pub use checkpoint::{Checkpoint, ConfigHash};
pub use convlstm::{ConvLstmCell, LstmCache, LstmState};
pub use gradcheck::{grad_check, GradCheckReport, LayerSpec};
pub use layers::{Activation, Cache, Conv2d, Dense, Layer, MaxPool2d, Sequential, Upsample2d};
pub use optim::{Adam, Optimizer, SgdMomentum};
pub use param::{Param, Parameterized};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("checkpoint was saved under a different configuration")]
    ConfigMismatch,
    #[error("checkpoint is missing tensor `{0}`")]
    MissingTensor(String),
    #[error("malformed checkpoint: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
