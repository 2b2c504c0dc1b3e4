//! Losses, exact gradients, the optimizer and two-phase training.

mod gradcheck;
mod loss;
mod optim;
mod train;

use thiserror::Error;

pub use gradcheck::{batch_loss, check_gradients, relative_error, GradCheck, REL_ERR_FLOOR};
pub use loss::{
    compute_loss, contrastive_grad, contrastive_loss, focal_loss, focal_loss_grad, log_pointer_loss, pointer_loss,
    LossBreakdown, Phase, LOG_EPS,
};
pub use optim::{backward, Adam, Batch};
pub use train::{pairs_of, train_two_phase, train_two_phase_from, EpochLog, TrainConfig, TrainOutcome, Trainer};

use crate::eval::EvalError;
use crate::model::ModelError;

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("phase mismatch: {0}")]
    Phase(String),
    #[error("non-finite value: {0}")]
    Numerics(String),
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}
