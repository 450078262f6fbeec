//! Patch embedding network: architecture, losses, augmentation, training
//! and checkpoints.

pub mod augment;
pub mod checkpoint;
pub mod loss;
pub mod network;
pub mod train;

pub use augment::{augment, AugmentationSpec, Transform};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use loss::{bce_loss, combined_loss, regularization, scl_loss};
pub use network::{classify, encode, project, to_input, Architecture, PenParams};
pub use train::{
    grad_check, loss_and_gradient, stratified_batches, train_pen, train_step, Batch, EpochStats, LabeledPatch,
    LossBreakdown, Objective, TrainConfig, TrainState, TrainedPen,
};
