//! Per-enrollment cloak network: architecture, losses, optimizer and the
//! enrollment training loop.

mod adam;
mod loss;
mod network;
mod record;
mod train;

pub use adam::{AdamHyper, AdamState};
pub use loss::{
    binarize, binarize_rows, enrollment_objective, loss_bin, loss_div, loss_id, loss_total,
    LossParts, LossWeights,
};
pub use network::{
    BatchNorm, CloakNetwork, ForwardCache, Gradients, Mode, HIDDEN_WIDTH, PARAM_GROUPS,
};
pub use record::{EnrollmentRecord, RECORD_VERSION};
pub use train::{
    enroll, enroll_many, enroll_traced, enrollment_batch, infer_cloak, infer_cloaks, train_enrollment,
    train_enrollment_traced, TrainConfig, TrainingTrace,
};
