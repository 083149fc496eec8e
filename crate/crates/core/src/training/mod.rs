//! Counterexample-guided training: pretraining of all output pathways,
//! dual-ascent training against generated counterexamples, and a final
//! projection phase that ends with a complete verification call.

mod config;
mod loss;
mod optim;
mod pipeline;

pub use config::{AdamConfig, LossKind, TrainConfig};
pub use loss::{
    ce_propagate, ce_violation, pretrain_loss, projector, projector_loss, resolved, train_loss,
    LossParts, ProjectorConfig, ProjectorStats, RecordedLoss,
};
pub use optim::{dual_step, gradient_step, Adam, DualState};
pub use pipeline::{init_model, train, Phase, PhaseSummary, TelemetryRow, TrainReport};
