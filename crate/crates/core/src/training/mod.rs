//! Adversarial training: loss terms, the τ equilibrium controller, Adam,
//! the alternating update step and checkpoints.

mod adam;
mod checkpoint;
mod equilibrium;
mod losses;
mod models;
mod trainer;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{
    dsp_digest, Checkpoint, CheckpointMeta, RngState, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use equilibrium::{convergence_measure, update_tau, EquilibriumState};
pub use losses::{
    cycle_loss, discriminator_loss, generator_loss, l1_mean, l1_mean_grad, recon_loss,
    total_generator_loss,
};
pub use models::{DiscTerms, GenTerms, ModelConfig, Models};
pub use trainer::{StepMetrics, TrainConfig, Trainer};
