use alloc::format;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape_err, Error, Result};
use crate::generator::sample_noise_batch;
use crate::nn::Module;
use crate::tensor::Tensor;

use super::adam::{Adam, AdamConfig};
use super::equilibrium::{convergence_measure, update_tau, EquilibriumState};
use super::models::{ModelConfig, Models};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub total_steps: u64,
    /// Gain of the τ controller.
    pub beta: f64,
    /// Target ratio `L(G(Z)) / L(X)` at equilibrium.
    pub gamma: f64,
    /// Cycle-consistency weight; 0 disables the encoder.
    pub lambda: f64,
    pub segment_frames: usize,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub checkpoint_interval: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 5,
            total_steps: 2000,
            beta: 0.001,
            gamma: 1.0,
            lambda: 1.0,
            segment_frames: 64,
            seed: 0,
            adam_beta1: 0.5,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            checkpoint_interval: 500,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            ));
        }
        if self.batch_size == 0 {
            return Err(invalid!("batch_size must be at least 1"));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(invalid!("beta must be positive, got {}", self.beta));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(invalid!("gamma must lie in (0, 1], got {}", self.gamma));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(invalid!("lambda must be non-negative, got {}", self.lambda));
        }
        if self.segment_frames == 0 {
            return Err(invalid!("segment_frames must be positive"));
        }
        let unit = 0.0..1.0;
        if !unit.contains(&self.adam_beta1)
            || !unit.contains(&self.adam_beta2)
            || !(self.adam_eps > 0.0)
        {
            return Err(invalid!(
                "Adam betas must lie in [0, 1) and eps must be positive"
            ));
        }
        if self.checkpoint_interval == 0 {
            return Err(invalid!("checkpoint_interval must be positive"));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }
}

/// Telemetry of one training step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: u64,
    /// Discriminator objective before its update.
    pub l_d: f64,
    pub l_g: f64,
    pub l_c: f64,
    /// `L(X)` with the updated discriminator.
    pub l_x: f64,
    /// `L(G(Z))` with the updated discriminator.
    pub l_gz: f64,
    /// τ after this step's update.
    pub tau: f64,
    pub m_conv: f64,
}

/// Training state: parameters, optimizer moments, the τ controller and the
/// random stream used for noise and batch sampling.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub models: Models<f32>,
    /// Discriminator optimizer.
    pub opt_d: Adam<f32>,
    /// Joint generator and encoder optimizer.
    pub opt_g: Adam<f32>,
    pub state: EquilibriumState,
    pub config: TrainConfig,
    pub rng: ChaCha8Rng,
}

impl Trainer {
    /// Fresh models initialized from `config.seed`.
    pub fn new(models: &ModelConfig, config: TrainConfig) -> Result<Self> {
        check_compatible(models, &config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let models = Models::new(models, &mut rng)?;
        Ok(Self {
            opt_d: Adam::new(config.adam()),
            opt_g: Adam::new(config.adam()),
            models,
            state: EquilibriumState::default(),
            config,
            rng,
        })
    }

    pub fn step(&self) -> u64 {
        self.state.step
    }

    /// One alternating update on a real batch `[K, B, T]`: sample Z, update D
    /// on `l_D`, update G (and E when λ > 0) on `l'_G` against the updated D,
    /// then move τ using `L(X)` and `L(G(Z))` from the updated D.
    ///
    /// Non-finite losses abort before any parameter changes of the failing
    /// phase are applied.
    pub fn train_step(&mut self, batch: &Tensor<f32>) -> Result<StepMetrics> {
        let g = &self.models.config().generator;
        let s = g.downsample_factor();
        if batch.rank() != 3
            || batch.shape()[0] != g.mel_dims
            || batch.shape()[1] == 0
            || batch.shape()[2] == 0
            || !batch.shape()[2].is_multiple_of(s)
        {
            return Err(shape_err!(
                "batch {:?} must be [{}, B, T] with T divisible by {s}",
                batch.shape(),
                g.mel_dims
            ));
        }
        let (_, b, t) = batch.dims3();
        let noise_dims = g.noise_dims;
        let step = self.state.step + 1;
        let z = sample_noise_batch::<f32>(noise_dims, b, t / s, &mut self.rng);
        let (lambda, beta, gamma) = (self.config.lambda, self.config.beta, self.config.gamma);

        self.models.disc.zero_grad();
        let d = self
            .models
            .discriminator_objective(batch, &z, self.state.tau, true)?;
        diverged(step, "l_D", d.l_d)?;
        self.opt_d.step(self.models.disc_params());

        let with_encoder = lambda != 0.0;
        self.models.gen.zero_grad();
        self.models.enc.zero_grad();
        let gt = self.models.generator_objective(batch, &z, lambda, true)?;
        diverged(step, "l'_G", gt.total)?;
        self.opt_g.step(self.models.gen_params(with_encoder));

        let l_x = self.models.real_recon_error(batch)?;
        let l_gz = gt.l_g;
        diverged(step, "L(X)", l_x)?;
        self.state = update_tau(self.state, l_x, l_gz, beta, gamma);
        Ok(StepMetrics {
            step: self.state.step,
            l_d: d.l_d,
            l_g: gt.l_g,
            l_c: gt.l_c,
            l_x,
            l_gz,
            tau: self.state.tau,
            m_conv: convergence_measure(l_x, l_gz, gamma),
        })
    }
}

pub(crate) fn check_compatible(models: &ModelConfig, config: &TrainConfig) -> Result<()> {
    config.validate()?;
    models.validate()?;
    let s = models.generator.downsample_factor();
    if !config.segment_frames.is_multiple_of(s) {
        return Err(invalid!(
            "segment_frames {} is not divisible by S = {s}",
            config.segment_frames
        ));
    }
    Ok(())
}

fn diverged(step: u64, what: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::TrainingDiverged {
            step,
            detail: format!("{what} = {v}"),
        })
    }
}
