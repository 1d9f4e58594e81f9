use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::container::{sha256, Container, Digest32};
use crate::error::{Error, Result};
use crate::generator::Generator;
use crate::mel::{DspConfig, NormStats};
use crate::tensor::Tensor;

use super::adam::Adam;
use super::equilibrium::EquilibriumState;
use super::models::{ModelConfig, Models};
use super::trainer::{check_compatible, TrainConfig, Trainer};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"UNAG";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Position of the training random stream.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RngState {
    pub seed: Vec<u8>,
    pub stream: u64,
    /// Word position as a decimal string (it is a `u128`).
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed().to_vec(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng> {
        let seed: [u8; 32] = self
            .seed
            .as_slice()
            .try_into()
            .map_err(|_| ckpt("rng seed must be 32 bytes"))?;
        let pos: u128 = self
            .word_pos
            .parse()
            .map_err(|_| ckpt("rng word position is not an integer"))?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(pos);
        Ok(rng)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub models: ModelConfig,
    pub train: TrainConfig,
    pub dsp: DspConfig,
    pub state: EquilibriumState,
    pub opt_d_steps: u64,
    pub opt_g_steps: u64,
    pub rng: RngState,
    /// Feature normalization of the training corpus, when known.
    #[serde(default)]
    pub stats: Option<NormStats>,
}

/// Everything needed to resume training or to generate.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub digest: Digest32,
    pub tensors: Vec<(String, Tensor<f32>)>,
}

pub fn dsp_digest(dsp: &DspConfig) -> Digest32 {
    sha256(&dsp.canonical_bytes())
}

fn ckpt(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn capture(trainer: &Trainer, dsp: &DspConfig) -> Self {
        let mut tensors: Vec<(String, Tensor<f32>)> = trainer
            .models
            .named_tensors()
            .into_iter()
            .map(|(n, t)| (n, t.clone()))
            .collect();
        for (tag, opt) in [("opt_d", &trainer.opt_d), ("opt_g", &trainer.opt_g)] {
            for (name, m, v) in opt.moments() {
                tensors.push((format!("{tag}.m.{name}"), m.clone()));
                tensors.push((format!("{tag}.v.{name}"), v.clone()));
            }
        }
        let meta = CheckpointMeta {
            models: trainer.models.config().clone(),
            train: trainer.config.clone(),
            dsp: dsp.clone(),
            state: trainer.state,
            opt_d_steps: trainer.opt_d.steps(),
            opt_g_steps: trainer.opt_g.steps(),
            rng: RngState::capture(&trainer.rng),
            stats: None,
        };
        Self {
            digest: dsp_digest(dsp),
            meta,
            tensors,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        Container {
            magic: *CHECKPOINT_MAGIC,
            version: CHECKPOINT_VERSION,
            digest: self.digest,
            meta: serde_json::to_string(&self.meta).expect("metadata serializes"),
            tensors: self.tensors.clone(),
        }
        .encode()
    }

    /// Parses a checkpoint. With `active`, the stored DSP digest must match it.
    pub fn decode(bytes: &[u8], active: Option<&DspConfig>) -> Result<Self> {
        let c = Container::decode(bytes, CHECKPOINT_MAGIC).map_err(|e| ckpt(e.to_string()))?;
        if c.version != CHECKPOINT_VERSION {
            return Err(ckpt(format!(
                "unsupported checkpoint version {}",
                c.version
            )));
        }
        let meta: CheckpointMeta = serde_json::from_str(&c.meta)
            .map_err(|e| ckpt(format!("bad checkpoint metadata: {e}")))?;
        if dsp_digest(&meta.dsp) != c.digest {
            return Err(ckpt("stored DSP settings do not match the stored digest"));
        }
        if let Some(dsp) = active {
            if dsp_digest(dsp) != c.digest {
                return Err(ckpt("checkpoint was trained with different DSP settings"));
            }
        }
        Ok(Self {
            meta,
            digest: c.digest,
            tensors: c.tensors,
        })
    }

    fn take(&self, name: &str) -> Option<Tensor<f32>> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t.clone())
    }

    fn models(&self) -> Result<Models<f32>> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut models =
            Models::new(&self.meta.models, &mut rng).map_err(|e| ckpt(e.to_string()))?;
        models
            .load_tensors(&mut |n| self.take(n))
            .map_err(|e| ckpt(e.to_string()))?;
        Ok(models)
    }

    pub fn generator(&self) -> Result<Generator<f32>> {
        Ok(self.models()?.gen)
    }

    /// Rebuilds the full training state; the next step continues exactly
    /// where the saved run stopped.
    pub fn into_trainer(self) -> Result<Trainer> {
        check_compatible(&self.meta.models, &self.meta.train).map_err(|e| ckpt(e.to_string()))?;
        let models = self.models()?;
        let model_names: Vec<String> = models.named_tensors().into_iter().map(|(n, _)| n).collect();
        let expected = model_names.len();
        let restore = |tag: &str, steps: u64| -> Result<Adam<f32>> {
            let mut opt = Adam::new(self.meta.train.adam());
            let prefix = format!("{tag}.m.");
            let mut moments = Vec::new();
            for (name, m) in self
                .tensors
                .iter()
                .filter_map(|(n, t)| n.strip_prefix(&prefix).map(|s| (s, t)))
            {
                let v = self
                    .take(&format!("{tag}.v.{name}"))
                    .ok_or_else(|| ckpt(format!("missing {tag}.v.{name}")))?;
                if !model_names.iter().any(|n| n == name) || v.shape() != m.shape() {
                    return Err(ckpt(format!(
                        "optimizer moment {name} does not match the model"
                    )));
                }
                moments.push((name.to_string(), m.clone(), v));
            }
            opt.restore(steps, moments)
                .map_err(|e| ckpt(e.to_string()))?;
            Ok(opt)
        };
        let opt_d = restore("opt_d", self.meta.opt_d_steps)?;
        let opt_g = restore("opt_g", self.meta.opt_g_steps)?;
        let moments = 2 * (opt_d.moments().len() + opt_g.moments().len());
        if self.tensors.len() != expected + moments {
            return Err(ckpt("checkpoint holds tensors the model does not use"));
        }
        let state = self.meta.state;
        if !(0.0..=1.0).contains(&state.tau) {
            return Err(ckpt(format!("stored tau {} is outside [0, 1]", state.tau)));
        }
        Ok(Trainer {
            models,
            opt_d,
            opt_g,
            state,
            rng: self.meta.rng.restore()?,
            config: self.meta.train,
        })
    }
}
