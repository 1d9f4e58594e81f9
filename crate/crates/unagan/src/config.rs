//! Run configuration: a TOML file with one table per component, overridden
//! by command-line flags.

use std::path::Path;

use clap::Args;
use serde::{Deserialize, Serialize};
use unagan_core::evalmetrics::{
    DEFAULT_ALPHA, DEFAULT_N_BINS, DEFAULT_PATCH_FRAMES, DEFAULT_PATCH_STRIDE,
};
use unagan_core::mel::DspConfig;
use unagan_core::training::{ModelConfig, TrainConfig};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub n_bins: usize,
    pub alpha: f64,
    pub patch_frames: usize,
    pub patch_stride: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            n_bins: DEFAULT_N_BINS,
            alpha: DEFAULT_ALPHA,
            patch_frames: DEFAULT_PATCH_FRAMES,
            patch_stride: DEFAULT_PATCH_STRIDE,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerateConfig {
    pub n_samples: usize,
    /// Output length; 860 frames is about 10 s at hop 256 and 22050 Hz.
    pub frames: usize,
    pub seed: u64,
    /// Also write Griffin-Lim audio previews.
    pub wav: bool,
    pub griffin_lim_iters: usize,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            n_samples: 100,
            frames: 860,
            seed: 0,
            wav: false,
            griffin_lim_iters: 32,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub dsp: DspConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub generate: GenerateConfig,
}

fn config_err(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

impl RunConfig {
    /// Parses a config file; absent tables and keys take their defaults,
    /// unknown keys are errors.
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(config_err)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Cross-field checks of the combined configuration. Mel band counts of
    /// the networks follow `dsp.n_mels`; a config that sets them to anything
    /// else is rejected.
    pub fn validate(&self) -> Result<()> {
        self.dsp.validate()?;
        let k = self.dsp.n_mels;
        if self.model.generator.mel_dims != k || self.model.discriminator.mel_dims != k {
            return Err(config_err(format!(
                "model mel_dims ({} / {}) must equal dsp.n_mels ({k})",
                self.model.generator.mel_dims, self.model.discriminator.mel_dims
            )));
        }
        self.model.validate()?;
        self.train.validate()?;
        let s = self.model.generator.downsample_factor();
        if !self.train.segment_frames.is_multiple_of(s) {
            return Err(config_err(format!(
                "train.segment_frames {} is not divisible by S = {s}",
                self.train.segment_frames
            )));
        }
        let e = &self.eval;
        if e.n_bins == 0 || e.patch_frames == 0 || e.patch_stride == 0 {
            return Err(config_err(
                "eval.n_bins, eval.patch_frames and eval.patch_stride must be positive",
            ));
        }
        if !(e.alpha > 0.0 && e.alpha < 1.0) {
            return Err(config_err(format!(
                "eval.alpha must be in (0, 1), got {}",
                e.alpha
            )));
        }
        if self.generate.frames == 0 || self.generate.griffin_lim_iters == 0 {
            return Err(config_err(
                "generate.frames and generate.griffin_lim_iters must be positive",
            ));
        }
        Ok(())
    }
}

/// One flag per configuration field. Flags win over the config file.
#[derive(Args, Clone, Debug, Default)]
pub struct Overrides {
    /// Input sample rate in Hz [default: 22050]
    #[arg(long, global = true)]
    pub sample_rate: Option<u32>,
    /// STFT size in samples [default: 1024]
    #[arg(long, global = true)]
    pub n_fft: Option<usize>,
    /// STFT hop in samples [default: 256]
    #[arg(long, global = true)]
    pub hop: Option<usize>,
    /// Mel bands K; also the networks' mel dimension [default: 80]
    #[arg(long, global = true)]
    pub n_mels: Option<usize>,
    /// Lowest filterbank frequency in Hz [default: 0]
    #[arg(long, global = true)]
    pub fmin: Option<f64>,
    /// Highest filterbank frequency in Hz [default: sample_rate / 2]
    #[arg(long, global = true)]
    pub fmax: Option<f64>,
    /// Floor applied before the logarithm [default: 1e-5]
    #[arg(long, global = true)]
    pub log_floor: Option<f64>,

    /// Generator levels L; time downsampling S = 2^(L-1) [default: 3]
    #[arg(long, global = true)]
    pub n_levels: Option<usize>,
    /// Noise dimensions N [default: 20]
    #[arg(long, global = true)]
    pub noise_dims: Option<usize>,
    /// GBlock widths, coarse to fine, comma separated [default: 256,256,256]
    #[arg(long, global = true, value_delimiter = ',')]
    pub gen_channels: Option<Vec<usize>>,
    /// GRU layers per GBlock [default: 1]
    #[arg(long, global = true)]
    pub gru_layers: Option<usize>,

    /// Discriminator 2D conv widths [default: 4,16,64]
    #[arg(long, global = true, value_delimiter = ',')]
    pub disc_channels_2d: Option<Vec<usize>>,
    /// Discriminator 2D time dilations [default: 2,4,8]
    #[arg(long, global = true, value_delimiter = ',')]
    pub disc_time_dilations_2d: Option<Vec<usize>>,
    /// Discriminator frequency stride per 2D stage [default: 2]
    #[arg(long, global = true)]
    pub disc_freq_stride: Option<usize>,
    /// Discriminator 1D width [default: 512]
    #[arg(long, global = true)]
    pub disc_channels_1d: Option<usize>,
    /// Discriminator 1D dilations [default: 1,16,32,64,128]
    #[arg(long, global = true, value_delimiter = ',')]
    pub disc_dilations_1d: Option<Vec<usize>>,

    /// Encoder 2D conv widths [default: 4,16,64]
    #[arg(long, global = true, value_delimiter = ',')]
    pub enc_channels_2d: Option<Vec<usize>>,
    /// Encoder 2D time dilations [default: 2,4,8]
    #[arg(long, global = true, value_delimiter = ',')]
    pub enc_time_dilations_2d: Option<Vec<usize>>,
    /// Encoder frequency stride per 2D stage [default: 2]
    #[arg(long, global = true)]
    pub enc_freq_stride: Option<usize>,
    /// Encoder 1D width [default: 256]
    #[arg(long, global = true)]
    pub enc_channels_1d: Option<usize>,

    /// Adam learning rate [default: 1e-4]
    #[arg(long, global = true)]
    pub learning_rate: Option<f64>,
    /// Mini-batch size [default: 5]
    #[arg(long, global = true)]
    pub batch_size: Option<usize>,
    /// Training steps to run in this invocation [default: 2000]
    #[arg(long = "steps", global = true)]
    pub total_steps: Option<u64>,
    /// Gain of the tau controller [default: 0.001]
    #[arg(long, global = true)]
    pub beta: Option<f64>,
    /// Diversity ratio gamma in (0, 1] [default: 1]
    #[arg(long, global = true)]
    pub gamma: Option<f64>,
    /// Cycle-consistency weight; 0 disables the encoder [default: 1]
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    /// Training crop length in frames, divisible by S [default: 64]
    #[arg(long, global = true)]
    pub segment_frames: Option<usize>,
    /// Adam beta1 [default: 0.5]
    #[arg(long, global = true)]
    pub adam_beta1: Option<f64>,
    /// Adam beta2 [default: 0.999]
    #[arg(long, global = true)]
    pub adam_beta2: Option<f64>,
    /// Adam epsilon [default: 1e-8]
    #[arg(long, global = true)]
    pub adam_eps: Option<f64>,
    /// Steps between checkpoints [default: 500]
    #[arg(long, global = true)]
    pub checkpoint_interval: Option<u64>,

    /// Number of k-means bins [default: 100]
    #[arg(long, global = true)]
    pub n_bins: Option<usize>,
    /// Significance level of the per-bin test [default: 0.05]
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// Frames per evaluation patch [default: 16]
    #[arg(long, global = true)]
    pub patch_frames: Option<usize>,
    /// Hop between evaluation patches in frames [default: 16]
    #[arg(long, global = true)]
    pub patch_stride: Option<usize>,

    /// Number of samples to generate [default: 100]
    #[arg(long, global = true)]
    pub n_samples: Option<usize>,
    /// Frames per generated sample [default: 860]
    #[arg(long, global = true)]
    pub frames: Option<usize>,
    /// Also write Griffin-Lim WAV previews [default: false]
    #[arg(long, global = true)]
    pub wav: bool,
    /// Griffin-Lim iterations for previews [default: 32]
    #[arg(long, global = true)]
    pub griffin_lim_iters: Option<usize>,

    /// Seed for training, generation and bin fitting [default: 0]
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        let o = self.clone();
        let d = &mut cfg.dsp;
        set(&mut d.sample_rate, o.sample_rate);
        set(&mut d.n_fft, o.n_fft);
        set(&mut d.hop, o.hop);
        set(&mut d.n_mels, o.n_mels);
        set(&mut d.fmin, o.fmin);
        if o.fmax.is_some() {
            d.fmax = o.fmax;
        }
        set(&mut d.log_floor, o.log_floor);
        let g = &mut cfg.model.generator;
        set(&mut g.n_levels, o.n_levels);
        set(&mut g.noise_dims, o.noise_dims);
        set(&mut g.channels, o.gen_channels);
        set(&mut g.gru_layers, o.gru_layers);
        let dc = &mut cfg.model.discriminator;
        set(&mut dc.channels_2d, o.disc_channels_2d);
        set(&mut dc.time_dilations_2d, o.disc_time_dilations_2d);
        set(&mut dc.freq_stride, o.disc_freq_stride);
        set(&mut dc.channels_1d, o.disc_channels_1d);
        set(&mut dc.dilations_1d, o.disc_dilations_1d);
        let e = &mut cfg.model.encoder;
        set(&mut e.channels_2d, o.enc_channels_2d);
        set(&mut e.time_dilations_2d, o.enc_time_dilations_2d);
        set(&mut e.freq_stride, o.enc_freq_stride);
        set(&mut e.channels_1d, o.enc_channels_1d);
        let t = &mut cfg.train;
        set(&mut t.learning_rate, o.learning_rate);
        set(&mut t.batch_size, o.batch_size);
        set(&mut t.total_steps, o.total_steps);
        set(&mut t.beta, o.beta);
        set(&mut t.gamma, o.gamma);
        set(&mut t.lambda, o.lambda);
        set(&mut t.segment_frames, o.segment_frames);
        set(&mut t.adam_beta1, o.adam_beta1);
        set(&mut t.adam_beta2, o.adam_beta2);
        set(&mut t.adam_eps, o.adam_eps);
        set(&mut t.checkpoint_interval, o.checkpoint_interval);
        let ev = &mut cfg.eval;
        set(&mut ev.n_bins, o.n_bins);
        set(&mut ev.alpha, o.alpha);
        set(&mut ev.patch_frames, o.patch_frames);
        set(&mut ev.patch_stride, o.patch_stride);
        let gc = &mut cfg.generate;
        set(&mut gc.n_samples, o.n_samples);
        set(&mut gc.frames, o.frames);
        set(&mut gc.griffin_lim_iters, o.griffin_lim_iters);
        gc.wav |= o.wav;
        if let Some(s) = o.seed {
            t.seed = s;
            ev.seed = s;
            gc.seed = s;
        }
    }

    /// Loads `path` (or the defaults), applies the flags, keeps the network
    /// mel dimensions in step with `dsp.n_mels` when the file did not set
    /// them, and validates the result.
    pub fn resolve(&self, path: Option<&Path>) -> Result<RunConfig> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
            None => String::new(),
        };
        let mut cfg = RunConfig::from_toml(&text)?;
        let raw: toml::Table = text.parse().map_err(config_err)?;
        let explicit = |net: &str| {
            raw.get("model")
                .and_then(|m| m.get(net))
                .and_then(|n| n.get("mel_dims"))
                .is_some()
        };
        self.apply(&mut cfg);
        if !explicit("generator") {
            cfg.model.generator.mel_dims = cfg.dsp.n_mels;
        }
        if !explicit("discriminator") {
            cfg.model.discriminator.mel_dims = cfg.dsp.n_mels;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
