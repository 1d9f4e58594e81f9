//! The hierarchical generator: a noise sequence of `T'` vectors becomes a
//! mel-spectrogram of `S·T'` frames, refined coarse to fine.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape_err, Result};
use crate::mel::MelSpectrogram;
use crate::netblocks::{upsample2x, upsample2x_backward, GBlock, GBlockCache, Head};
use crate::nn::{impl_module, Activations, Conv1dCache, Mode, Module, Padding};
use crate::real::Real;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    /// Number of levels L; the time downsampling factor is `S = 2^(L-1)`.
    pub n_levels: usize,
    pub noise_dims: usize,
    pub mel_dims: usize,
    /// GBlock width per level, coarse to fine.
    pub channels: Vec<usize>,
    /// GRU layers inside each GBlock.
    pub gru_layers: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            n_levels: 3,
            noise_dims: 20,
            mel_dims: 80,
            channels: alloc::vec![256, 256, 256],
            gru_layers: 1,
        }
    }
}

impl GeneratorConfig {
    pub fn downsample_factor(&self) -> usize {
        1 << (self.n_levels.saturating_sub(1))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_levels == 0 || self.n_levels > 16 {
            return Err(invalid!(
                "n_levels must be in 1..=16, got {}",
                self.n_levels
            ));
        }
        if self.channels.len() != self.n_levels {
            return Err(invalid!(
                "{} channel widths given for {} levels",
                self.channels.len(),
                self.n_levels
            ));
        }
        let g = crate::netblocks::GBLOCK_GROUPS;
        for &c in self
            .channels
            .iter()
            .chain(core::iter::once(&self.noise_dims))
        {
            if c == 0 || c % g != 0 {
                return Err(invalid!(
                    "noise dims and GBlock widths must be positive multiples of {g}, got {c}"
                ));
            }
        }
        if self.mel_dims == 0 {
            return Err(invalid!("mel_dims must be positive"));
        }
        Ok(())
    }

    /// Number of noise vectors needed for `frames` output frames.
    pub fn noise_len(&self, frames: usize) -> usize {
        frames.div_ceil(self.downsample_factor())
    }
}

/// `N × T'` matrix of noise vectors, row-major (row = dimension).
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSequence {
    n_dims: usize,
    n_vectors: usize,
    data: Vec<f32>,
}

impl NoiseSequence {
    pub fn new(n_dims: usize, n_vectors: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != n_dims * n_vectors {
            return Err(invalid!(
                "{n_dims}x{n_vectors} noise needs {} values",
                n_dims * n_vectors
            ));
        }
        Ok(Self {
            n_dims,
            n_vectors,
            data,
        })
    }

    pub fn n_dims(&self) -> usize {
        self.n_dims
    }

    pub fn n_vectors(&self) -> usize {
        self.n_vectors
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn to_tensor<F: Real>(&self) -> Tensor<F> {
        let data = self.data.iter().map(|&v| F::of_f32(v)).collect();
        Tensor::from_vec(&[self.n_dims, 1, self.n_vectors], data).expect("shape matches")
    }
}

/// `n_dims × t_prime` i.i.d. standard normal draws.
pub fn sample_noise(t_prime: usize, n_dims: usize, rng: &mut impl Rng) -> Result<NoiseSequence> {
    if t_prime == 0 || n_dims == 0 {
        return Err(invalid!(
            "noise shape must be positive, got {n_dims}x{t_prime}"
        ));
    }
    let data = (0..t_prime * n_dims)
        .map(|_| StandardNormal.sample(rng))
        .collect();
    NoiseSequence::new(n_dims, t_prime, data)
}

/// Standard normal tensor `[n_dims, batch, t_prime]`.
pub fn sample_noise_batch<F: Real>(
    n_dims: usize,
    batch: usize,
    t_prime: usize,
    rng: &mut impl Rng,
) -> Tensor<F> {
    let data = (0..n_dims * batch * t_prime)
        .map(|_| F::of_f32(StandardNormal.sample(rng)))
        .collect();
    Tensor::from_vec(&[n_dims, batch, t_prime], data).expect("shape matches")
}

/// Converts a `[K, 1, T]` tensor into a mel-spectrogram.
pub fn tensor_to_mel<F: Real>(t: &Tensor<F>) -> Result<MelSpectrogram> {
    let (k, b, frames) = t.dims3();
    if b != 1 {
        return Err(shape_err!("expected a single item, got batch {b}"));
    }
    MelSpectrogram::new(k, frames, t.data().iter().map(|v| v.as_f32()).collect())
}

pub fn mel_to_tensor<F: Real>(mel: &MelSpectrogram) -> Tensor<F> {
    let data = mel.data().iter().map(|&v| F::of_f32(v)).collect();
    Tensor::from_vec(&[mel.n_mels(), 1, mel.n_frames()], data).expect("shape matches")
}

/// Level ℓ: `h_ℓ = GBlock_ℓ(Up(h_{ℓ-1}))`, `o_ℓ = Head_ℓ(h_ℓ) + Up(o_{ℓ-1})`;
/// level 1 reads the noise directly and has no residual output.
#[derive(Clone, Debug)]
pub struct Generator<F> {
    pub blocks: Vec<GBlock<F>>,
    pub heads: Vec<Head<F>>,
    config: GeneratorConfig,
}

impl_module!(Generator { children blocks, children heads });

#[derive(Clone, Debug)]
pub struct GeneratorCache<F> {
    blocks: Vec<GBlockCache<F>>,
    heads: Vec<Conv1dCache<F>>,
}

impl<F> Activations<F> for GeneratorCache<F> {
    fn visit_activations(&self, f: &mut dyn FnMut(&Tensor<F>)) {
        self.blocks.iter().for_each(|b| b.visit_activations(f));
    }
}

impl<F: Real> Generator<F> {
    pub fn new(config: &GeneratorConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let mut blocks = Vec::new();
        let mut heads = Vec::new();
        let mut c_in = config.noise_dims;
        for &c in &config.channels {
            blocks.push(GBlock::new(c_in, c, config.gru_layers, rng)?);
            heads.push(Head::new(c, config.mel_dims, rng)?);
            c_in = c;
        }
        Ok(Self {
            blocks,
            heads,
            config: config.clone(),
        })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    pub fn set_time_padding(&mut self, padding: Padding) {
        for b in &mut self.blocks {
            b.set_time_padding(padding);
        }
        for h in &mut self.heads {
            h.conv.padding = padding;
        }
    }

    /// `z: [N, B, T']` → `[K, B, S·T']`.
    pub fn forward(&self, z: &Tensor<F>, mode: Mode) -> Result<(Tensor<F>, GeneratorCache<F>)> {
        if z.rank() != 3 || z.shape()[0] != self.config.noise_dims {
            return Err(shape_err!(
                "generator expects noise [{}, B, T'], got {:?}",
                self.config.noise_dims,
                z.shape()
            ));
        }
        let mut block_caches = Vec::with_capacity(self.blocks.len());
        let mut head_caches = Vec::with_capacity(self.heads.len());
        let mut h = z.clone();
        let mut out: Option<Tensor<F>> = None;
        for (level, (block, head)) in self.blocks.iter().zip(&self.heads).enumerate() {
            let input = if level == 0 { h } else { upsample2x(&h) };
            let (hn, bc) = block.forward(&input, mode)?;
            let (mut o, hc) = head.forward(&hn)?;
            if let Some(prev) = &out {
                o.add_assign(&upsample2x(prev));
            }
            block_caches.push(bc);
            head_caches.push(hc);
            h = hn;
            out = Some(o);
        }
        let out = out.expect("at least one level");
        Ok((
            out,
            GeneratorCache {
                blocks: block_caches,
                heads: head_caches,
            },
        ))
    }

    /// Returns the gradient with respect to the noise input.
    pub fn backward(
        &mut self,
        cache: &GeneratorCache<F>,
        dy: &Tensor<F>,
        param_grads: bool,
    ) -> Tensor<F> {
        let mut d_out = dy.clone();
        let mut d_hidden: Option<Tensor<F>> = None;
        for level in (0..self.blocks.len()).rev() {
            let mut dh = self.heads[level].backward(&cache.heads[level], &d_out, param_grads);
            if let Some(carry) = d_hidden.take() {
                dh.add_assign(&carry);
            }
            let dx = self.blocks[level].backward(&cache.blocks[level], &dh, param_grads);
            if level == 0 {
                return dx;
            }
            d_hidden = Some(upsample2x_backward(&dx));
            d_out = upsample2x_backward(&d_out);
        }
        unreachable!("generator has at least one level")
    }

    pub fn absorb(&mut self, cache: &GeneratorCache<F>) {
        for (b, c) in self.blocks.iter_mut().zip(&cache.blocks) {
            b.absorb(c);
        }
    }

    /// Single-sequence generation: `K × S·T'`.
    pub fn generate(&self, z: &NoiseSequence, mode: Mode) -> Result<MelSpectrogram> {
        if z.n_dims() != self.config.noise_dims {
            return Err(shape_err!(
                "noise has {} dims, generator expects {}",
                z.n_dims(),
                self.config.noise_dims
            ));
        }
        let (y, _) = self.forward(&z.to_tensor(), mode)?;
        tensor_to_mel(&y)
    }

    /// Draws `ceil(t_target / S)` noise vectors and trims the output to
    /// exactly `t_target` frames.
    pub fn generate_frames(
        &self,
        t_target: usize,
        mode: Mode,
        rng: &mut impl Rng,
    ) -> Result<MelSpectrogram> {
        if t_target == 0 {
            return Err(invalid!("t_target must be at least 1"));
        }
        let z = sample_noise(self.config.noise_len(t_target), self.config.noise_dims, rng)?;
        Ok(self.generate(&z, mode)?.truncate(t_target))
    }

    pub fn param_total(&self) -> usize {
        self.param_count()
    }
}
