//! Network building blocks: the generator's GBlock and Head, nearest
//! neighbour upsampling, the convolutional autoencoder discriminator and the
//! noise encoder.

use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape_err, Result};
use crate::nn::{
    avg_pool2, avg_pool2_backward, impl_module, leaky_relu, leaky_relu_backward, Activations,
    BatchNorm, BatchNormCache, Conv1d, Conv1dCache, Conv2d, Conv2dCache, Gru, GruCache, Mode,
    Padding,
};
use crate::real::Real;
use crate::tensor::Tensor;

pub use crate::nn::{upsample2x, upsample2x_backward};

/// Group count of the GBlock convolutions.
pub const GBLOCK_GROUPS: usize = 4;
pub const KERNEL: usize = 3;

/// Grouped conv → BN → leaky ReLU → GRU stack → grouped conv → BN → leaky
/// ReLU, plus a residual connection (1×1 projection when the channel count
/// changes). Frame count is preserved.
#[derive(Clone, Debug)]
pub struct GBlock<F> {
    pub conv_in: Conv1d<F>,
    pub bn_in: BatchNorm<F>,
    pub grus: Vec<Gru<F>>,
    pub conv_out: Conv1d<F>,
    pub bn_out: BatchNorm<F>,
    pub skip: Option<Conv1d<F>>,
}

impl_module!(GBlock { child conv_in, child bn_in, children grus, child conv_out, child bn_out, opt skip });

#[derive(Clone, Debug)]
pub struct GBlockCache<F> {
    conv_in: Conv1dCache<F>,
    bn_in: BatchNormCache<F>,
    act_in: Tensor<F>,
    grus: Vec<GruCache<F>>,
    conv_out: Conv1dCache<F>,
    bn_out: BatchNormCache<F>,
    act_out: Tensor<F>,
    skip: Option<Conv1dCache<F>>,
}

impl<F: Real> GBlock<F> {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        gru_layers: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let conv_in = Conv1d::new(in_channels, out_channels, KERNEL, 1, GBLOCK_GROUPS, rng)?;
        let grus = (0..gru_layers)
            .map(|_| Gru::new(out_channels, out_channels, rng))
            .collect();
        let conv_out = Conv1d::new(out_channels, out_channels, KERNEL, 1, GBLOCK_GROUPS, rng)?;
        let skip = if in_channels != out_channels {
            Some(Conv1d::new(in_channels, out_channels, 1, 1, 1, rng)?)
        } else {
            None
        };
        Ok(Self {
            conv_in,
            bn_in: BatchNorm::new(out_channels),
            grus,
            conv_out,
            bn_out: BatchNorm::new(out_channels),
            skip,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.conv_in.in_channels()
    }

    pub fn out_channels(&self) -> usize {
        self.conv_out.out_channels()
    }

    pub fn set_time_padding(&mut self, padding: Padding) {
        self.conv_in.padding = padding;
        self.conv_out.padding = padding;
    }

    pub fn forward(&self, x: &Tensor<F>, mode: Mode) -> Result<(Tensor<F>, GBlockCache<F>)> {
        if x.rank() != 3 || x.shape()[0] != self.in_channels() {
            return Err(shape_err!(
                "gblock expects [{}, B, T], got {:?}",
                self.in_channels(),
                x.shape()
            ));
        }
        let (a, conv_in) = self.conv_in.forward(x)?;
        let (a, bn_in) = self.bn_in.forward(&a, mode);
        let act_in = leaky_relu(a);
        let mut a = act_in.clone();
        let mut grus = Vec::with_capacity(self.grus.len());
        for gru in &self.grus {
            let (next, cache) = gru.forward(&a)?;
            grus.push(cache);
            a = next;
        }
        let (a, conv_out) = self.conv_out.forward(&a)?;
        let (a, bn_out) = self.bn_out.forward(&a, mode);
        let act_out = leaky_relu(a);
        let mut y = act_out.clone();
        let skip = match &self.skip {
            Some(proj) => {
                let (s, cache) = proj.forward(x)?;
                y.add_assign(&s);
                Some(cache)
            }
            None => {
                y.add_assign(x);
                None
            }
        };
        Ok((
            y,
            GBlockCache {
                conv_in,
                bn_in,
                act_in,
                grus,
                conv_out,
                bn_out,
                act_out,
                skip,
            },
        ))
    }

    pub fn backward(
        &mut self,
        cache: &GBlockCache<F>,
        dy: &Tensor<F>,
        param_grads: bool,
    ) -> Tensor<F> {
        let d = leaky_relu_backward(&cache.act_out, dy.clone());
        let d = self.bn_out.backward(&cache.bn_out, &d, param_grads);
        let mut d = self.conv_out.backward(&cache.conv_out, &d, param_grads);
        for (gru, gc) in self.grus.iter_mut().zip(&cache.grus).rev() {
            d = gru.backward(gc, &d, param_grads);
        }
        let d = leaky_relu_backward(&cache.act_in, d);
        let d = self.bn_in.backward(&cache.bn_in, &d, param_grads);
        let mut dx = self.conv_in.backward(&cache.conv_in, &d, param_grads);
        match (&mut self.skip, &cache.skip) {
            (Some(proj), Some(sc)) => dx.add_assign(&proj.backward(sc, dy, param_grads)),
            _ => dx.add_assign(dy),
        }
        dx
    }

    pub fn absorb(&mut self, cache: &GBlockCache<F>) {
        self.bn_in.absorb(&cache.bn_in);
        self.bn_out.absorb(&cache.bn_out);
    }
}

impl<F> Activations<F> for GBlockCache<F> {
    fn visit_activations(&self, f: &mut dyn FnMut(&Tensor<F>)) {
        f(&self.act_in);
        f(&self.act_out);
    }
}

/// Per-level projection from hidden features to mel bands: one kernel-3
/// convolution.
#[derive(Clone, Debug)]
pub struct Head<F> {
    pub conv: Conv1d<F>,
}

impl_module!(Head { child conv });

impl<F: Real> Head<F> {
    pub fn new(in_channels: usize, mel_dims: usize, rng: &mut impl Rng) -> Result<Self> {
        Ok(Self {
            conv: Conv1d::new(in_channels, mel_dims, KERNEL, 1, 1, rng)?,
        })
    }

    pub fn forward(&self, x: &Tensor<F>) -> Result<(Tensor<F>, Conv1dCache<F>)> {
        self.conv.forward(x)
    }

    pub fn backward(
        &mut self,
        cache: &Conv1dCache<F>,
        dy: &Tensor<F>,
        param_grads: bool,
    ) -> Tensor<F> {
        self.conv.backward(cache, dy, param_grads)
    }
}

/// Conv → BN → leaky ReLU over a sequence.
#[derive(Clone, Debug)]
pub struct ConvBlock1d<F> {
    pub conv: Conv1d<F>,
    pub bn: BatchNorm<F>,
}

impl_module!(ConvBlock1d { child conv, child bn });

#[derive(Clone, Debug)]
pub struct ConvBlock1dCache<F> {
    conv: Conv1dCache<F>,
    bn: BatchNormCache<F>,
    act: Tensor<F>,
}

impl<F: Real> ConvBlock1d<F> {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        dilation: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(Self {
            conv: Conv1d::new(in_channels, out_channels, KERNEL, dilation, 1, rng)?,
            bn: BatchNorm::new(out_channels),
        })
    }

    pub fn forward(&self, x: &Tensor<F>, mode: Mode) -> Result<(Tensor<F>, ConvBlock1dCache<F>)> {
        let (a, conv) = self.conv.forward(x)?;
        let (a, bn) = self.bn.forward(&a, mode);
        let act = leaky_relu(a);
        Ok((act.clone(), ConvBlock1dCache { conv, bn, act }))
    }

    pub fn backward(
        &mut self,
        cache: &ConvBlock1dCache<F>,
        dy: &Tensor<F>,
        param_grads: bool,
    ) -> Tensor<F> {
        let d = leaky_relu_backward(&cache.act, dy.clone());
        let d = self.bn.backward(&cache.bn, &d, param_grads);
        self.conv.backward(&cache.conv, &d, param_grads)
    }
}

impl<F> Activations<F> for ConvBlock1dCache<F> {
    fn visit_activations(&self, f: &mut dyn FnMut(&Tensor<F>)) {
        f(&self.act);
    }
}

/// Conv2d → BN → leaky ReLU over a `[C, H, B, T]` map.
#[derive(Clone, Debug)]
pub struct ConvBlock2d<F> {
    pub conv: Conv2d<F>,
    pub bn: BatchNorm<F>,
}

impl_module!(ConvBlock2d { child conv, child bn });

#[derive(Clone, Debug)]
pub struct ConvBlock2dCache<F> {
    conv: Conv2dCache<F>,
    bn: BatchNormCache<F>,
    act: Tensor<F>,
}

impl<F: Real> ConvBlock2d<F> {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        freq_stride: usize,
        time_dilation: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(Self {
            conv: Conv2d::new(
                in_channels,
                out_channels,
                (KERNEL, KERNEL),
                freq_stride,
                (1, time_dilation),
                rng,
            )?,
            bn: BatchNorm::new(out_channels),
        })
    }

    pub fn forward(&self, x: &Tensor<F>, mode: Mode) -> Result<(Tensor<F>, ConvBlock2dCache<F>)> {
        let (a, conv) = self.conv.forward(x)?;
        let (a, bn) = self.bn.forward(&a, mode);
        let act = leaky_relu(a);
        Ok((act.clone(), ConvBlock2dCache { conv, bn, act }))
    }

    pub fn backward(
        &mut self,
        cache: &ConvBlock2dCache<F>,
        dy: &Tensor<F>,
        param_grads: bool,
    ) -> Tensor<F> {
        let d = leaky_relu_backward(&cache.act, dy.clone());
        let d = self.bn.backward(&cache.bn, &d, param_grads);
        self.conv.backward(&cache.conv, &d, param_grads)
    }
}

impl<F> Activations<F> for ConvBlock2dCache<F> {
    fn visit_activations(&self, f: &mut dyn FnMut(&Tensor<F>)) {
        f(&self.act);
    }
}

/// Layer widths of the discriminator. Defaults reproduce the reference
/// architecture: 2D blocks with 4/16/64 channels, frequency stride 2 and
/// time dilations 2/4/8, five 512-channel 1D blocks with dilations
/// 1/16/32/64/128, and an output convolution back to the mel bands.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscriminatorConfig {
    pub mel_dims: usize,
    pub channels_2d: Vec<usize>,
    pub time_dilations_2d: Vec<usize>,
    pub freq_stride: usize,
    pub channels_1d: usize,
    pub dilations_1d: Vec<usize>,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            mel_dims: 80,
            channels_2d: alloc::vec![4, 16, 64],
            time_dilations_2d: alloc::vec![2, 4, 8],
            freq_stride: 2,
            channels_1d: 512,
            dilations_1d: alloc::vec![1, 16, 32, 64, 128],
        }
    }
}

impl DiscriminatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channels_2d.is_empty() || self.channels_2d.len() != self.time_dilations_2d.len() {
            return Err(invalid!(
                "discriminator 2D channels and dilations must be non-empty and equal length"
            ));
        }
        if self.dilations_1d.is_empty()
            || self.channels_1d == 0
            || self.mel_dims == 0
            || self.freq_stride == 0
        {
            return Err(invalid!("discriminator 1D stack must be non-empty"));
        }
        if self
            .channels_2d
            .iter()
            .chain(&self.time_dilations_2d)
            .chain(&self.dilations_1d)
            .any(|&v| v == 0)
        {
            return Err(invalid!(
                "discriminator channels and dilations must be positive"
            ));
        }
        Ok(())
    }

    /// Height of the frequency axis after the 2D stack.
    pub fn flat_height(&self) -> usize {
        let mut h = self.mel_dims;
        for _ in &self.channels_2d {
            h = (h - 1) / self.freq_stride + 1;
        }
        h
    }
}

/// 2D front end shared (architecturally) by the discriminator and the
/// encoder: mel `[K, B, T]` → flattened `[C·H, B, T]`.
#[derive(Clone, Debug)]
pub struct FrontEnd<F> {
    pub blocks: Vec<ConvBlock2d<F>>,
    mel_dims: usize,
    flat_channels: usize,
}

impl_module!(FrontEnd { children blocks });

#[derive(Clone, Debug)]
pub struct FrontEndCache<F> {
    blocks: Vec<ConvBlock2dCache<F>>,
    shapes: Vec<Vec<usize>>,
}

impl<F> Activations<F> for FrontEndCache<F> {
    fn visit_activations(&self, f: &mut dyn FnMut(&Tensor<F>)) {
        self.blocks.iter().for_each(|b| b.visit_activations(f));
    }
}

impl<F: Real> FrontEnd<F> {
    fn new(
        mel_dims: usize,
        channels: &[usize],
        dilations: &[usize],
        stride: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mut blocks = Vec::new();
        let mut c_in = 1;
        let mut h = mel_dims;
        for (&c, &d) in channels.iter().zip(dilations) {
            blocks.push(ConvBlock2d::new(c_in, c, stride, d, rng)?);
            h = (h - 1) / stride + 1;
            c_in = c;
        }
        Ok(Self {
            blocks,
            mel_dims,
            flat_channels: c_in * h,
        })
    }

    fn set_time_padding(&mut self, padding: Padding) {
        for b in &mut self.blocks {
            b.conv.padding = padding;
        }
    }

    fn forward(&self, mel: &Tensor<F>, mode: Mode) -> Result<(Tensor<F>, FrontEndCache<F>)> {
        if mel.rank() != 3 || mel.shape()[0] != self.mel_dims {
            return Err(shape_err!(
                "expected mel batch [{}, B, T], got {:?}",
                self.mel_dims,
                mel.shape()
            ));
        }
        let (k, b, t) = mel.dims3();
        let mut x = mel.clone().reshape(&[1, k, b, t])?;
        let mut caches = Vec::with_capacity(self.blocks.len());
        let mut shapes = Vec::new();
        for block in &self.blocks {
            let (y, c) = block.forward(&x, mode)?;
            shapes.push(y.shape().to_vec());
            caches.push(c);
            x = y;
        }
        let x = x.reshape(&[self.flat_channels, b, t])?;
        shapes.push(x.shape().to_vec());
        Ok((
            x,
            FrontEndCache {
                blocks: caches,
                shapes,
            },
        ))
    }

    fn backward(
        &mut self,
        cache: &FrontEndCache<F>,
        dy: &Tensor<F>,
        param_grads: bool,
    ) -> Tensor<F> {
        let n = cache.shapes.len() - 1;
        let mut d = dy
            .clone()
            .reshape(&cache.shapes[n - 1])
            .expect("flattened shape");
        for (i, block) in self.blocks.iter_mut().enumerate().rev() {
            d = block.backward(&cache.blocks[i], &d, param_grads);
        }
        let (_, k, b, t) = d.dims4();
        d.reshape(&[k, b, t]).expect("mel shape")
    }

    fn absorb(&mut self, cache: &FrontEndCache<F>) {
        for (block, c) in self.blocks.iter_mut().zip(&cache.blocks) {
            block.bn.absorb(&c.bn);
        }
    }
}

/// Convolutional autoencoder discriminator: reconstructs its `[K, B, T]`
/// input with the same shape.
#[derive(Clone, Debug)]
pub struct Discriminator<F> {
    pub front: FrontEnd<F>,
    pub blocks: Vec<ConvBlock1d<F>>,
    pub out: Conv1d<F>,
    config: DiscriminatorConfig,
}

impl_module!(Discriminator { child front, children blocks, child out });

#[derive(Clone, Debug)]
pub struct DiscriminatorCache<F> {
    front: FrontEndCache<F>,
    blocks: Vec<ConvBlock1dCache<F>>,
    out: Conv1dCache<F>,
    shapes: Vec<Vec<usize>>,
}

impl<F> DiscriminatorCache<F> {
    /// Shapes of every intermediate activation, in forward order: each 2D
    /// block, the flattened sequence, each 1D block, the output.
    pub fn stage_shapes(&self) -> &[Vec<usize>] {
        &self.shapes
    }
}

impl<F> Activations<F> for DiscriminatorCache<F> {
    fn visit_activations(&self, f: &mut dyn FnMut(&Tensor<F>)) {
        self.front.visit_activations(f);
        self.blocks.iter().for_each(|b| b.visit_activations(f));
    }
}

impl<F: Real> Discriminator<F> {
    pub fn new(config: &DiscriminatorConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let front = FrontEnd::new(
            config.mel_dims,
            &config.channels_2d,
            &config.time_dilations_2d,
            config.freq_stride,
            rng,
        )?;
        let mut blocks = Vec::new();
        let mut c_in = front.flat_channels;
        for &d in &config.dilations_1d {
            blocks.push(ConvBlock1d::new(c_in, config.channels_1d, d, rng)?);
            c_in = config.channels_1d;
        }
        let out = Conv1d::new(c_in, config.mel_dims, KERNEL, 1, 1, rng)?;
        Ok(Self {
            front,
            blocks,
            out,
            config: config.clone(),
        })
    }

    pub fn config(&self) -> &DiscriminatorConfig {
        &self.config
    }

    pub fn set_time_padding(&mut self, padding: Padding) {
        self.front.set_time_padding(padding);
        for b in &mut self.blocks {
            b.conv.padding = padding;
        }
        self.out.padding = padding;
    }

    pub fn forward(
        &self,
        mel: &Tensor<F>,
        mode: Mode,
    ) -> Result<(Tensor<F>, DiscriminatorCache<F>)> {
        let (mut x, front) = self.front.forward(mel, mode)?;
        let mut shapes = front.shapes.clone();
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let (y, c) = block.forward(&x, mode)?;
            shapes.push(y.shape().to_vec());
            blocks.push(c);
            x = y;
        }
        let (y, out) = self.out.forward(&x)?;
        shapes.push(y.shape().to_vec());
        Ok((
            y,
            DiscriminatorCache {
                front,
                blocks,
                out,
                shapes,
            },
        ))
    }

    pub fn backward(
        &mut self,
        cache: &DiscriminatorCache<F>,
        dy: &Tensor<F>,
        param_grads: bool,
    ) -> Tensor<F> {
        let mut d = self.out.backward(&cache.out, dy, param_grads);
        for (block, c) in self.blocks.iter_mut().zip(&cache.blocks).rev() {
            d = block.backward(c, &d, param_grads);
        }
        self.front.backward(&cache.front, &d, param_grads)
    }

    pub fn absorb(&mut self, cache: &DiscriminatorCache<F>) {
        self.front.absorb(&cache.front);
        for (block, c) in self.blocks.iter_mut().zip(&cache.blocks) {
            block.bn.absorb(&c.bn);
        }
    }
}

/// Encoder layout. The 2D front end mirrors the discriminator's; the 1D
/// stack average-pools by 2 after each of its first `log2(S)` blocks.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub channels_2d: Vec<usize>,
    pub time_dilations_2d: Vec<usize>,
    pub freq_stride: usize,
    pub channels_1d: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        let d = DiscriminatorConfig::default();
        Self {
            channels_2d: d.channels_2d,
            time_dilations_2d: d.time_dilations_2d,
            freq_stride: d.freq_stride,
            channels_1d: 256,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channels_2d.is_empty() || self.channels_2d.len() != self.time_dilations_2d.len() {
            return Err(invalid!(
                "encoder 2D channels and dilations must be non-empty and equal length"
            ));
        }
        if self.channels_1d == 0 || self.freq_stride == 0 {
            return Err(invalid!("encoder widths must be positive"));
        }
        Ok(())
    }
}

/// Maps a mel batch `[K, B, T]` to a noise estimate `[N, B, T/S]`.
#[derive(Clone, Debug)]
pub struct Encoder<F> {
    pub front: FrontEnd<F>,
    pub blocks: Vec<ConvBlock1d<F>>,
    pub out: Conv1d<F>,
    pool_stages: usize,
}

impl_module!(Encoder { child front, children blocks, child out });

#[derive(Clone, Debug)]
pub struct EncoderCache<F> {
    front: FrontEndCache<F>,
    blocks: Vec<ConvBlock1dCache<F>>,
    out: Conv1dCache<F>,
}

impl<F> Activations<F> for EncoderCache<F> {
    fn visit_activations(&self, f: &mut dyn FnMut(&Tensor<F>)) {
        self.front.visit_activations(f);
        self.blocks.iter().for_each(|b| b.visit_activations(f));
    }
}

impl<F: Real> Encoder<F> {
    /// `downsample` must be a power of two (the generator's S).
    pub fn new(
        config: &EncoderConfig,
        mel_dims: usize,
        noise_dims: usize,
        downsample: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        config.validate()?;
        if !downsample.is_power_of_two() {
            return Err(invalid!(
                "encoder downsampling factor {downsample} is not a power of two"
            ));
        }
        let pool_stages = downsample.trailing_zeros() as usize;
        let front = FrontEnd::new(
            mel_dims,
            &config.channels_2d,
            &config.time_dilations_2d,
            config.freq_stride,
            rng,
        )?;
        let mut blocks = Vec::new();
        let mut c_in = front.flat_channels;
        for _ in 0..=pool_stages {
            blocks.push(ConvBlock1d::new(c_in, config.channels_1d, 1, rng)?);
            c_in = config.channels_1d;
        }
        let out = Conv1d::new(c_in, noise_dims, KERNEL, 1, 1, rng)?;
        Ok(Self {
            front,
            blocks,
            out,
            pool_stages,
        })
    }

    pub fn downsample_factor(&self) -> usize {
        1 << self.pool_stages
    }

    pub fn forward(&self, mel: &Tensor<F>, mode: Mode) -> Result<(Tensor<F>, EncoderCache<F>)> {
        let s = self.downsample_factor();
        if mel.rank() == 3 && !mel.shape()[2].is_multiple_of(s) {
            return Err(shape_err!(
                "encoder input length {} is not divisible by {s}",
                mel.shape()[2]
            ));
        }
        let (mut x, front) = self.front.forward(mel, mode)?;
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for (i, block) in self.blocks.iter().enumerate() {
            let (y, c) = block.forward(&x, mode)?;
            blocks.push(c);
            x = if i < self.pool_stages {
                avg_pool2(&y)
            } else {
                y
            };
        }
        let (y, out) = self.out.forward(&x)?;
        Ok((y, EncoderCache { front, blocks, out }))
    }

    pub fn backward(
        &mut self,
        cache: &EncoderCache<F>,
        dy: &Tensor<F>,
        param_grads: bool,
    ) -> Tensor<F> {
        let mut d = self.out.backward(&cache.out, dy, param_grads);
        for (i, (block, c)) in self.blocks.iter_mut().zip(&cache.blocks).enumerate().rev() {
            if i < self.pool_stages {
                d = avg_pool2_backward(&d);
            }
            d = block.backward(c, &d, param_grads);
        }
        self.front.backward(&cache.front, &d, param_grads)
    }

    pub fn absorb(&mut self, cache: &EncoderCache<F>) {
        self.front.absorb(&cache.front);
        for (block, c) in self.blocks.iter_mut().zip(&cache.blocks) {
            block.bn.absorb(&c.bn);
        }
    }
}
