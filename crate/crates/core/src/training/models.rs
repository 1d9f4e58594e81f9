use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape_err, Result};
use crate::generator::{Generator, GeneratorConfig};
use crate::netblocks::{Discriminator, DiscriminatorConfig, Encoder, EncoderConfig};
use crate::nn::{Mode, Module, Padding, Param};
use crate::real::Real;
use crate::tensor::Tensor;

use super::losses::{l1_mean, l1_mean_grad, recon_loss};

/// Architecture of all three networks.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
    pub encoder: EncoderConfig,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        self.discriminator.validate()?;
        self.encoder.validate()?;
        if self.discriminator.mel_dims != self.generator.mel_dims {
            return Err(invalid!(
                "discriminator expects {} mel bands, generator emits {}",
                self.discriminator.mel_dims,
                self.generator.mel_dims
            ));
        }
        Ok(())
    }
}

/// Terms of the discriminator objective for one batch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiscTerms {
    pub l_x: f64,
    pub l_gz: f64,
    pub l_d: f64,
}

/// Terms of the generator objective for one batch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GenTerms {
    pub l_g: f64,
    /// `|E(G(Z)) - Z|` element mean.
    pub cycle_noise: f64,
    /// `|G(E(X)) - X|` element mean.
    pub cycle_mel: f64,
    pub l_c: f64,
    pub total: f64,
}

/// Generator, discriminator and encoder.
#[derive(Clone, Debug)]
pub struct Models<F> {
    pub gen: Generator<F>,
    pub disc: Discriminator<F>,
    pub enc: Encoder<F>,
    config: ModelConfig,
}

impl<F: Real> Models<F> {
    /// Initializes G, then D, then E from `rng`.
    pub fn new(config: &ModelConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let g = &config.generator;
        let gen = Generator::new(g, rng)?;
        let disc = Discriminator::new(&config.discriminator, rng)?;
        let enc = Encoder::new(
            &config.encoder,
            g.mel_dims,
            g.noise_dims,
            g.downsample_factor(),
            rng,
        )?;
        Ok(Self {
            gen,
            disc,
            enc,
            config: config.clone(),
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn set_time_padding(&mut self, padding: Padding) {
        self.gen.set_time_padding(padding);
        self.disc.set_time_padding(padding);
    }

    pub fn zero_grad(&mut self) {
        self.gen.zero_grad();
        self.disc.zero_grad();
        self.enc.zero_grad();
    }

    fn check_batch(&self, x: &Tensor<F>, z: &Tensor<F>) -> Result<()> {
        let g = &self.config.generator;
        if x.rank() != 3 || z.rank() != 3 {
            return Err(shape_err!(
                "expected [C, B, T] batches, got {:?} and {:?}",
                x.shape(),
                z.shape()
            ));
        }
        let s = g.downsample_factor();
        let (k, b, t) = x.dims3();
        if k != g.mel_dims || t % s != 0 {
            return Err(shape_err!(
                "real batch {:?} must have {} bands and a length divisible by {s}",
                x.shape(),
                g.mel_dims
            ));
        }
        if z.shape() != [g.noise_dims, b, t / s] {
            return Err(shape_err!(
                "noise batch {:?} does not match real batch {:?}",
                z.shape(),
                x.shape()
            ));
        }
        Ok(())
    }

    /// `L(X)` under the current discriminator, without side effects.
    pub fn real_recon_error(&self, x: &Tensor<F>) -> Result<f64> {
        let (yr, _) = self.disc.forward(x, Mode::Train)?;
        recon_loss(x, &yr)
    }

    /// `l_D = L(X) − τ·L(G(Z))`. With `backward`, accumulates gradients into
    /// D's parameters only (G's output is a constant here) and absorbs D's
    /// batch statistics. A non-finite objective leaves the models untouched.
    pub fn discriminator_objective(
        &mut self,
        x: &Tensor<F>,
        z: &Tensor<F>,
        tau: f64,
        backward: bool,
    ) -> Result<DiscTerms> {
        self.check_batch(x, z)?;
        let (fake, _) = self.gen.forward(z, Mode::Train)?;
        let (yr, cr) = self.disc.forward(x, Mode::Train)?;
        let (yf, cf) = self.disc.forward(&fake, Mode::Train)?;
        let l_x = recon_loss(x, &yr)?;
        let l_gz = recon_loss(&fake, &yf)?;
        let l_d = super::losses::discriminator_loss(l_x, l_gz, tau);
        if backward && l_d.is_finite() {
            self.disc.backward(&cr, &l1_mean_grad(&yr, x, 1.0), true);
            if tau != 0.0 {
                self.disc
                    .backward(&cf, &l1_mean_grad(&yf, &fake, -tau), true);
            }
            self.disc.absorb(&cr);
            self.disc.absorb(&cf);
        }
        Ok(DiscTerms { l_x, l_gz, l_d })
    }

    /// `l'_G = L(G(Z)) + λ·l_C`. With `backward`, accumulates gradients into
    /// G and E only (D acts as a fixed function) and absorbs G's and E's
    /// batch statistics. With `lambda == 0` the encoder does not run. A
    /// non-finite objective leaves the models untouched.
    pub fn generator_objective(
        &mut self,
        x: &Tensor<F>,
        z: &Tensor<F>,
        lambda: f64,
        backward: bool,
    ) -> Result<GenTerms> {
        self.check_batch(x, z)?;
        let (fake, cg) = self.gen.forward(z, Mode::Train)?;
        let (yf, cf) = self.disc.forward(&fake, Mode::Train)?;
        let l_g = recon_loss(&fake, &yf)?;
        let cycle = if lambda != 0.0 {
            let (ez, ce) = self.enc.forward(&fake, Mode::Train)?;
            let (ex, cex) = self.enc.forward(x, Mode::Train)?;
            let (gx, cgx) = self.gen.forward(&ex, Mode::Train)?;
            Some((l1_mean(&ez, z)?, l1_mean(&gx, x)?, ez, ce, cex, gx, cgx))
        } else {
            None
        };
        let (cycle_noise, cycle_mel) = cycle.as_ref().map_or((0.0, 0.0), |c| (c.0, c.1));
        let l_c = super::losses::cycle_loss(cycle_noise, cycle_mel);
        let total = super::losses::total_generator_loss(l_g, l_c, lambda);
        if backward && total.is_finite() {
            let mut dfake = self
                .disc
                .backward(&cf, &l1_mean_grad(&yf, &fake, 1.0), false);
            dfake.add_assign(&l1_mean_grad(&fake, &yf, 1.0));
            if let Some((_, _, ez, ce, cex, gx, cgx)) = &cycle {
                dfake.add_assign(&self.enc.backward(ce, &l1_mean_grad(ez, z, lambda), true));
                let dex = self.gen.backward(cgx, &l1_mean_grad(gx, x, lambda), true);
                self.enc.backward(cex, &dex, true);
                self.enc.absorb(ce);
                self.enc.absorb(cex);
                self.gen.absorb(cgx);
            }
            self.gen.backward(&cg, &dfake, true);
            self.gen.absorb(&cg);
        }
        Ok(GenTerms {
            l_g,
            cycle_noise,
            cycle_mel,
            l_c,
            total,
        })
    }

    /// Every named tensor, prefixed `gen.`, `disc.` or `enc.`.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor<F>)> {
        let mut out = Vec::new();
        for (prefix, m) in [
            ("gen", &self.gen as &dyn Module<F>),
            ("disc", &self.disc),
            ("enc", &self.enc),
        ] {
            out.extend(
                m.named_tensors(prefix)
                    .into_iter()
                    .map(|(n, s)| (n, s.tensor())),
            );
        }
        out
    }

    /// Replaces every tensor from `source`; names and shapes must match exactly.
    pub fn load_tensors(
        &mut self,
        source: &mut dyn FnMut(&str) -> Option<Tensor<F>>,
    ) -> Result<()> {
        let mut slots = self.gen.named_tensors_mut("gen");
        slots.extend(self.disc.named_tensors_mut("disc"));
        slots.extend(self.enc.named_tensors_mut("enc"));
        for (name, mut slot) in slots {
            let t = source(&name).ok_or_else(|| invalid!("missing tensor {name}"))?;
            let dst = slot.tensor_mut();
            if t.shape() != dst.shape() {
                return Err(invalid!(
                    "tensor {name} has shape {:?}, expected {:?}",
                    t.shape(),
                    dst.shape()
                ));
            }
            *dst = t;
        }
        Ok(())
    }

    pub fn disc_params(&mut self) -> Vec<(String, &mut Param<F>)> {
        prefixed("disc", self.disc.params_mut())
    }

    /// G's parameters, followed by E's when `with_encoder`.
    pub fn gen_params(&mut self, with_encoder: bool) -> Vec<(String, &mut Param<F>)> {
        let mut out = prefixed("gen", self.gen.params_mut());
        if with_encoder {
            out.extend(prefixed("enc", self.enc.params_mut()));
        }
        out
    }
}

fn prefixed<'a, F>(
    prefix: &str,
    params: Vec<(String, &'a mut Param<F>)>,
) -> Vec<(String, &'a mut Param<F>)> {
    params
        .into_iter()
        .map(|(n, p)| (format!("{prefix}.{n}"), p))
        .collect()
}
