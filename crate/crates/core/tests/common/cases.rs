//! Gradient-check cases for every parameterized block, shared by the
//! gradient tests and the acceptance suite.

use unagan_core::generator::{Generator, GeneratorConfig};
use unagan_core::netblocks::{
    Discriminator, DiscriminatorConfig, Encoder, EncoderConfig, GBlock, Head,
};
use unagan_core::nn::{Activations, Mode};

use super::*;

/// Largest tolerated fraction of stencils excluded for crossing a kink.
pub const MAX_KINKED: f64 = 0.25;

pub type Labeled = Vec<(String, CheckReport)>;

pub fn gblock(c_in: usize, c_out: usize, gru_layers: usize, seed: u64) -> Labeled {
    let mut r = rng(seed);
    let mut block = GBlock::<f64>::new(c_in, c_out, gru_layers, &mut r).unwrap();
    let x = random_tensor(&[c_in, 2, 10], 1.0, &mut r);
    let w = random_tensor(&[c_out, 2, 10], 1.0, &mut r);
    [Mode::Train, Mode::Eval]
        .into_iter()
        .map(|mode| {
            let mut report = CheckReport::default();
            check_block(
                &mut block,
                &x,
                &w,
                None,
                &|b: &GBlock<f64>, x| {
                    let (y, c) = b.forward(x, mode).unwrap();
                    let s = c.activation_signs();
                    (y, c, s)
                },
                &|b, c, dy| b.backward(c, dy, true),
                &mut report,
            );
            (
                format!("gblock {c_in}->{c_out} gru{gru_layers} {mode:?}"),
                report,
            )
        })
        .collect()
}

pub fn head() -> Labeled {
    let mut r = rng(21);
    let mut head = Head::<f64>::new(12, 80, &mut r).unwrap();
    let x = random_tensor(&[12, 1, 16], 1.0, &mut r);
    let w = random_tensor(&[80, 1, 16], 1.0, &mut r);
    let mut report = CheckReport::default();
    check_block(
        &mut head,
        &x,
        &w,
        None,
        &|h: &Head<f64>, x| {
            let (y, c) = h.forward(x).unwrap();
            (y, c, Vec::new())
        },
        &|h, c, dy| h.backward(c, dy, true),
        &mut report,
    );
    vec![("head 12->80".into(), report)]
}

pub fn discriminator(
    label: &str,
    cfg: &DiscriminatorConfig,
    shape: [usize; 3],
    per_tensor: Option<usize>,
    seed: u64,
) -> Labeled {
    let mut r = rng(seed);
    let mut d = Discriminator::<f64>::new(cfg, &mut r).unwrap();
    let x = random_tensor(&shape, 1.0, &mut r);
    let w = random_tensor(&shape, 1.0, &mut r);
    let mut report = CheckReport::default();
    check_block(
        &mut d,
        &x,
        &w,
        per_tensor,
        &|d: &Discriminator<f64>, x| {
            let (y, c) = d.forward(x, Mode::Train).unwrap();
            let s = c.activation_signs();
            (y, c, s)
        },
        &|d, c, dy| d.backward(c, dy, true),
        &mut report,
    );
    vec![(label.into(), report)]
}

pub fn discriminator_reduced() -> Labeled {
    let cfg = DiscriminatorConfig {
        mel_dims: 16,
        channels_2d: vec![2, 3, 4],
        time_dilations_2d: vec![2, 4, 8],
        freq_stride: 2,
        channels_1d: 6,
        dilations_1d: vec![1, 4, 8, 16, 32],
    };
    discriminator(
        "discriminator 16 bands, reduced widths",
        &cfg,
        [16, 2, 16],
        None,
        31,
    )
}

pub fn discriminator_reference() -> Labeled {
    discriminator(
        "discriminator reference layout, 80x8",
        &DiscriminatorConfig::default(),
        [80, 1, 8],
        Some(3),
        32,
    )
}

pub fn encoder() -> Labeled {
    let mut r = rng(41);
    let cfg = EncoderConfig {
        channels_2d: vec![2, 3],
        time_dilations_2d: vec![2, 4],
        freq_stride: 2,
        channels_1d: 8,
    };
    let mut enc = Encoder::<f64>::new(&cfg, 16, 4, 4, &mut r).unwrap();
    let x = random_tensor(&[16, 2, 16], 1.0, &mut r);
    let w = random_tensor(&[4, 2, 4], 1.0, &mut r);
    [Mode::Train, Mode::Eval]
        .into_iter()
        .map(|mode| {
            let mut report = CheckReport::default();
            check_block(
                &mut enc,
                &x,
                &w,
                None,
                &|e: &Encoder<f64>, x| {
                    let (y, c) = e.forward(x, mode).unwrap();
                    let s = c.activation_signs();
                    (y, c, s)
                },
                &|e, c, dy| e.backward(c, dy, true),
                &mut report,
            );
            (format!("encoder {mode:?}"), report)
        })
        .collect()
}

pub fn generator() -> Labeled {
    let mut r = rng(51);
    let cfg = GeneratorConfig {
        n_levels: 3,
        noise_dims: 4,
        mel_dims: 16,
        channels: vec![8, 8, 4],
        gru_layers: 1,
    };
    let mut g = Generator::<f64>::new(&cfg, &mut r).unwrap();
    let z = random_tensor(&[4, 2, 4], 1.0, &mut r);
    let w = random_tensor(&[16, 2, 16], 1.0, &mut r);
    [Mode::Train, Mode::Eval]
        .into_iter()
        .map(|mode| {
            let mut report = CheckReport::default();
            check_block(
                &mut g,
                &z,
                &w,
                None,
                &|g: &Generator<f64>, z| {
                    let (y, c) = g.forward(z, mode).unwrap();
                    let s = c.activation_signs();
                    (y, c, s)
                },
                &|g, c, dy| g.backward(c, dy, true),
                &mut report,
            );
            (format!("generator {mode:?}"), report)
        })
        .collect()
}

/// Every case above.
pub fn suite() -> Labeled {
    let mut all = Vec::new();
    all.extend(gblock(8, 12, 1, 11));
    all.extend(gblock(8, 8, 0, 12));
    all.extend(gblock(4, 8, 2, 13));
    all.extend(head());
    all.extend(discriminator_reduced());
    all.extend(discriminator_reference());
    all.extend(encoder());
    all.extend(generator());
    all
}

/// A report passes when nothing mismatched, something was compared and
/// few stencils were excluded.
pub fn acceptable(report: &CheckReport) -> bool {
    report.passed() && report.checked > 0 && report.kinked_fraction() < MAX_KINKED
}
