mod common;

use common::*;
use unagan_core::generator::{Generator, GeneratorConfig, NoiseSequence};
use unagan_core::netblocks::{Discriminator, DiscriminatorConfig, Encoder, EncoderConfig};
use unagan_core::nn::{Mode, Padding};
use unagan_core::Tensor;

#[test]
fn discriminator_stage_shapes_follow_the_reference_table() {
    let mut r = rng(1);
    let d = Discriminator::<f32>::new(&DiscriminatorConfig::default(), &mut r).unwrap();
    let x = random_tensor(&[80, 2, 8], 1.0, &mut r).map(|v| v as f32);
    let (y, cache) = d.forward(&x, Mode::Train).unwrap();
    assert_eq!(y.shape(), &[80, 2, 8]);
    let shapes = cache.stage_shapes();
    let expect: Vec<Vec<usize>> = vec![
        vec![4, 40, 2, 8],
        vec![16, 20, 2, 8],
        vec![64, 10, 2, 8],
        vec![640, 2, 8],
        vec![512, 2, 8],
        vec![512, 2, 8],
        vec![512, 2, 8],
        vec![512, 2, 8],
        vec![512, 2, 8],
        vec![80, 2, 8],
    ];
    assert_eq!(shapes, &expect[..]);
    assert!(y.all_finite());
}

fn roll(x: &Tensor<f64>, delta: usize) -> Tensor<f64> {
    let (c, b, t) = x.dims3();
    let mut out = x.clone();
    for row in 0..c * b {
        for ti in 0..t {
            out.data_mut()[row * t + (ti + delta) % t] = x.data()[row * t + ti];
        }
    }
    out
}

#[test]
fn discriminator_is_time_equivariant_with_circular_padding() {
    let mut r = rng(2);
    let cfg = DiscriminatorConfig {
        mel_dims: 16,
        channels_2d: vec![2, 4, 4],
        time_dilations_2d: vec![2, 4, 8],
        freq_stride: 2,
        channels_1d: 8,
        dilations_1d: vec![1, 3, 5, 7, 9],
    };
    let mut d = Discriminator::<f64>::new(&cfg, &mut r).unwrap();
    d.set_time_padding(Padding::Circular);
    let x = random_tensor(&[16, 2, 12], 1.0, &mut r);
    for mode in [Mode::Train, Mode::Eval] {
        for delta in [1, 5, 11] {
            let (y, _) = d.forward(&x, mode).unwrap();
            let (ys, _) = d.forward(&roll(&x, delta), mode).unwrap();
            for (a, b) in roll(&y, delta).data().iter().zip(ys.data()) {
                assert!((a - b).abs() < 1e-10, "{mode:?} shift {delta}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn encoder_maps_frames_to_noise_vectors() {
    let mut r = rng(3);
    let enc = Encoder::<f32>::new(&EncoderConfig::default(), 80, 20, 4, &mut r).unwrap();
    let x = random_tensor(&[80, 3, 16], 1.0, &mut r).map(|v| v as f32);
    let (z, _) = enc.forward(&x, Mode::Train).unwrap();
    assert_eq!(z.shape(), &[20, 3, 4]);
    assert!(z.all_finite());
    let bad = random_tensor(&[80, 1, 18], 1.0, &mut r).map(|v| v as f32);
    assert!(matches!(
        enc.forward(&bad, Mode::Eval),
        Err(unagan_core::Error::Shape(_))
    ));
}

#[test]
fn eval_mode_is_deterministic() {
    let mut r = rng(4);
    let d = Discriminator::<f32>::new(&DiscriminatorConfig::default(), &mut r).unwrap();
    let x = random_tensor(&[80, 1, 8], 1.0, &mut r).map(|v| v as f32);
    assert_eq!(
        d.forward(&x, Mode::Eval).unwrap().0,
        d.forward(&x, Mode::Eval).unwrap().0
    );
}

/// Output frames a change in noise column `t` can reach, for a generator
/// whose GBlocks have two kernel-3 convolutions and whose heads have one.
fn reach(levels: usize, t: usize) -> (isize, isize) {
    let (mut lo, mut hi) = (t as isize, t as isize);
    for level in 0..levels {
        if level > 0 {
            lo *= 2;
            hi = 2 * hi + 1;
        }
        lo -= 2;
        hi += 2;
    }
    (lo - 1, hi + 1)
}

fn locality_case(gru_layers: usize) {
    let mut r = rng(5 + gru_layers as u64);
    let cfg = GeneratorConfig {
        n_levels: 3,
        noise_dims: 4,
        mel_dims: 8,
        channels: vec![8, 8, 8],
        gru_layers,
    };
    let mut g = Generator::<f32>::new(&cfg, &mut r).unwrap();
    g.set_time_padding(Padding::Zero);
    let n_vec = 12;
    let data: Vec<f32> = random_tensor(&[4, 1, n_vec], 1.0, &mut r)
        .map(|v| v as f32)
        .into_data();
    let z = NoiseSequence::new(4, n_vec, data).unwrap();
    let base = g.generate(&z, Mode::Eval).unwrap();
    for t in [2usize, 6, 9] {
        let mut z2 = z.clone();
        for dim in 0..4 {
            z2.data_mut()[dim * n_vec + t] += 1.0;
        }
        let out = g.generate(&z2, Mode::Eval).unwrap();
        let (lo, hi) = reach(3, t);
        let mut changed = Vec::new();
        for f in 0..base.n_frames() {
            if (0..8).any(|b| base.get(b, f) != out.get(b, f)) {
                changed.push(f as isize);
            }
        }
        assert!(!changed.is_empty());
        assert!(
            changed.iter().all(|&f| f >= lo),
            "column {t}: frame before {lo} changed"
        );
        if gru_layers == 0 {
            assert!(
                changed.iter().all(|&f| f <= hi),
                "column {t}: frame after {hi} changed"
            );
        }
    }
}

#[test]
fn conv_only_generator_is_local() {
    locality_case(0);
}

#[test]
fn recurrent_generator_preserves_prefix() {
    locality_case(1);
}
