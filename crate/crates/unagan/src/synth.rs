//! Synthetic corpora: band-limited tones over low-level noise.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::wav::write_wav;

/// A sum of harmonics of `f0` under an attack/release envelope with slow
/// vibrato, plus one-pole low-passed noise of amplitude `noise_level`.
fn tone(
    f0: f64,
    harmonics: usize,
    secs: f64,
    noise_level: f64,
    sample_rate: u32,
    rng: &mut ChaCha8Rng,
) -> Vec<f32> {
    let sr = sample_rate as f64;
    let n = (secs * sr) as usize;
    let nyquist = sr / 2.0;
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let vib_rate = rng.random_range(3.0..6.0);
    let vib_depth = rng.random_range(0.002..0.01);
    let phases: Vec<f64> = (0..harmonics).map(|_| rng.random_range(0.0..TAU)).collect();
    let mut phase = 0.0;
    let mut lp = 0.0;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 / sr;
        let env = (t / 0.05).min(1.0) * ((secs - t) / 0.1).clamp(0.0, 1.0);
        let f = f0 * (1.0 + vib_depth * (TAU * vib_rate * t).sin());
        phase += TAU * f / sr;
        let mut s = 0.0;
        for (h, p) in phases.iter().enumerate() {
            let k = (h + 1) as f64;
            if k * f0 < nyquist * 0.9 {
                s += (k * phase + p).sin() / k;
            }
        }
        lp = 0.9 * lp + 0.1 * noise.sample(rng);
        out.push((0.3 * env * s + noise_level * lp) as f32);
    }
    out
}

/// Ten clips, 2.5 s each, of harmonic tones with fundamentals spread over
/// 150-800 Hz.
pub fn toy_corpus(sample_rate: u32, seed: u64) -> Vec<Vec<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..10)
        .map(|_| {
            let f0 = rng.random_range(150.0..800.0);
            let h = rng.random_range(2..6);
            tone(f0, h, 2.5, 0.01, sample_rate, &mut rng)
        })
        .collect()
}

/// `n_clips` noise-free clips alternating between two well separated modes:
/// a low pure tone (about 220 Hz) and a bright high tone (about 1760 Hz).
pub fn two_mode_corpus(n_clips: usize, secs: f64, sample_rate: u32, seed: u64) -> Vec<Vec<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_clips)
        .map(|i| {
            let jitter = rng.random_range(0.97..1.03);
            if i % 2 == 0 {
                tone(220.0 * jitter, 1, secs, 0.0, sample_rate, &mut rng)
            } else {
                tone(1760.0 * jitter, 4, secs, 0.0, sample_rate, &mut rng)
            }
        })
        .collect()
}

/// Writes clips as `clip-NN.wav` under `dir`.
pub fn write_corpus(dir: &Path, clips: &[Vec<f32>], sample_rate: u32) -> Result<Vec<PathBuf>> {
    clips
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let p = dir.join(format!("clip-{i:02}.wav"));
            write_wav(&p, c, sample_rate)?;
            Ok(p)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_corpus_fits_the_budget() {
        let c = toy_corpus(22050, 0);
        assert_eq!(c.len(), 10);
        let total: usize = c.iter().map(Vec::len).sum();
        assert!(total as f64 / 22050.0 <= 30.0);
        assert!(c.iter().flatten().all(|v| v.is_finite() && v.abs() <= 1.0));
        assert_eq!(c, toy_corpus(22050, 0));
    }

    #[test]
    fn two_modes_alternate() {
        let c = two_mode_corpus(4, 0.5, 8000, 1);
        assert_eq!(c.len(), 4);
        assert!(c.iter().all(|x| x.len() == 4000));
    }
}
