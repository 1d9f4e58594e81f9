//! Short-time Fourier analysis, log-mel extraction and Griffin-Lim phase
//! recovery for audio previews.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use unagan_core::mel::{denormalize, mel_filterbank, DspConfig, MelSpectrogram, NormStats};

use crate::error::{invalid, Result};

/// Periodic Hann window.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Index into a signal of length `len` under repeated mirror reflection
/// (edge samples are not repeated).
fn reflect(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let m = i.rem_euclid(period);
    (if m < len as isize { m } else { period - m }) as usize
}

/// Centered STFT planner: frames start every `hop` samples of the signal
/// reflect-padded by `n_fft / 2` on both sides.
pub struct Stft {
    n_fft: usize,
    hop: usize,
    window: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Stft {
    pub fn new(n_fft: usize, hop: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n_fft,
            hop,
            window: hann(n_fft),
            forward: planner.plan_fft_forward(n_fft),
            inverse: planner.plan_fft_inverse(n_fft),
        }
    }

    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    /// One-sided spectra, `1 + len / hop` frames of `n_fft / 2 + 1` bins.
    pub fn analyze(&self, x: &[f64]) -> Vec<Vec<Complex<f64>>> {
        let pad = (self.n_fft / 2) as isize;
        let frames = 1 + x.len() / self.hop;
        let mut buf = vec![Complex::default(); self.n_fft];
        (0..frames)
            .map(|t| {
                let start = (t * self.hop) as isize - pad;
                for (n, b) in buf.iter_mut().enumerate() {
                    *b = Complex::new(
                        x[reflect(start + n as isize, x.len())] * self.window[n],
                        0.0,
                    );
                }
                self.forward.process(&mut buf);
                buf[..self.n_bins()].to_vec()
            })
            .collect()
    }

    /// Weighted overlap-add inverse of [`Stft::analyze`], trimmed to
    /// `hop · (frames − 1)` samples.
    pub fn synthesize(&self, spec: &[Vec<Complex<f64>>]) -> Vec<f64> {
        let n = self.n_fft;
        let pad = n / 2;
        let frames = spec.len();
        let full = n + self.hop * frames.saturating_sub(1);
        let mut out = vec![0.0; full];
        let mut norm = vec![0.0; full];
        let mut buf = vec![Complex::default(); n];
        for (t, frame) in spec.iter().enumerate() {
            buf[..frame.len()].copy_from_slice(frame);
            for k in 1..n - frame.len() + 1 {
                buf[n - k] = frame[k].conj();
            }
            self.inverse.process(&mut buf);
            let start = t * self.hop;
            for i in 0..n {
                out[start + i] += buf[i].re / n as f64 * self.window[i];
                norm[start + i] += self.window[i] * self.window[i];
            }
        }
        let len = self.hop * frames.saturating_sub(1);
        (0..len)
            .map(|i| {
                if norm[i + pad] > 1e-10 {
                    out[i + pad] / norm[i + pad]
                } else {
                    0.0
                }
            })
            .collect()
    }
}

/// Natural-log mel spectrogram, `n_mels × (1 + len / hop)`:
/// `ln(max(M · |STFT(x)|, log_floor))`.
pub fn melspec(audio: &[f32], cfg: &DspConfig) -> Result<MelSpectrogram> {
    cfg.validate()?;
    if audio.is_empty() {
        return Err(invalid("audio is empty"));
    }
    if let Some(i) = audio.iter().position(|v| !v.is_finite()) {
        return Err(invalid(format!("sample {i} is not finite")));
    }
    let fb = mel_filterbank(cfg)?;
    let stft = Stft::new(cfg.n_fft, cfg.hop);
    let x: Vec<f64> = audio.iter().map(|&v| v as f64).collect();
    let spec = stft.analyze(&x);
    let (k, nb, t) = (cfg.n_mels, cfg.n_bins(), spec.len());
    let mut data = vec![0.0f32; k * t];
    for (ti, frame) in spec.iter().enumerate() {
        let mag: Vec<f64> = frame.iter().map(|c| c.norm()).collect();
        for m in 0..k {
            let e: f64 = fb[m * nb..(m + 1) * nb]
                .iter()
                .zip(&mag)
                .map(|(w, a)| w * a)
                .sum();
            data[m * t + ti] = e.max(cfg.log_floor).ln() as f32;
        }
    }
    Ok(MelSpectrogram::new(k, t, data)?)
}

/// Sparse view of the filterbank: the non-zero bin range of every filter.
struct Bank {
    rows: Vec<(usize, Vec<f64>)>,
    n_bins: usize,
}

impl Bank {
    fn new(cfg: &DspConfig) -> Result<Self> {
        let fb = mel_filterbank(cfg)?;
        let nb = cfg.n_bins();
        let rows = fb
            .chunks_exact(nb)
            .map(|row| {
                let lo = row.iter().position(|&w| w > 0.0).unwrap_or(0);
                let hi = row.iter().rposition(|&w| w > 0.0).map_or(lo, |i| i + 1);
                (lo, row[lo..hi].to_vec())
            })
            .collect();
        Ok(Self { rows, n_bins: nb })
    }

    fn apply(&self, s: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|(lo, w)| w.iter().zip(&s[*lo..]).map(|(a, b)| a * b).sum())
            .collect()
    }

    fn apply_t(&self, m: &[f64]) -> Vec<f64> {
        let mut s = vec![0.0; self.n_bins];
        for ((lo, w), &v) in self.rows.iter().zip(m) {
            for (o, a) in s[*lo..].iter_mut().zip(w) {
                *o += a * v;
            }
        }
        s
    }

    /// Non-negative least-squares estimate of a linear spectrum from mel
    /// energies by multiplicative updates.
    fn invert(&self, m: &[f64], iters: usize) -> Vec<f64> {
        let num = self.apply_t(m);
        let ones = self.apply_t(&self.apply(&vec![1.0; self.n_bins]));
        let mut s: Vec<f64> = num
            .iter()
            .zip(&ones)
            .map(|(a, b)| if *b > 0.0 { a / b } else { 0.0 })
            .collect();
        let eps = 1e-12
            * num
                .iter()
                .copied()
                .fold(0.0, f64::max)
                .max(f64::MIN_POSITIVE);
        for _ in 0..iters {
            let den = self.apply_t(&self.apply(&s));
            for ((v, n), d) in s.iter_mut().zip(&num).zip(&den) {
                *v *= n / (d + eps);
            }
        }
        s
    }
}

const NNLS_ITERS: usize = 50;

/// Approximate waveform for a normalized mel: denormalize, exponentiate,
/// invert the filterbank, then `iters` rounds of Griffin-Lim starting from
/// zero phase. Output length is `hop · (T − 1)`.
pub fn griffin_lim(
    mel: &MelSpectrogram,
    stats: &NormStats,
    cfg: &DspConfig,
    iters: usize,
) -> Result<Vec<f32>> {
    if iters == 0 {
        return Err(invalid("griffin_lim needs at least one iteration"));
    }
    if mel.n_mels() != cfg.n_mels {
        return Err(invalid(format!(
            "mel has {} bands, DSP config {}",
            mel.n_mels(),
            cfg.n_mels
        )));
    }
    let raw = denormalize(mel, stats)?;
    let bank = Bank::new(cfg)?;
    let (k, t) = (raw.n_mels(), raw.n_frames());
    let mag: Vec<Vec<f64>> = (0..t)
        .map(|ti| {
            let m: Vec<f64> = (0..k).map(|b| (raw.get(b, ti) as f64).exp()).collect();
            bank.invert(&m, NNLS_ITERS)
        })
        .collect();
    let stft = Stft::new(cfg.n_fft, cfg.hop);
    let with_phase = |spec: &[Vec<Complex<f64>>]| -> Vec<Vec<Complex<f64>>> {
        spec.iter()
            .zip(&mag)
            .map(|(frame, a)| {
                frame
                    .iter()
                    .zip(a)
                    .map(|(c, &m)| {
                        let r = c.norm();
                        if r > 0.0 {
                            c * (m / r)
                        } else {
                            Complex::new(m, 0.0)
                        }
                    })
                    .collect()
            })
            .collect()
    };
    let mut spec: Vec<Vec<Complex<f64>>> = mag
        .iter()
        .map(|a| a.iter().map(|&m| Complex::new(m, 0.0)).collect())
        .collect();
    let mut x = stft.synthesize(&spec);
    for _ in 0..iters {
        if x.is_empty() {
            break;
        }
        spec = with_phase(&stft.analyze(&x));
        x = stft.synthesize(&spec);
    }
    Ok(x.into_iter().map(|v| v as f32).collect())
}
