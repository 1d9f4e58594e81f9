//! Mel-spectrogram data types, the mel filterbank, per-band normalization,
//! fixed-length segment sampling and the binary `MEL1` file layout.
//!
//! Time-frequency analysis itself (STFT) lives in the std companion crate.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{format_err, invalid, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DspConfig {
    pub sample_rate: u32,
    pub n_fft: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub fmin: f64,
    /// `None` means `sample_rate / 2`.
    pub fmax: Option<f64>,
    pub log_floor: f64,
}

impl Default for DspConfig {
    fn default() -> Self {
        Self {
            sample_rate: 22050,
            n_fft: 1024,
            hop: 256,
            n_mels: 80,
            fmin: 0.0,
            fmax: None,
            log_floor: 1e-5,
        }
    }
}

impl DspConfig {
    pub fn fmax(&self) -> f64 {
        self.fmax.unwrap_or(self.sample_rate as f64 / 2.0)
    }

    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    pub fn validate(&self) -> Result<()> {
        let nyquist = self.sample_rate as f64 / 2.0;
        if self.n_mels == 0 {
            return Err(invalid!("n_mels must be at least 1"));
        }
        if self.n_fft < 2 || self.hop == 0 || self.hop > self.n_fft {
            return Err(invalid!(
                "need 0 < hop <= n_fft and n_fft >= 2 (hop {}, n_fft {})",
                self.hop,
                self.n_fft
            ));
        }
        if !(self.fmin >= 0.0 && self.fmin < self.fmax() && self.fmax() <= nyquist) {
            return Err(invalid!(
                "need 0 <= fmin < fmax <= {nyquist} (fmin {}, fmax {})",
                self.fmin,
                self.fmax()
            ));
        }
        if !(self.log_floor > 0.0 && self.log_floor.is_finite()) {
            return Err(invalid!("log_floor must be positive"));
        }
        Ok(())
    }

    /// Number of frames a centered STFT yields for `samples` input samples.
    pub fn frames_for(&self, samples: usize) -> usize {
        1 + samples / self.hop
    }

    /// Stable byte encoding used to fingerprint the feature pipeline.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.sample_rate.to_le_bytes());
        out.extend_from_slice(&(self.n_fft as u64).to_le_bytes());
        out.extend_from_slice(&(self.hop as u64).to_le_bytes());
        out.extend_from_slice(&(self.n_mels as u64).to_le_bytes());
        out.extend_from_slice(&self.fmin.to_le_bytes());
        out.extend_from_slice(&self.fmax().to_le_bytes());
        out.extend_from_slice(&self.log_floor.to_le_bytes());
        out
    }
}

/// HTK mel scale.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * libm::log10(1.0 + hz / 700.0)
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (libm::pow(10.0, mel / 2595.0) - 1.0)
}

/// `(left, center, right)` edge frequencies in Hz of every mel filter.
pub fn filter_edges(cfg: &DspConfig) -> Vec<(f64, f64, f64)> {
    let lo = hz_to_mel(cfg.fmin);
    let hi = hz_to_mel(cfg.fmax());
    let step = (hi - lo) / (cfg.n_mels + 1) as f64;
    let pts: Vec<f64> = (0..cfg.n_mels + 2)
        .map(|i| mel_to_hz(lo + step * i as f64))
        .collect();
    pts.windows(3).map(|w| (w[0], w[1], w[2])).collect()
}

/// Triangular filters on the HTK mel scale, `n_mels × (n_fft/2 + 1)`,
/// row-major. Every row is scaled so its largest entry is exactly 1.
pub fn mel_filterbank(cfg: &DspConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let n_bins = cfg.n_bins();
    let bin_hz = cfg.sample_rate as f64 / cfg.n_fft as f64;
    let mut fb = vec![0.0; cfg.n_mels * n_bins];
    for (m, (l, c, r)) in filter_edges(cfg).into_iter().enumerate() {
        let row = &mut fb[m * n_bins..(m + 1) * n_bins];
        for (i, w) in row.iter_mut().enumerate() {
            let f = i as f64 * bin_hz;
            let up = (f - l) / (c - l);
            let down = (r - f) / (r - c);
            *w = up.min(down).max(0.0);
        }
        let peak = row.iter().copied().fold(0.0, f64::max);
        if peak <= 0.0 {
            return Err(invalid!(
                "mel filter {m} ({l:.1}-{r:.1} Hz) covers no FFT bin; lower n_mels or raise n_fft"
            ));
        }
        row.iter_mut().for_each(|w| *w /= peak);
    }
    Ok(fb)
}

/// `K × T` log-mel features, row-major (row = band, column = frame).
#[derive(Clone, Debug, PartialEq)]
pub struct MelSpectrogram {
    n_mels: usize,
    n_frames: usize,
    data: Vec<f32>,
}

impl MelSpectrogram {
    pub fn new(n_mels: usize, n_frames: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != n_mels * n_frames {
            return Err(invalid!(
                "{n_mels}x{n_frames} mel needs {} values, got {}",
                n_mels * n_frames,
                data.len()
            ));
        }
        Ok(Self {
            n_mels,
            n_frames,
            data,
        })
    }

    pub fn filled(n_mels: usize, n_frames: usize, value: f32) -> Self {
        Self {
            n_mels,
            n_frames,
            data: vec![value; n_mels * n_frames],
        }
    }

    pub fn n_mels(&self) -> usize {
        self.n_mels
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn get(&self, band: usize, frame: usize) -> f32 {
        self.data[band * self.n_frames + frame]
    }

    pub fn band(&self, band: usize) -> &[f32] {
        &self.data[band * self.n_frames..(band + 1) * self.n_frames]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Frames `[start, start + len)`.
    pub fn crop(&self, start: usize, len: usize) -> Self {
        assert!(start + len <= self.n_frames, "crop out of range");
        let mut data = Vec::with_capacity(self.n_mels * len);
        for k in 0..self.n_mels {
            data.extend_from_slice(&self.band(k)[start..start + len]);
        }
        Self {
            n_mels: self.n_mels,
            n_frames: len,
            data,
        }
    }

    /// Keep the first `len` frames.
    pub fn truncate(&self, len: usize) -> Self {
        self.crop(0, len.min(self.n_frames))
    }
}

/// Per-band mean and standard deviation over a corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

pub const MIN_STD: f64 = 1e-8;

impl NormStats {
    pub fn identity(n_mels: usize) -> Self {
        Self {
            mean: vec![0.0; n_mels],
            std: vec![1.0; n_mels],
        }
    }

    pub fn n_mels(&self) -> usize {
        self.mean.len()
    }

    /// Normalized value of silence (a log-floored frame) in every band.
    pub fn silence(&self, cfg: &DspConfig) -> Vec<f32> {
        let floor = libm::log(cfg.log_floor);
        self.mean
            .iter()
            .zip(&self.std)
            .map(|(m, s)| ((floor - m) / s) as f32)
            .collect()
    }

    fn check(&self, mel: &MelSpectrogram) -> Result<()> {
        if self.mean.len() != mel.n_mels || self.std.len() != mel.n_mels {
            return Err(invalid!(
                "stats cover {} bands, mel has {}",
                self.mean.len(),
                mel.n_mels
            ));
        }
        Ok(())
    }
}

/// Streaming accumulator for [`NormStats`]; sums in `f64`.
#[derive(Clone, Debug)]
pub struct StatsAccumulator {
    count: u64,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

impl StatsAccumulator {
    pub fn new(n_mels: usize) -> Self {
        Self {
            count: 0,
            sum: vec![0.0; n_mels],
            sum_sq: vec![0.0; n_mels],
        }
    }

    pub fn add(&mut self, mel: &MelSpectrogram) -> Result<()> {
        if mel.n_mels != self.sum.len() {
            return Err(invalid!(
                "accumulator has {} bands, mel has {}",
                self.sum.len(),
                mel.n_mels
            ));
        }
        for k in 0..mel.n_mels {
            for &v in mel.band(k) {
                let v = v as f64;
                self.sum[k] += v;
                self.sum_sq[k] += v * v;
            }
        }
        self.count += mel.n_frames as u64;
        Ok(())
    }

    pub fn finish(&self) -> Result<NormStats> {
        if self.count == 0 {
            return Err(invalid!("no frames accumulated"));
        }
        let n = self.count as f64;
        let mean: Vec<f64> = self.sum.iter().map(|s| s / n).collect();
        let std = self
            .sum_sq
            .iter()
            .zip(&mean)
            .map(|(sq, m)| libm::sqrt((sq / n - m * m).max(0.0)).max(MIN_STD))
            .collect();
        Ok(NormStats { mean, std })
    }
}

/// Per band `(x - mean) / std`.
pub fn normalize(mel: &MelSpectrogram, stats: &NormStats) -> Result<MelSpectrogram> {
    stats.check(mel)?;
    let mut out = mel.clone();
    let t = mel.n_frames;
    for k in 0..mel.n_mels {
        let (m, s) = (stats.mean[k], stats.std[k].max(MIN_STD));
        for v in &mut out.data[k * t..(k + 1) * t] {
            *v = ((*v as f64 - m) / s) as f32;
        }
    }
    Ok(out)
}

/// Inverse of [`normalize`].
pub fn denormalize(mel: &MelSpectrogram, stats: &NormStats) -> Result<MelSpectrogram> {
    stats.check(mel)?;
    let mut out = mel.clone();
    let t = mel.n_frames;
    for k in 0..mel.n_mels {
        let (m, s) = (stats.mean[k], stats.std[k].max(MIN_STD));
        for v in &mut out.data[k * t..(k + 1) * t] {
            *v = (*v as f64 * s + m) as f32;
        }
    }
    Ok(out)
}

/// A fixed-length crop and where it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub mel: MelSpectrogram,
    pub offset: usize,
    /// Set when the source was shorter than the requested length.
    pub padded: bool,
}

/// Crop `t_seg` contiguous frames at a uniformly random offset. Short inputs
/// are right-padded with `pad` (one value per band, normally the normalized
/// silence level).
pub fn sample_segment(
    mel: &MelSpectrogram,
    t_seg: usize,
    pad: &[f32],
    rng: &mut impl Rng,
) -> Result<Segment> {
    if t_seg == 0 {
        return Err(invalid!("segment length must be at least 1"));
    }
    if pad.len() != mel.n_mels {
        return Err(invalid!(
            "pad has {} bands, mel has {}",
            pad.len(),
            mel.n_mels
        ));
    }
    if mel.n_frames >= t_seg {
        let offset = rng.random_range(0..=mel.n_frames - t_seg);
        return Ok(Segment {
            mel: mel.crop(offset, t_seg),
            offset,
            padded: false,
        });
    }
    let mut data = Vec::with_capacity(mel.n_mels * t_seg);
    for (k, &p) in pad.iter().enumerate() {
        data.extend_from_slice(mel.band(k));
        data.resize((k + 1) * t_seg, p);
    }
    Ok(Segment {
        mel: MelSpectrogram {
            n_mels: mel.n_mels,
            n_frames: t_seg,
            data,
        },
        offset: 0,
        padded: true,
    })
}

pub const MEL_MAGIC: &[u8; 4] = b"MEL1";

/// `"MEL1"`, u32 K, u32 T, then K·T little-endian f32 values, band-major.
pub fn encode_mel(mel: &MelSpectrogram) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 4 * mel.data.len());
    out.extend_from_slice(MEL_MAGIC);
    out.extend_from_slice(&(mel.n_mels as u32).to_le_bytes());
    out.extend_from_slice(&(mel.n_frames as u32).to_le_bytes());
    for v in &mel.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_mel(bytes: &[u8]) -> Result<MelSpectrogram> {
    if bytes.len() < 12 {
        return Err(format_err!("mel file truncated: {} bytes", bytes.len()));
    }
    if &bytes[..4] != MEL_MAGIC {
        return Err(format_err!("bad mel magic {:?}", &bytes[..4]));
    }
    let k = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let t = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let payload = &bytes[12..];
    let expected = k.checked_mul(t).and_then(|n| n.checked_mul(4));
    if expected != Some(payload.len()) {
        return Err(format_err!(
            "header says {k}x{t} but payload holds {} bytes",
            payload.len()
        ));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Ok(MelSpectrogram {
        n_mels: k,
        n_frames: t,
        data,
    })
}
