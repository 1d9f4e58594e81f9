//! Grayscale PNG rendering of a mel spectrogram.

use std::path::Path;

use unagan_core::mel::MelSpectrogram;

use crate::error::{invalid, Result};
use crate::files::write_atomic;

/// `T × K` 8-bit pixels: x is time, y is band with the lowest band at the
/// bottom. The minimum maps to 0 and the maximum to 255; a constant mel
/// renders as uniform mid-gray.
pub fn render(mel: &MelSpectrogram) -> Result<(u32, u32, Vec<u8>)> {
    let (k, t) = (mel.n_mels(), mel.n_frames());
    if k == 0 || t == 0 {
        return Err(invalid("cannot plot an empty mel"));
    }
    if !mel.is_finite() {
        return Err(invalid("cannot plot a mel with non-finite values"));
    }
    let lo = mel.data().iter().copied().fold(f32::INFINITY, f32::min) as f64;
    let hi = mel.data().iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let mut pixels = Vec::with_capacity(k * t);
    for y in 0..k {
        let band = k - 1 - y;
        for x in 0..t {
            let v = mel.get(band, x) as f64;
            let p = if hi > lo {
                (255.0 * (v - lo) / (hi - lo)).round()
            } else {
                128.0
            };
            pixels.push(p as u8);
        }
    }
    Ok((t as u32, k as u32, pixels))
}

pub fn encode_png(width: u32, height: u32, pixels: &[u8]) -> Vec<u8> {
    let mut buf = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut buf, width, height);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc.write_header().expect("in-memory PNG header");
        w.write_image_data(pixels).expect("in-memory PNG data");
    }
    buf
}

pub fn plot_mel(mel: &MelSpectrogram, out: &Path) -> Result<()> {
    let (w, h, px) = render(mel)?;
    write_atomic(out, &encode_png(w, h, &px))
}
