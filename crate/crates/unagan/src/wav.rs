//! PCM WAV input and 16-bit output.

use std::io::Cursor;
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::{invalid, Error, Result};
use crate::files::write_atomic;

fn wav_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Wav {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Reads a WAV file as mono samples in [-1, 1]; multichannel input is
/// averaged. Files not at `sample_rate` are rejected.
pub fn read_wav(path: &Path, sample_rate: u32) -> Result<Vec<f32>> {
    let mut reader = WavReader::open(path).map_err(|e| wav_err(path, e))?;
    let spec = reader.spec();
    if spec.sample_rate != sample_rate {
        return Err(invalid(format!(
            "{}: sample rate {} Hz, expected {sample_rate} Hz (resampling is not supported)",
            path.display(),
            spec.sample_rate
        )));
    }
    let interleaved: Vec<f32> = match spec.sample_format {
        SampleFormat::Int => {
            let scale = 1.0 / (1u64 << (spec.bits_per_sample - 1)) as f32;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f32 * scale))
                .collect::<Result<_, _>>()
                .map_err(|e| wav_err(path, e))?
        }
        SampleFormat::Float => reader
            .samples::<f32>()
            .collect::<Result<_, _>>()
            .map_err(|e| wav_err(path, e))?,
    };
    let ch = spec.channels.max(1) as usize;
    Ok(interleaved
        .chunks_exact(ch)
        .map(|f| f.iter().sum::<f32>() / ch as f32)
        .collect())
}

/// Writes mono 16-bit PCM, clipping to [-1, 1].
pub fn write_wav(path: &Path, samples: &[f32], sample_rate: u32) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut buf = Vec::new();
    {
        let mut w = WavWriter::new(Cursor::new(&mut buf), spec).map_err(|e| wav_err(path, e))?;
        for &s in samples {
            let v = (s.clamp(-1.0, 1.0) * i16::MAX as f32).round() as i16;
            w.write_sample(v).map_err(|e| wav_err(path, e))?;
        }
        w.finalize().map_err(|e| wav_err(path, e))?;
    }
    write_atomic(path, &buf)
}
