//! Versioned TOML manifest of a prepared dataset.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use unagan_core::mel::{DspConfig, MelSpectrogram, NormStats};

use crate::error::{invalid, Error, Result};
use crate::files::{read_mel, write_atomic};

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    /// Mel file, relative to the manifest's directory.
    pub path: PathBuf,
    pub n_frames: usize,
}

/// Normalized mel files of a corpus, the DSP settings that produced them and
/// the per-band statistics used for normalization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub version: u32,
    pub dsp: DspConfig,
    pub stats: NormStats,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let m: Self = toml::from_str(text)
            .map_err(|e| unagan_core::Error::Format(format!("manifest: {e}")))?;
        if m.version != MANIFEST_VERSION {
            return Err(unagan_core::Error::Format(format!(
                "unsupported manifest version {}",
                m.version
            ))
            .into());
        }
        m.dsp.validate()?;
        if m.stats.mean.len() != m.dsp.n_mels || m.stats.std.len() != m.dsp.n_mels {
            return Err(invalid(format!(
                "manifest stats do not cover {} bands",
                m.dsp.n_mels
            )));
        }
        if m.stats.std.iter().any(|&s| !(s > 0.0)) {
            return Err(invalid("manifest stats contain a non-positive std"));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_toml().as_bytes())
    }

    /// Reads and validates a manifest, then loads every listed mel and
    /// checks it against its entry.
    pub fn load(path: &Path) -> Result<(Self, Vec<MelSpectrogram>)> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m = Self::from_toml(&text)?;
        if m.entries.is_empty() {
            return Err(invalid(format!("{} lists no mel files", path.display())));
        }
        let base = path.parent().unwrap_or(Path::new("."));
        let mut mels = Vec::with_capacity(m.entries.len());
        for e in &m.entries {
            let mel = read_mel(&base.join(&e.path))?;
            if mel.n_mels() != m.dsp.n_mels || mel.n_frames() != e.n_frames {
                return Err(invalid(format!(
                    "{}: {}x{} mel, manifest expects {}x{}",
                    e.path.display(),
                    mel.n_mels(),
                    mel.n_frames(),
                    m.dsp.n_mels,
                    e.n_frames
                )));
            }
            mels.push(mel);
        }
        Ok((m, mels))
    }
}
