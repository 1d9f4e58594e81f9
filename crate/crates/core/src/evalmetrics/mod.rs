//! Diversity evaluation: bin training patches with k-means, then compare
//! how generated patches occupy those bins (number of statistically
//! different bins and Jensen–Shannon divergence).

mod kmeans;
mod stats;

pub use kmeans::{MAX_ITERATIONS, TOLERANCE};
pub use stats::{inverse_normal_cdf, jsd, normal_cdf, proportions, two_proportion_z, z_crit};

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::container::{sha256, Container};
use crate::error::{format_err, invalid, Result};
use crate::mel::MelSpectrogram;
use crate::tensor::Tensor;

pub const DEFAULT_PATCH_FRAMES: usize = 16;
pub const DEFAULT_PATCH_STRIDE: usize = 16;
pub const DEFAULT_N_BINS: usize = 100;
pub const DEFAULT_ALPHA: f64 = 0.05;
pub const BIN_MODEL_MAGIC: &[u8; 4] = b"BINM";
pub const BIN_MODEL_VERSION: u32 = 1;

/// Flattened `K × patch_frames` windows, one row per patch.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchSet {
    pub dim: usize,
    pub patch_frames: usize,
    pub stride: usize,
    pub data: Vec<f64>,
    /// Inputs shorter than one patch.
    pub skipped: usize,
}

impl PatchSet {
    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

/// Slides a `K × patch_frames` window with step `stride` over every mel and
/// flattens each window band by band. Mels shorter than the window are
/// skipped and counted.
pub fn patchify(mels: &[MelSpectrogram], patch_frames: usize, stride: usize) -> Result<PatchSet> {
    if patch_frames == 0 || stride == 0 {
        return Err(invalid!("patch_frames and stride must be positive"));
    }
    let k = mels.first().map_or(0, |m| m.n_mels());
    if mels.iter().any(|m| m.n_mels() != k) {
        return Err(invalid!("mels disagree on the number of bands"));
    }
    let mut out = PatchSet {
        dim: k * patch_frames,
        patch_frames,
        stride,
        data: Vec::new(),
        skipped: 0,
    };
    for mel in mels {
        let t = mel.n_frames();
        if t < patch_frames {
            out.skipped += 1;
            continue;
        }
        for start in (0..=t - patch_frames).step_by(stride) {
            for band in 0..k {
                let row = &mel.band(band)[start..start + patch_frames];
                out.data.extend(row.iter().map(|&v| v as f64));
            }
        }
    }
    Ok(out)
}

/// k-means bins over training patches.
#[derive(Clone, Debug, PartialEq)]
pub struct BinModel {
    pub dim: usize,
    /// `[n_bins, dim]`, row-major.
    pub centers: Vec<f32>,
    pub train_counts: Vec<u64>,
    pub seed: u64,
    pub patch_frames: usize,
    pub patch_stride: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BinModelMeta {
    n_bins: usize,
    dim: usize,
    n_train: u64,
    seed: u64,
    patch_frames: usize,
    patch_stride: usize,
}

impl BinModel {
    pub fn n_bins(&self) -> usize {
        self.centers.len() / self.dim.max(1)
    }

    pub fn n_train(&self) -> u64 {
        self.train_counts.iter().sum()
    }

    pub fn train_proportions(&self) -> Vec<f64> {
        proportions(&self.train_counts)
    }

    /// Nearest bin per patch (Euclidean, ties to the lower index).
    pub fn assign(&self, patches: &PatchSet) -> Result<Vec<usize>> {
        if patches.dim != self.dim {
            return Err(invalid!(
                "patch dimension {} does not match the bin model's {}",
                patches.dim,
                self.dim
            ));
        }
        let centers: Vec<f64> = self.centers.iter().map(|&v| v as f64).collect();
        let k = self.n_bins();
        let mut out = Vec::with_capacity(patches.len());
        const CHUNK: usize = 1024;
        for chunk in patches.data.chunks(CHUNK * self.dim) {
            let norms = kmeans::norms(chunk, self.dim);
            let d = kmeans::squared_distances(chunk, &norms, &centers, self.dim);
            out.extend(kmeans::nearest(&d, k).into_iter().map(|(c, _)| c));
        }
        Ok(out)
    }

    fn histogram(&self, patches: &PatchSet) -> Result<Vec<u64>> {
        let mut counts = vec![0u64; self.n_bins()];
        for c in self.assign(patches)? {
            counts[c] += 1;
        }
        Ok(counts)
    }

    pub fn encode(&self) -> Vec<u8> {
        let meta = BinModelMeta {
            n_bins: self.n_bins(),
            dim: self.dim,
            n_train: self.n_train(),
            seed: self.seed,
            patch_frames: self.patch_frames,
            patch_stride: self.patch_stride,
        };
        let meta = serde_json::to_string(&meta).expect("metadata serializes");
        let centers = Tensor::from_vec(&[self.n_bins(), self.dim], self.centers.clone())
            .expect("shape matches");
        let counts = self.train_counts.iter().map(|&c| c as f32).collect();
        let counts = Tensor::from_vec(&[self.n_bins()], counts).expect("shape matches");
        Container {
            magic: *BIN_MODEL_MAGIC,
            version: BIN_MODEL_VERSION,
            digest: sha256(meta.as_bytes()),
            meta,
            tensors: vec![
                ("centers".to_string(), centers),
                ("train_counts".to_string(), counts),
            ],
        }
        .encode()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut c = Container::decode(bytes, BIN_MODEL_MAGIC)?;
        if c.version != BIN_MODEL_VERSION {
            return Err(format_err!("unsupported bin model version {}", c.version));
        }
        if sha256(c.meta.as_bytes()) != c.digest {
            return Err(format_err!("bin model metadata digest mismatch"));
        }
        let meta: BinModelMeta = serde_json::from_str(&c.meta)
            .map_err(|e| format_err!("bad bin model metadata: {e}"))?;
        let centers = c
            .take("centers")
            .ok_or_else(|| format_err!("bin model has no centers"))?;
        let counts = c
            .take("train_counts")
            .ok_or_else(|| format_err!("bin model has no counts"))?;
        if !c.tensors.is_empty() {
            return Err(format_err!("bin model has unexpected tensors"));
        }
        if centers.shape() != [meta.n_bins, meta.dim] || counts.shape() != [meta.n_bins] {
            return Err(format_err!(
                "bin model tensor shapes disagree with its metadata"
            ));
        }
        let mut train_counts = Vec::with_capacity(meta.n_bins);
        for &v in counts.data() {
            if !(v >= 1.0 && libm::truncf(v) == v && v < 16_777_216.0) {
                return Err(format_err!("invalid bin count {v}"));
            }
            train_counts.push(v as u64);
        }
        if train_counts.iter().sum::<u64>() != meta.n_train {
            return Err(format_err!("bin counts do not add up to n_train"));
        }
        Ok(Self {
            dim: meta.dim,
            centers: centers.into_data(),
            train_counts,
            seed: meta.seed,
            patch_frames: meta.patch_frames,
            patch_stride: meta.patch_stride,
        })
    }
}

/// Clusters training patches into `n_bins` bins. Deterministic in `seed`.
/// Centers are stored in single precision and the training histogram is
/// taken with the stored centers.
pub fn fit_bins(train: &PatchSet, n_bins: usize, seed: u64) -> Result<BinModel> {
    if n_bins == 0 {
        return Err(invalid!("n_bins must be positive"));
    }
    if train.len() < n_bins {
        return Err(invalid!(
            "{} training vectors cannot fill {n_bins} bins",
            train.len()
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = kmeans::kmeans(&train.data, train.dim, n_bins, &mut rng);
    let mut model = BinModel {
        dim: train.dim,
        centers: centers.iter().map(|&v| v as f32).collect(),
        train_counts: Vec::new(),
        seed,
        patch_frames: train.patch_frames,
        patch_stride: train.stride,
    };
    model.train_counts = model.histogram(train)?;
    if let Some(empty) = model.train_counts.iter().position(|&c| c == 0) {
        return Err(invalid!(
            "bin {empty} is empty; the training set has fewer distinct vectors than bins"
        ));
    }
    Ok(model)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinStat {
    pub train_prop: f64,
    pub gen_prop: f64,
    pub z_score: f64,
    pub significant: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinReport {
    pub ndb: usize,
    pub jsd: f64,
    pub alpha: f64,
    pub z_crit: f64,
    pub n_train: u64,
    pub n_gen: u64,
    pub per_bin: Vec<BinStat>,
}

/// Assigns generated patches to the model's bins and tests each bin's
/// occupancy against the training proportion.
pub fn assign_and_test(generated: &PatchSet, model: &BinModel, alpha: f64) -> Result<BinReport> {
    if generated.is_empty() {
        return Err(invalid!("no generated vectors"));
    }
    let zc = z_crit(alpha)?;
    let gen_counts = model.histogram(generated)?;
    report_from_counts(&model.train_counts, &gen_counts, alpha, zc)
}

/// Per-bin tests and JSD for two occupancy histograms.
pub fn report_from_counts(
    train: &[u64],
    generated: &[u64],
    alpha: f64,
    zc: f64,
) -> Result<BinReport> {
    if train.len() != generated.len() || train.is_empty() {
        return Err(invalid!("histograms must be non-empty and of equal length"));
    }
    let (n1, n2) = (train.iter().sum::<u64>(), generated.iter().sum::<u64>());
    if n1 == 0 || n2 == 0 {
        return Err(invalid!("both histograms must be non-empty"));
    }
    let (p, q) = (proportions(train), proportions(generated));
    let per_bin: Vec<BinStat> = (0..train.len())
        .map(|i| {
            let z = two_proportion_z(train[i], n1, generated[i], n2);
            BinStat {
                train_prop: p[i],
                gen_prop: q[i],
                z_score: z,
                significant: z.abs() > zc,
            }
        })
        .collect();
    Ok(BinReport {
        ndb: per_bin.iter().filter(|b| b.significant).count(),
        jsd: jsd(&p, &q)?,
        alpha,
        z_crit: zc,
        n_train: n1,
        n_gen: n2,
        per_bin,
    })
}

impl BinReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| format_err!("bad report: {e}"))
    }

    /// Aligned human-readable table.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "NDB {} / {} bins (alpha {}, |z| > {:.6})",
            self.ndb,
            self.per_bin.len(),
            self.alpha,
            self.z_crit
        );
        let _ = writeln!(
            s,
            "JSD {:.6} bits (n_train {}, n_gen {})",
            self.jsd, self.n_train, self.n_gen
        );
        let _ = writeln!(
            s,
            "{:>5}  {:>10}  {:>10}  {:>9}  diff",
            "bin", "train", "gen", "z"
        );
        for (i, b) in self.per_bin.iter().enumerate() {
            let mark = if b.significant { "*" } else { "" };
            let _ = writeln!(
                s,
                "{i:>5}  {:>10.6}  {:>10.6}  {:>9.3}  {mark}",
                b.train_prop, b.gen_prop, b.z_score
            );
        }
        s
    }
}
