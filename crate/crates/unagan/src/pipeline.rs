//! The five pipeline commands as library functions. Every file they write
//! lands under the given output directory.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use unagan_core::evalmetrics::{assign_and_test, fit_bins, patchify, BinModel, BinReport};
use unagan_core::mel::{
    normalize, sample_segment, DspConfig, MelSpectrogram, NormStats, StatsAccumulator,
};
use unagan_core::nn::Mode;
use unagan_core::training::{Checkpoint, StepMetrics, Trainer};
use unagan_core::{Error as CoreError, Tensor};

use crate::config::RunConfig;
use crate::dsp::{griffin_lim, melspec};
use crate::error::{invalid, Error, Result};
use crate::files::{list_files, read, read_mel, write_atomic, write_mel};
use crate::manifest::{DatasetManifest, ManifestEntry, MANIFEST_FILE, MANIFEST_VERSION};
use crate::wav::{read_wav, write_wav};

pub const MEL_DIR: &str = "mels";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const TRAIN_LOG: &str = "train_log.jsonl";
pub const REPORT_FILE: &str = "report.json";
pub const BIN_MODEL_FILE: &str = "bins.binm";

/// How the τ update reads the discriminator, recorded in every log header.
pub const TAU_TIMING: &str =
    "post-update: L(X) re-evaluated on the real batch after the D step; L(G(Z)) from the G step against the updated D";

/// Extracts log-mels for every WAV in `input_dir`, computes per-band corpus
/// statistics, and writes normalized mel files plus `manifest.toml` under
/// `out_dir`. Unreadable files are skipped with a warning.
pub fn prepare(
    input_dir: &Path,
    out_dir: &Path,
    dsp: &DspConfig,
) -> Result<(PathBuf, DatasetManifest)> {
    dsp.validate()?;
    let wavs = list_files(input_dir, "wav")?;
    if wavs.is_empty() {
        return Err(invalid(format!("no .wav files in {}", input_dir.display())));
    }
    let mut clips: Vec<(String, MelSpectrogram)> = Vec::new();
    for path in &wavs {
        let mel = read_wav(path, dsp.sample_rate).and_then(|audio| melspec(&audio, dsp));
        match mel {
            Ok(mel) => {
                let stem = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default();
                clips.push((stem, mel));
            }
            Err(e) => warn!("skipping {}: {e}", path.display()),
        }
    }
    if clips.is_empty() {
        return Err(invalid(format!(
            "none of the {} WAV files in {} could be read",
            wavs.len(),
            input_dir.display()
        )));
    }
    let mut acc = StatsAccumulator::new(dsp.n_mels);
    for (_, mel) in &clips {
        acc.add(mel)?;
    }
    let stats = acc.finish()?;
    let mut entries = Vec::with_capacity(clips.len());
    for (stem, mel) in &clips {
        let rel = Path::new(MEL_DIR).join(format!("{stem}.mel"));
        write_mel(&normalize(mel, &stats)?, &out_dir.join(&rel))?;
        entries.push(ManifestEntry {
            path: rel,
            n_frames: mel.n_frames(),
        });
    }
    let manifest = DatasetManifest {
        version: MANIFEST_VERSION,
        dsp: dsp.clone(),
        stats,
        entries,
    };
    let path = out_dir.join(MANIFEST_FILE);
    manifest.save(&path)?;
    info!("prepared {} clips into {}", clips.len(), path.display());
    Ok((path, manifest))
}

/// Random training batch `[K, B, T]`: each item is a uniformly chosen clip
/// cropped at a uniform offset, short clips padded with `pad`.
pub fn sample_batch(
    mels: &[MelSpectrogram],
    t_seg: usize,
    batch: usize,
    pad: &[f32],
    rng: &mut impl Rng,
) -> Result<Tensor<f32>> {
    if mels.is_empty() {
        return Err(invalid("no training clips"));
    }
    let k = mels[0].n_mels();
    let mut data = vec![0.0f32; k * batch * t_seg];
    for b in 0..batch {
        let clip = &mels[rng.random_range(0..mels.len())];
        let seg = sample_segment(clip, t_seg, pad, rng)?;
        for band in 0..k {
            let o = (band * batch + b) * t_seg;
            data[o..o + t_seg].copy_from_slice(seg.mel.band(band));
        }
    }
    Ok(Tensor::from_vec(&[k, batch, t_seg], data)?)
}

#[derive(Serialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum LogRecord<'a> {
    Header {
        tau_timing: &'a str,
        start_step: u64,
        steps: u64,
        config: &'a RunConfig,
    },
    Step(StepMetrics),
    Diverged {
        step: u64,
        detail: &'a str,
    },
}

struct TrainLog(BufWriter<File>);

impl TrainLog {
    fn open(path: &Path, append: bool) -> Result<Self> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let f = OpenOptions::new()
            .create(true)
            .write(true)
            .append(append)
            .truncate(!append)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(Self(BufWriter::new(f)))
    }

    fn write(&mut self, rec: &LogRecord) -> std::io::Result<()> {
        serde_json::to_writer(&mut self.0, rec)?;
        self.0.write_all(b"\n")?;
        self.0.flush()
    }
}

/// Result of a training run.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub final_checkpoint: PathBuf,
    pub metrics: Vec<StepMetrics>,
}

pub fn checkpoint_path(out_dir: &Path, step: u64) -> PathBuf {
    out_dir
        .join(CHECKPOINT_DIR)
        .join(format!("step-{step:08}.ckpt"))
}

fn save_checkpoint(
    trainer: &Trainer,
    manifest: &DatasetManifest,
    out_dir: &Path,
) -> Result<PathBuf> {
    let mut ck = Checkpoint::capture(trainer, &manifest.dsp);
    ck.meta.stats = Some(manifest.stats.clone());
    let path = checkpoint_path(out_dir, trainer.step());
    write_atomic(&path, &ck.encode())?;
    Ok(path)
}

/// Runs `cfg.train.total_steps` steps on the corpus of `manifest_path`,
/// fresh or continuing from `resume`. Checkpoints every
/// `checkpoint_interval` steps and after the last one; each step appends a
/// record to `train_log.jsonl`. On divergence the checkpoints written so far
/// are kept and the error is returned.
pub fn train(
    manifest_path: &Path,
    cfg: &RunConfig,
    resume: Option<&Path>,
    out_dir: &Path,
) -> Result<TrainOutcome> {
    let (manifest, mels) = DatasetManifest::load(manifest_path)?;
    let mut trainer = match resume {
        Some(p) => {
            let ck = Checkpoint::decode(&read(p)?, Some(&manifest.dsp))?;
            let mut t = ck.into_trainer()?;
            let mut wanted = cfg.train.clone();
            wanted.seed = t.config.seed;
            wanted.total_steps = t.config.total_steps;
            wanted.checkpoint_interval = t.config.checkpoint_interval;
            if wanted != t.config || &cfg.model != t.models.config() {
                warn!("resuming with the checkpoint's model and optimizer settings; differing config values are ignored");
            }
            t.config.total_steps = cfg.train.total_steps;
            t.config.checkpoint_interval = cfg.train.checkpoint_interval;
            t
        }
        None => {
            if cfg.model.generator.mel_dims != manifest.dsp.n_mels {
                return Err(invalid(format!(
                    "model expects {} mel bands, corpus has {}",
                    cfg.model.generator.mel_dims, manifest.dsp.n_mels
                )));
            }
            Trainer::new(&cfg.model, cfg.train.clone())?
        }
    };
    let start = trainer.step();
    let steps = trainer.config.total_steps;
    let interval = trainer.config.checkpoint_interval;
    let (seg, batch) = (trainer.config.segment_frames, trainer.config.batch_size);
    let pad = manifest.stats.silence(&manifest.dsp);
    let mut log = TrainLog::open(&out_dir.join(TRAIN_LOG), resume.is_some())?;
    let io = |e| Error::io(out_dir.join(TRAIN_LOG), e);
    log.write(&LogRecord::Header {
        tau_timing: TAU_TIMING,
        start_step: start,
        steps,
        config: cfg,
    })
    .map_err(io)?;
    let mut metrics = Vec::with_capacity(steps as usize);
    let mut last = None;
    for _ in 0..steps {
        let x = sample_batch(&mels, seg, batch, &pad, &mut trainer.rng)?;
        let m = match trainer.train_step(&x) {
            Ok(m) => m,
            Err(e @ CoreError::TrainingDiverged { step, .. }) => {
                let detail = e.to_string();
                log.write(&LogRecord::Diverged {
                    step,
                    detail: &detail,
                })
                .map_err(io)?;
                return Err(e.into());
            }
            Err(e) => return Err(e.into()),
        };
        log.write(&LogRecord::Step(m)).map_err(io)?;
        metrics.push(m);
        let done = trainer.step() - start;
        if done == steps || (interval > 0 && trainer.step() % interval == 0) {
            last = Some(save_checkpoint(&trainer, &manifest, out_dir)?);
        }
    }
    let final_checkpoint = match last {
        Some(p) => p,
        None => save_checkpoint(&trainer, &manifest, out_dir)?,
    };
    Ok(TrainOutcome {
        final_checkpoint,
        metrics,
    })
}

/// Writes `n_samples` mel files of exactly `frames` frames, sample `i`
/// drawn with seed `seed + i`; with `wav`, also Griffin-Lim previews. The
/// checkpoint must have been trained with `dsp`.
pub fn generate(checkpoint: &Path, cfg: &RunConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let g = &cfg.generate;
    if g.frames == 0 {
        return Err(invalid("frames must be at least 1"));
    }
    let ck = Checkpoint::decode(&read(checkpoint)?, Some(&cfg.dsp))?;
    let gen = ck.generator()?;
    let stats: Option<&NormStats> = ck.meta.stats.as_ref();
    if g.wav && stats.is_none() {
        return Err(invalid(
            "checkpoint carries no normalization statistics; cannot render audio",
        ));
    }
    let mut paths = Vec::with_capacity(g.n_samples);
    for i in 0..g.n_samples {
        let mut rng = ChaCha8Rng::seed_from_u64(g.seed.wrapping_add(i as u64));
        let mel = gen.generate_frames(g.frames, Mode::Eval, &mut rng)?;
        let path = out_dir.join(format!("sample-{i:04}.mel"));
        write_mel(&mel, &path)?;
        if let (true, Some(stats)) = (g.wav, stats) {
            let audio = griffin_lim(&mel, stats, &ck.meta.dsp, g.griffin_lim_iters)?;
            write_wav(&path.with_extension("wav"), &audio, ck.meta.dsp.sample_rate)?;
        }
        paths.push(path);
    }
    Ok(paths)
}

/// Fits bins on the training corpus, tests the mel files of
/// `generated_dir` against them, and writes `report.json` and `bins.binm`.
pub fn evaluate(
    manifest_path: &Path,
    generated_dir: &Path,
    cfg: &RunConfig,
    out_dir: &Path,
) -> Result<(BinReport, BinModel)> {
    let e = &cfg.eval;
    let (_, train_mels) = DatasetManifest::load(manifest_path)?;
    let gen_paths = list_files(generated_dir, "mel")?;
    if gen_paths.is_empty() {
        return Err(invalid(format!(
            "no .mel files in {}",
            generated_dir.display()
        )));
    }
    let gen_mels = gen_paths
        .iter()
        .map(|p| read_mel(p))
        .collect::<Result<Vec<_>>>()?;
    let train = patchify(&train_mels, e.patch_frames, e.patch_stride)?;
    let gen = patchify(&gen_mels, e.patch_frames, e.patch_stride)?;
    if gen.skipped > 0 {
        warn!("{} generated files are shorter than one patch", gen.skipped);
    }
    let model = fit_bins(&train, e.n_bins, e.seed)?;
    let report = assign_and_test(&gen, &model, e.alpha)?;
    write_atomic(&out_dir.join(REPORT_FILE), report.to_json().as_bytes())?;
    write_atomic(&out_dir.join(BIN_MODEL_FILE), &model.encode())?;
    Ok((report, model))
}

/// Renders a mel file as a grayscale PNG.
pub fn plot(mel_file: &Path, out_image: &Path) -> Result<()> {
    crate::plot::plot_mel(&read_mel(mel_file)?, out_image)
}
