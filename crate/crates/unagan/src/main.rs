use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{error, info};
use unagan::config::Overrides;
use unagan::error::{Result, EXIT_OK};
use unagan::{pipeline, synth};

/// Unconditional mel-spectrogram generation with a hierarchical
/// boundary-equilibrium GAN and cycle regularization.
///
/// Exit codes: 0 success, 2 input error, 3 training divergence,
/// 4 checkpoint mismatch.
#[derive(Parser)]
#[command(name = "unagan", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration; flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Subcommand)]
enum Command {
    /// Extract normalized mel files and a manifest from a directory of WAVs
    Prepare {
        #[arg(long)]
        input_dir: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Train on a prepared corpus (minibatch of 5 and Adam lr 1e-4 by default)
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Continue from this checkpoint
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Generate mel files (and optional Griffin-Lim WAVs) from a checkpoint
    Generate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// NDB and JSD of generated mels against the training corpus
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        generated_dir: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Render a mel file as a grayscale PNG
    Plot {
        #[arg(long)]
        mel: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the bundled synthetic tone corpus as WAV files
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    let cfg = cli.overrides.resolve(cli.config.as_deref())?;
    match cli.command {
        Command::Prepare { input_dir, out_dir } => {
            let (path, m) = pipeline::prepare(&input_dir, &out_dir, &cfg.dsp)?;
            println!("{} clips -> {}", m.entries.len(), path.display());
        }
        Command::Train {
            manifest,
            out_dir,
            resume,
        } => {
            let out = pipeline::train(&manifest, &cfg, resume.as_deref(), &out_dir)?;
            if let Some(m) = out.metrics.last() {
                info!(
                    "step {} l_x {:.4} l_gz {:.4} tau {:.4} m_conv {:.4}",
                    m.step, m.l_x, m.l_gz, m.tau, m.m_conv
                );
            }
            println!("{}", out.final_checkpoint.display());
        }
        Command::Generate {
            checkpoint,
            out_dir,
        } => {
            let paths = pipeline::generate(&checkpoint, &cfg, &out_dir)?;
            println!("{} samples -> {}", paths.len(), out_dir.display());
        }
        Command::Eval {
            manifest,
            generated_dir,
            out_dir,
        } => {
            let (report, _) = pipeline::evaluate(&manifest, &generated_dir, &cfg, &out_dir)?;
            print!("{}", report.table());
        }
        Command::Plot { mel, out } => pipeline::plot(&mel, &out)?,
        Command::Synth { out_dir } => {
            let clips = synth::toy_corpus(cfg.dsp.sample_rate, cfg.train.seed);
            let paths = synth::write_corpus(&out_dir, &clips, cfg.dsp.sample_rate)?;
            println!("{} clips -> {}", paths.len(), out_dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let (blas_f32, blas_f64) = unagan_core::real::blas_in_use();
    log::debug!("OpenBLAS products: f32 {blas_f32}, f64 {blas_f64}");
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { EXIT_OK });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::from(EXIT_OK),
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
