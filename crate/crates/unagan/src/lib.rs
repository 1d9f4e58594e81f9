//! File formats, audio IO, feature extraction and the command-line pipeline
//! around `unagan-core`: prepare a corpus, train, generate, evaluate, plot.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dsp;
pub mod error;
pub mod files;
pub mod manifest;
pub mod pipeline;
pub mod plot;
pub mod synth;
pub mod wav;

pub use config::{EvalConfig, GenerateConfig, Overrides, RunConfig};
pub use error::{Error, Result};
pub use manifest::DatasetManifest;
