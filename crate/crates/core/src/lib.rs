//! Unconditional mel-spectrogram generation with a hierarchical
//! convolutional-recurrent generator trained against a boundary-equilibrium
//! autoencoder discriminator, plus a cycle-consistency encoder and a
//! clustering-based diversity evaluation.
//!
//! The crate is `no_std` (with `alloc`). File IO, audio decoding and the
//! command-line pipeline live in the `unagan` crate.
#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]
extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod container;
pub mod error;
pub mod evalmetrics;
pub mod generator;
pub mod mel;
pub mod netblocks;
pub mod nn;
pub mod real;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use real::Real;
pub use tensor::Tensor;
