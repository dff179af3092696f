//! Differentiable audio-visual event localization with positive sample
//! propagation.
//!
//! The crate is `no_std` (it needs `alloc`) and contains only pure
//! computation: a small reverse-mode engine over dense matrices, a synthetic
//! video generator, the attention-plus-recurrent encoder, cross-modal
//! similarity pruning and propagation, classification heads, objectives, and
//! a deterministic training loop. File formats and the command line live in
//! the `psp` crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod config;
pub mod data;
pub mod encoder;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod heads;
pub mod losses;
pub mod model;
pub mod optim;
pub mod params;
pub mod psp;
pub mod seed;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use graph::{Elementwise, Graph, Var};
pub use tensor::{Real, Tensor};
