//! Feature files, checkpoints, exports, run configuration, training runs and
//! ablations on top of `psp-core`.

pub mod ablate;
pub mod checkpoint;
pub mod error;
pub mod export;
pub mod features;
pub mod manifest;
pub mod report;
pub mod run;
pub mod runconfig;

pub use error::{Error, FormatError, Result};
pub use psp_core;
