// SPDX-License-Identifier: Apache-2.0

//! Tooling for testing whether a speech LLM behaves like an ASR → LLM cascade.
//!
//! The crate works entirely on files: prediction logs produced by the systems
//! under test and hidden-state dumps exported from the models. Nothing here runs
//! a model.
//!
//! * [`data`]: label spaces, prediction logs, the `HSD1` tensor container,
//!   hidden-state dumps and run manifests.
//! * [`stats`]: Cohen's κ, percentile bootstrap intervals, conditional error
//!   overlap, McNemar's test and Benjamini-Hochberg correction.
//! * [`signal`]: WAV I/O, babble mixing at a target SNR, frame energy and pitch.
//! * [`probes`]: ridge and CTC probes over hidden states.
//! * [`lens`]: logit lens with the final RMSNorm.
//! * [`erasure`]: LEACE erasers, random controls and guardedness checks.
//! * [`report`]: manifest orchestration and CSV/JSON/Markdown rendering.

pub mod data;
pub mod erasure;
mod error;
pub mod lens;
pub mod linalg;
pub mod probes;
pub mod report;
pub mod signal;
pub mod stats;

pub use error::{Error, ErrorKind, Result};

/// Crate version stamped into rendered reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
