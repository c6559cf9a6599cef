// SPDX-License-Identifier: Apache-2.0

//! Linear probes on hidden-state dumps: ridge probes for energy, pitch and
//! character frequencies, and a per-frame CTC probe scored by decodability.

pub mod alphabet;
mod ctc;
mod ctc_probe;
mod curve;
mod decodability;
mod file;
mod ridge;
mod split;

pub use alphabet::{boc_vector, decode, encode, normalize_text, ALPHABET, ALPHABET_SIZE, BLANK, CTC_CLASSES};
pub use ctc::{best_path, collapse, ctc_loss, ctc_loss_and_grad, greedy_ctc_decode, log_softmax, min_frames};
pub use ctc_probe::{fit_ctc_probe, CtcProbe, CtcTraining};
pub use curve::{
    aligned_frame, fit_probe, probe_curve, ridge_data, CurveShape, FittedProbe, LayerCurve, ProbeKind, ProbeOptions,
};
pub use decodability::text_decodability;
pub use ridge::{fit_ridge_probe, r2_scores, Lambda, ProbeData, R2, RidgeModel, RidgeProbe};
pub use split::SplitSpec;

use nalgebra::DMatrix;

use crate::data::HiddenStateDump;

/// Rows of a dump that probes see: the audio positions when recorded,
/// otherwise every position.
pub fn probe_frames(d: &HiddenStateDump) -> DMatrix<f64> {
    match &d.audio_positions {
        Some(pos) => DMatrix::from_fn(pos.len(), d.width(), |i, j| d.frames[(pos[i], j)] as f64),
        None => d.frames.map(|v| v as f64),
    }
}
