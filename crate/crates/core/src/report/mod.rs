// SPDX-License-Identifier: Apache-2.0

//! Manifest orchestration and report rendering.

mod bundle;
mod degradation;
mod render;

pub use bundle::{
    kappa_with_ci, load_curves, run_manifest, AccuracyCell, Comparison, CurveEntry, ImplicitRow, LeaceRow,
    ReportBundle, RunSettings, LEACE_CONDITIONS,
};
pub use degradation::{degradation_curve, DegradationSeries, DegradationTable, NoiseLevel, Reversal};
pub use render::{ordered_comparisons, render, render_files, Format};
