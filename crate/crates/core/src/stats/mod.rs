// SPDX-License-Identifier: Apache-2.0

//! Paired-classifier statistics.
//!
//! Every function here is a pure function of its inputs. INVALID predictions
//! are an ordinary category for κ and always count as wrong against gold.

mod bootstrap;
mod fdr;
mod kappa;
mod mcnemar;
mod overlap;

pub use bootstrap::{bootstrap_ci, bootstrap_ci_with_threads, percentile, resample_indices, Metric};
pub use fdr::{bh_fdr, FdrResult};
pub use kappa::{cohen_kappa, kappa_from_labels, KappaResult};
pub use mcnemar::{mcnemar, mcnemar_from_counts, McNemarMethod, McNemarResult, EXACT_LIMIT};
pub use overlap::{conditional_error_overlap, OverlapResult};

use crate::data::LabelId;

/// Fraction of examples where `pred` equals `gold`; INVALID never matches.
pub fn accuracy(gold: &[LabelId], pred: &[LabelId]) -> f64 {
    if gold.is_empty() {
        return f64::NAN;
    }
    let hits = gold
        .iter()
        .zip(pred)
        .filter(|(g, p)| !p.is_invalid() && g == p)
        .count();
    hits as f64 / gold.len() as f64
}
