// SPDX-License-Identifier: Apache-2.0

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::concept::ConceptMatrix;
use super::leace::Eraser;
use crate::linalg::cross_covariance;
use crate::probes::{r2_scores, Lambda, RidgeModel, SplitSpec};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GuardMetric {
    R2,
    Accuracy,
}

/// What a fresh linear probe can still recover after erasure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GuardednessReport {
    pub metric: GuardMetric,
    pub rows: usize,
    pub pre: Option<f64>,
    pub post: Option<f64>,
    /// Share of the most frequent class (one-hot concepts only).
    pub majority_baseline: Option<f64>,
    pub cov_norm_before: f64,
    pub cov_norm_after: f64,
    /// Mean `‖x − r(x)‖²` per row.
    pub mean_squared_change: f64,
}

fn argmax(row: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in row.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

fn select(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)])
}

/// Splits the held-out rows 80/20 (seeded), fits ridge probes `Z ~ X` and
/// `Z ~ r(X)` on the first part and scores them on the second. One-hot
/// concepts are scored by argmax accuracy, others by mean R².
pub fn verify_guardedness(e: &Eraser, x: &DMatrix<f64>, z: &ConceptMatrix, seed: u64) -> Result<GuardednessReport> {
    let n = x.nrows();
    if n < 2 || z.rows() != n {
        return Err(Error::input(format!("need at least 2 paired rows, got {n} and {}", z.rows())));
    }
    let erased = e.apply(x)?;
    let zm = z.matrix();
    let (train, test) = SplitSpec::new(0.8, seed).split(n)?;
    let one_hot = z.kind().is_one_hot();
    let (z_tr, z_te) = (select(zm, &train), select(zm, &test));
    let score = |feats: &DMatrix<f64>| -> Result<Option<f64>> {
        let model = RidgeModel::fit(&select(feats, &train), &z_tr, Lambda::Auto)?;
        let pred = model.predict(&select(feats, &test));
        Ok(if one_hot {
            let hits = (0..test.len())
                .filter(|&i| argmax(pred.row(i).iter().copied()) == argmax(z_te.row(i).iter().copied()))
                .count();
            Some(hits as f64 / test.len() as f64)
        } else {
            r2_scores(&z_te, &pred).mean
        })
    };
    let majority_baseline = one_hot.then(|| {
        let mut counts = vec![0usize; zm.ncols()];
        for i in 0..test.len() {
            counts[argmax(z_te.row(i).iter().copied())] += 1;
        }
        *counts.iter().max().unwrap_or(&0) as f64 / test.len() as f64
    });
    Ok(GuardednessReport {
        metric: if one_hot { GuardMetric::Accuracy } else { GuardMetric::R2 },
        rows: n,
        pre: score(x)?,
        post: score(&erased)?,
        majority_baseline,
        cov_norm_before: cross_covariance(x, zm)?.norm(),
        cov_norm_after: cross_covariance(&erased, zm)?.norm(),
        mean_squared_change: (x - &erased).norm_squared() / n as f64,
    })
}
