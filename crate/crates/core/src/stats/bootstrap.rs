// SPDX-License-Identifier: Apache-2.0

//! Percentile bootstrap over example indices.
//!
//! Resample `r` draws its indices from a ChaCha8 generator seeded with `seed`
//! and switched to stream `r`, so every resample is a pure function of
//! `(seed, r)` and the interval does not depend on how work is scheduled.

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{accuracy, conditional_error_overlap, kappa_from_labels};
use crate::data::PairedPredictions;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    Kappa,
    /// Raw fraction of identical predictions.
    Agreement,
    AccuracyA,
    AccuracyB,
    /// `accuracy_a - accuracy_b`.
    AccuracyDiff,
    Overlap,
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "kappa" => Metric::Kappa,
            "agreement" => Metric::Agreement,
            "accuracy-a" => Metric::AccuracyA,
            "accuracy-b" => Metric::AccuracyB,
            "accuracy-diff" => Metric::AccuracyDiff,
            "overlap" => Metric::Overlap,
            other => return Err(Error::input(format!("unknown metric {other:?}"))),
        })
    }
}

impl Metric {
    /// `Ok(None)` when the metric is undefined on this sample.
    pub fn evaluate(self, pp: &PairedPredictions) -> Result<Option<f64>> {
        Ok(Some(match self {
            Metric::Kappa => kappa_from_labels(pp.pred_a(), pp.pred_b())?.kappa,
            Metric::Agreement => {
                let same = pp.pred_a().iter().zip(pp.pred_b()).filter(|(a, b)| a == b).count();
                same as f64 / pp.n() as f64
            }
            Metric::AccuracyA => accuracy(pp.gold(), pp.pred_a()),
            Metric::AccuracyB => accuracy(pp.gold(), pp.pred_b()),
            Metric::AccuracyDiff => accuracy(pp.gold(), pp.pred_a()) - accuracy(pp.gold(), pp.pred_b()),
            Metric::Overlap => return Ok(conditional_error_overlap(pp)?.overlap),
        }))
    }
}

fn stream_rng(seed: u64, r: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(r);
    rng
}

fn draw(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    (0..n).map(|_| rng.gen_range(0..n)).collect()
}

/// First draw of resample `r`.
pub fn resample_indices(n: usize, seed: u64, r: u64) -> Vec<usize> {
    draw(&mut stream_rng(seed, r), n)
}

/// Linear-interpolation quantile of sorted data.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = h - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

/// Statistic of resample `r` plus the number of draws it took.
fn one_resample(
    pp: &PairedPredictions,
    metric: Metric,
    seed: u64,
    r: u64,
    cap: usize,
) -> Result<(Option<f64>, usize)> {
    let mut rng = stream_rng(seed, r);
    for attempt in 1..=cap {
        let idx = draw(&mut rng, pp.n());
        if let Some(v) = metric.evaluate(&pp.select(&idx))? {
            return Ok((Some(v), attempt));
        }
    }
    Ok((None, cap))
}

pub fn bootstrap_ci(
    pp: &PairedPredictions,
    metric: Metric,
    n_resamples: usize,
    seed: u64,
    level: f64,
) -> Result<(f64, f64)> {
    run(pp, metric, n_resamples, seed, level)
}

/// Same as [`bootstrap_ci`] on a dedicated pool of `threads` workers.
pub fn bootstrap_ci_with_threads(
    pp: &PairedPredictions,
    metric: Metric,
    n_resamples: usize,
    seed: u64,
    level: f64,
    threads: usize,
) -> Result<(f64, f64)> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Numerical(format!("thread pool: {e}")))?;
    pool.install(|| run(pp, metric, n_resamples, seed, level))
}

fn run(
    pp: &PairedPredictions,
    metric: Metric,
    n_resamples: usize,
    seed: u64,
    level: f64,
) -> Result<(f64, f64)> {
    if pp.n() < 2 {
        return Err(Error::input("bootstrap needs at least 2 examples"));
    }
    if n_resamples == 0 {
        return Err(Error::input("bootstrap needs at least one resample"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::input(format!("confidence level must lie in (0,1), got {level}")));
    }
    let cap = 10 * n_resamples;
    let results: Vec<(Option<f64>, usize)> = (0..n_resamples as u64)
        .into_par_iter()
        .map(|r| one_resample(pp, metric, seed, r, cap))
        .collect::<Result<_>>()?;
    let attempts: usize = results.iter().map(|r| r.1).sum();
    if attempts > cap || results.iter().any(|r| r.0.is_none()) {
        return Err(Error::Undefined(format!(
            "{metric:?} undefined on too many resamples ({attempts} draws for {n_resamples} resamples)"
        )));
    }
    let mut stats: Vec<f64> = results.into_iter().map(|r| r.0.unwrap()).collect();
    stats.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Ok((percentile(&stats, tail), percentile(&stats, 1.0 - tail)))
}
