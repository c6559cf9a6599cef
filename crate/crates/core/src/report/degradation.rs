// SPDX-License-Identifier: Apache-2.0

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A noise condition: the clean recording or babble at a given SNR.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum NoiseLevel {
    Clean,
    Snr(f64),
}

impl NoiseLevel {
    /// Recognises `clean` and `snr<N>` (also `snr_<N>`, `snr<N>db`); other
    /// condition names are not noise conditions.
    pub fn parse(condition: &str) -> Option<Self> {
        let c = condition.trim().to_ascii_lowercase();
        if c == "clean" {
            return Some(NoiseLevel::Clean);
        }
        let rest = c.strip_prefix("snr")?;
        let rest = rest.strip_prefix('_').unwrap_or(rest);
        let rest = rest.strip_suffix("db").unwrap_or(rest);
        rest.parse::<f64>().ok().filter(|v| v.is_finite()).map(NoiseLevel::Snr)
    }

    fn rank(self) -> f64 {
        match self {
            NoiseLevel::Clean => f64::INFINITY,
            NoiseLevel::Snr(v) => v,
        }
    }
}

/// Accuracy of one system across the noise conditions, cleanest first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegradationSeries {
    pub system: String,
    pub accuracy: Vec<f64>,
}

/// Advantage of `a` over `b` in percentage points at the clean and at the
/// noisiest condition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reversal {
    pub a: String,
    pub b: String,
    pub clean_advantage: f64,
    pub noisy_advantage: f64,
    pub noisy_condition: String,
    /// `clean_advantage − noisy_advantage`.
    pub reversal: f64,
    pub sign_flip: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegradationTable {
    pub task: String,
    pub conditions: Vec<String>,
    pub series: Vec<DegradationSeries>,
    pub reversals: Vec<Reversal>,
}

/// Builds accuracy-vs-SNR series and pairwise reversal annotations.
/// `accuracy[system][condition]` holds fractions in `[0, 1]`; only noise
/// conditions are used, and every system must have all of them.
pub fn degradation_curve(
    task: &str,
    systems: &[String],
    accuracy: &BTreeMap<String, BTreeMap<String, f64>>,
) -> Result<DegradationTable> {
    let mut conditions: Vec<(String, NoiseLevel)> = accuracy
        .values()
        .flat_map(|m| m.keys())
        .filter_map(|c| NoiseLevel::parse(c).map(|l| (c.clone(), l)))
        .collect::<BTreeMap<_, _>>()
        .into_iter()
        .collect();
    conditions.sort_by(|a, b| b.1.rank().partial_cmp(&a.1.rank()).unwrap_or(Ordering::Equal));
    if !conditions.iter().any(|c| c.1 == NoiseLevel::Clean) {
        return Err(Error::input(format!("task {task}: degradation needs a clean condition")));
    }
    if conditions.len() < 2 {
        return Err(Error::input(format!("task {task}: degradation needs at least one noisy condition")));
    }
    let mut series = Vec::new();
    for s in systems {
        let Some(per) = accuracy.get(s) else { continue };
        let mut acc = Vec::new();
        for (c, _) in &conditions {
            acc.push(*per.get(c).ok_or_else(|| {
                Error::input(format!("missing condition: system {s}, task {task}, condition {c}"))
            })?);
        }
        series.push(DegradationSeries {
            system: s.clone(),
            accuracy: acc,
        });
    }
    let last = conditions.len() - 1;
    let mut reversals = Vec::new();
    for i in 0..series.len() {
        for j in i + 1..series.len() {
            let (mut a, mut b) = (&series[i], &series[j]);
            // The system ahead on clean audio is listed first.
            if a.accuracy[0] < b.accuracy[0] {
                std::mem::swap(&mut a, &mut b);
            }
            let clean = 100.0 * (a.accuracy[0] - b.accuracy[0]);
            let noisy = 100.0 * (a.accuracy[last] - b.accuracy[last]);
            reversals.push(Reversal {
                a: a.system.clone(),
                b: b.system.clone(),
                clean_advantage: clean,
                noisy_advantage: noisy,
                noisy_condition: conditions[last].0.clone(),
                reversal: clean - noisy,
                sign_flip: clean * noisy < 0.0,
            });
        }
    }
    Ok(DegradationTable {
        task: task.into(),
        conditions: conditions.into_iter().map(|c| c.0).collect(),
        series,
        reversals,
    })
}
