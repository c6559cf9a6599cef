// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::degradation::{degradation_curve, DegradationTable, NoiseLevel};
use crate::data::{align_logs, load_prediction_log, LabelSpace, Manifest, PredictionLog};
use crate::probes::{CurveShape, LayerCurve};
use crate::stats::{
    accuracy, bh_fdr, bootstrap_ci, cohen_kappa, conditional_error_overlap, mcnemar, KappaResult, McNemarResult,
    Metric, OverlapResult,
};
use crate::{Error, Result, VERSION};

/// Erasure conditions in display order, with their concept widths.
pub const LEACE_CONDITIONS: [(&str, &str, Option<usize>); 6] = [
    ("leace_baseline", "Baseline", None),
    ("leace_text", "Text", Some(159)),
    ("leace_ctc", "CTC", Some(49)),
    ("leace_boc", "BoC", Some(48)),
    ("leace_acoustic", "Acoustic", Some(2)),
    ("leace_random", "Random", Some(159)),
];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub seed: u64,
    pub resamples: usize,
    pub alpha: f64,
    pub level: f64,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            seed: 0,
            resamples: 1000,
            alpha: 0.05,
            level: 0.95,
        }
    }
}

/// One system-pair comparison on one task and condition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub a: String,
    pub b: String,
    pub matched: bool,
    pub task: String,
    pub condition: String,
    pub n: usize,
    pub kappa: KappaResult,
    pub overlap: Option<OverlapResult>,
    pub mcnemar: McNemarResult,
    /// BH-adjusted p-value; `None` outside the correction family.
    pub p_adjusted: Option<f64>,
    pub rejected: Option<bool>,
    pub log_a: PathBuf,
    pub log_b: PathBuf,
    pub dropped_a: usize,
    pub dropped_b: usize,
}

impl Comparison {
    pub fn pair_label(&self) -> String {
        format!("{} vs {}", self.a, self.b)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyCell {
    pub system: String,
    pub task: String,
    pub condition: String,
    pub n: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub invalid: usize,
    pub malformed: usize,
    pub log: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeaceRow {
    pub system: String,
    pub task: String,
    pub condition: String,
    pub label: String,
    pub concept_dim: Option<usize>,
    pub accuracy: f64,
    pub delta_vs_baseline: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImplicitRow {
    pub task: String,
    pub condition: String,
    pub n_implicit: usize,
    pub kappa_implicit: KappaResult,
    pub n_cascade: usize,
    pub kappa_cascade: KappaResult,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveEntry {
    pub curve: LayerCurve,
    pub shape: CurveShape,
    pub source: PathBuf,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub seed: u64,
    pub resamples: usize,
    pub alpha: f64,
    pub version: String,
    pub comparisons: Vec<Comparison>,
    pub accuracy: Vec<AccuracyCell>,
    pub degradation: Vec<DegradationTable>,
    pub leace: Vec<LeaceRow>,
    pub implicit: Vec<ImplicitRow>,
    pub curves: Vec<CurveEntry>,
    pub footnotes: Vec<String>,
}

impl ReportBundle {
    pub fn empty(settings: &RunSettings) -> Self {
        Self {
            seed: settings.seed,
            resamples: settings.resamples,
            alpha: settings.alpha,
            version: VERSION.into(),
            footnotes: default_footnotes(),
            ..Default::default()
        }
    }

    /// Pair labels ordered by decreasing mean κ over tasks (ties by label).
    pub fn pair_order(&self, condition: &str) -> Vec<String> {
        let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
        for c in self.comparisons.iter().filter(|c| c.condition == condition) {
            let e = sums.entry(c.pair_label()).or_default();
            if c.kappa.kappa.is_finite() {
                e.0 += c.kappa.kappa;
                e.1 += 1;
            }
        }
        let mut rows: Vec<(String, f64)> = sums
            .into_iter()
            .map(|(k, (s, n))| (k, if n == 0 { f64::NEG_INFINITY } else { s / n as f64 }))
            .collect();
        rows.sort_by(|x, y| y.1.total_cmp(&x.1).then_with(|| x.0.cmp(&y.0)));
        rows.into_iter().map(|r| r.0).collect()
    }
}

fn default_footnotes() -> Vec<String> {
    vec![
        "Accuracy is exact match of the normalised prediction (trimmed, case-folded) against gold; INVALID predictions count as wrong.".into(),
        "Kappa intervals are percentile bootstrap intervals over examples with the stated seed and resample count.".into(),
        "Error overlap is P(same wrong answer | both wrong), reported for tasks with at least 3 labels; chance is 1/(|C|-1).".into(),
        "McNemar p-values are exact binomial for at most 25 discordant pairs, continuity-corrected chi-square otherwise; Benjamini-Hochberg is applied once across the pair x task family.".into(),
        "The Text erasure condition uses the 159-dimensional first-word concept.".into(),
        "Lens bag precision counts each distinct decoded token once.".into(),
    ]
}

struct LoadedLog {
    log: PredictionLog,
    path: PathBuf,
}

fn wrap(system: &str, task: &str, condition: &str, e: Error) -> Error {
    Error::input(format!("({system}, {task}, {condition}): {e}"))
}

/// Runs every analysis the manifest describes. Deterministic given the
/// settings.
pub fn run_manifest(m: &Manifest, settings: &RunSettings) -> Result<ReportBundle> {
    let mut bundle = ReportBundle::empty(settings);
    if m.fdr_conditions.iter().any(|c| c != "clean") || m.fdr_conditions.len() != 1 {
        bundle
            .footnotes
            .push(format!("FDR family conditions: {}.", m.fdr_conditions.join(", ")));
    }
    let spaces: BTreeMap<String, LabelSpace> =
        m.tasks.iter().map(|t| Ok((t.clone(), m.label_space(t)?))).collect::<Result<_>>()?;

    let loaded: BTreeMap<(String, String, String), LoadedLog> = m
        .paths
        .par_iter()
        .map(|p| {
            let log = load_prediction_log(m.resolve(&p.path), &spaces[&p.task])
                .map_err(|e| wrap(&p.system, &p.task, &p.condition, e))?;
            Ok((
                (p.system.clone(), p.task.clone(), p.condition.clone()),
                LoadedLog {
                    log,
                    path: p.path.clone(),
                },
            ))
        })
        .collect::<Result<_>>()?;

    for ((system, task, condition), l) in &loaded {
        let gold: Vec<_> = l.log.records.iter().map(|r| r.gold).collect();
        let pred: Vec<_> = l.log.records.iter().map(|r| r.pred).collect();
        if gold.is_empty() {
            return Err(wrap(system, task, condition, Error::input("log has no valid records")));
        }
        let correct = gold.iter().zip(&pred).filter(|(g, p)| !p.is_invalid() && g == p).count();
        bundle.accuracy.push(AccuracyCell {
            system: system.clone(),
            task: task.clone(),
            condition: condition.clone(),
            n: gold.len(),
            correct,
            accuracy: accuracy(&gold, &pred),
            invalid: l.log.invalid_count,
            malformed: l.log.malformed.len(),
            log: l.path.clone(),
        });
    }
    let order = |s: &str| m.systems.iter().position(|x| x == s).unwrap_or(usize::MAX);
    let task_order = |t: &str| m.tasks.iter().position(|x| x == t).unwrap_or(usize::MAX);
    let cond_order = |c: &str| m.conditions.iter().position(|x| x == c).unwrap_or(usize::MAX);
    bundle.accuracy.sort_by_key(|c| (task_order(&c.task), cond_order(&c.condition), order(&c.system)));

    let mut jobs = Vec::new();
    for cond in &m.conditions {
        for task in &m.tasks {
            for p in &m.pairs {
                let ka = (p.a.clone(), task.clone(), cond.clone());
                let kb = (p.b.clone(), task.clone(), cond.clone());
                if loaded.contains_key(&ka) && loaded.contains_key(&kb) {
                    jobs.push((p.clone(), task.clone(), cond.clone()));
                }
            }
        }
    }
    bundle.comparisons = jobs
        .par_iter()
        .map(|(p, task, cond)| {
            let la = &loaded[&(p.a.clone(), task.clone(), cond.clone())];
            let lb = &loaded[&(p.b.clone(), task.clone(), cond.clone())];
            let space = &spaces[task];
            let ctx = |e| wrap(&format!("{} vs {}", p.a, p.b), task, cond, e);
            let al = align_logs(&la.log.records, &lb.log.records, space).map_err(ctx)?;
            let kappa = kappa_with_ci(&al.pairs, settings).map_err(ctx)?;
            let overlap = (space.len() >= 3)
                .then(|| conditional_error_overlap(&al.pairs))
                .transpose()
                .map_err(ctx)?;
            Ok(Comparison {
                a: p.a.clone(),
                b: p.b.clone(),
                matched: p.matched,
                task: task.clone(),
                condition: cond.clone(),
                n: al.pairs.n(),
                kappa,
                overlap,
                mcnemar: mcnemar(&al.pairs).map_err(ctx)?,
                p_adjusted: None,
                rejected: None,
                log_a: la.path.clone(),
                log_b: lb.path.clone(),
                dropped_a: al.dropped_a,
                dropped_b: al.dropped_b,
            })
        })
        .collect::<Result<_>>()?;

    let family: Vec<usize> = (0..bundle.comparisons.len())
        .filter(|&i| m.fdr_conditions.contains(&bundle.comparisons[i].condition))
        .collect();
    if !family.is_empty() {
        let p: Vec<f64> = family.iter().map(|&i| bundle.comparisons[i].mcnemar.p_value).collect();
        let fdr = bh_fdr(&p, settings.alpha)?;
        for (j, &i) in family.iter().enumerate() {
            bundle.comparisons[i].p_adjusted = Some(fdr.adjusted[j]);
            bundle.comparisons[i].rejected = Some(fdr.rejected[j]);
        }
    }

    let acc_of = |s: &str, t: &str, c: &str| {
        bundle
            .accuracy
            .iter()
            .find(|a| a.system == s && a.task == t && a.condition == c)
            .map(|a| a.accuracy)
    };

    let noisy: Vec<&String> = m.conditions.iter().filter(|c| NoiseLevel::parse(c).is_some()).collect();
    if noisy.len() >= 2 {
        for task in &m.tasks {
            let mut table: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
            for s in &m.systems {
                for c in &noisy {
                    if let Some(a) = acc_of(s, task, c) {
                        table.entry(s.clone()).or_default().insert((*c).clone(), a);
                    }
                }
            }
            if table.values().any(|v| v.len() >= 2) {
                bundle.degradation.push(degradation_curve(task, &m.systems, &table)?);
            }
        }
    }

    for s in &m.systems {
        for task in &m.tasks {
            let baseline_cond = if m.conditions.iter().any(|c| c == "leace_baseline") {
                "leace_baseline"
            } else {
                "clean"
            };
            let has_erasure = LEACE_CONDITIONS[1..].iter().any(|(c, ..)| acc_of(s, task, c).is_some());
            if !has_erasure {
                continue;
            }
            let base = acc_of(s, task, baseline_cond);
            for (cond, label, dim) in LEACE_CONDITIONS {
                let c = if cond == "leace_baseline" { baseline_cond } else { cond };
                if let Some(a) = acc_of(s, task, c) {
                    bundle.leace.push(LeaceRow {
                        system: s.clone(),
                        task: task.clone(),
                        condition: c.into(),
                        label: label.into(),
                        concept_dim: dim,
                        accuracy: a,
                        delta_vs_baseline: base.map(|b| a - b),
                    });
                }
            }
        }
    }

    if let Some(imp) = &m.implicit {
        for task in &m.tasks {
            let key = |s: &str| (s.to_string(), task.clone(), imp.condition.clone());
            let (Some(sp), Some(im), Some(ca)) =
                (loaded.get(&key(&imp.speech_llm)), loaded.get(&key(&imp.implicit)), loaded.get(&key(&imp.cascade)))
            else {
                continue;
            };
            let space = &spaces[task];
            let ctx = |e| wrap(&imp.speech_llm, task, &imp.condition, e);
            let ai = align_logs(&sp.log.records, &im.log.records, space).map_err(ctx)?;
            let ac = align_logs(&sp.log.records, &ca.log.records, space).map_err(ctx)?;
            bundle.implicit.push(ImplicitRow {
                task: task.clone(),
                condition: imp.condition.clone(),
                n_implicit: ai.pairs.n(),
                kappa_implicit: kappa_with_ci(&ai.pairs, settings).map_err(ctx)?,
                n_cascade: ac.pairs.n(),
                kappa_cascade: kappa_with_ci(&ac.pairs, settings).map_err(ctx)?,
            });
        }
    }

    for c in &m.curves {
        for curve in load_curves(&m.resolve(&c.path))? {
            bundle.curves.push(CurveEntry {
                shape: curve.shape(0.0),
                curve,
                source: c.path.clone(),
            });
        }
    }
    Ok(bundle)
}

/// κ with a percentile bootstrap interval; the interval is left empty when
/// too many resamples are degenerate.
pub fn kappa_with_ci(pp: &crate::data::PairedPredictions, s: &RunSettings) -> Result<KappaResult> {
    let mut k = cohen_kappa(pp)?;
    if pp.n() >= 2 && s.resamples > 0 {
        match bootstrap_ci(pp, Metric::Kappa, s.resamples, s.seed, s.level) {
            Ok((lo, hi)) => {
                k.ci_low = Some(lo);
                k.ci_high = Some(hi);
            }
            Err(Error::Undefined(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(k)
}

/// A curve file holds one curve object or an array of them.
pub fn load_curves(path: &std::path::Path) -> Result<Vec<LayerCurve>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let v: serde_json::Value = serde_json::from_slice(&bytes)?;
    let curves = if v.is_array() {
        serde_json::from_value(v)?
    } else {
        vec![serde_json::from_value(v)?]
    };
    Ok(curves)
}
