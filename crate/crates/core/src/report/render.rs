// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::bundle::{Comparison, ReportBundle, LEACE_CONDITIONS};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
    Markdown,
}

impl FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            "markdown" | "md" => Ok(Format::Markdown),
            _ => Err(Error::input(format!("unknown format {s:?}; expected csv, json or markdown"))),
        }
    }
}

fn num(v: f64, places: usize) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:.places$}")
    }
}

fn opt(v: Option<f64>, places: usize) -> String {
    v.map(|v| num(v, places)).unwrap_or_default()
}

fn pct(v: f64, places: usize) -> String {
    num(100.0 * v, places)
}

fn footer(b: &ReportBundle) -> String {
    format!("seed={} resamples={} alpha={} version={}", b.seed, b.resamples, b.alpha, b.version)
}

/// Comparisons grouped by condition (first appearance), pairs by decreasing
/// mean κ, then tasks (first appearance).
pub fn ordered_comparisons(b: &ReportBundle) -> Vec<&Comparison> {
    let mut conditions: Vec<&str> = Vec::new();
    let mut tasks: Vec<&str> = Vec::new();
    for c in &b.comparisons {
        if !conditions.contains(&c.condition.as_str()) {
            conditions.push(&c.condition);
        }
        if !tasks.contains(&c.task.as_str()) {
            tasks.push(&c.task);
        }
    }
    let mut out = Vec::new();
    for cond in conditions {
        for pair in b.pair_order(cond) {
            for t in &tasks {
                out.extend(
                    b.comparisons
                        .iter()
                        .filter(|c| c.condition == cond && c.task == *t && c.pair_label() == pair),
                );
            }
        }
    }
    out
}

fn csv_table(header: &[&str], rows: Vec<Vec<String>>, foot: &str) -> Result<String> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header).map_err(|e| Error::input(e.to_string()))?;
    for r in rows {
        w.write_record(&r).map_err(|e| Error::input(e.to_string()))?;
    }
    let mut s = String::from_utf8(w.into_inner().map_err(|e| Error::input(e.to_string()))?)
        .expect("csv output is UTF-8");
    let _ = writeln!(s, "# {foot}");
    Ok(s)
}

fn path_str(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

fn render_csv(b: &ReportBundle) -> Result<Vec<(String, String)>> {
    let foot = footer(b);
    let cmp = ordered_comparisons(b);
    let mut files = Vec::new();
    files.push((
        "kappa.csv".to_string(),
        csv_table(
            &["pair", "a", "b", "matched", "task", "condition", "n", "kappa", "ci_low", "ci_high", "p_observed", "p_expected", "degenerate", "log_a", "log_b"],
            cmp.iter()
                .map(|c| {
                    vec![
                        c.pair_label(),
                        c.a.clone(),
                        c.b.clone(),
                        c.matched.to_string(),
                        c.task.clone(),
                        c.condition.clone(),
                        c.n.to_string(),
                        num(c.kappa.kappa, 4),
                        opt(c.kappa.ci_low, 4),
                        opt(c.kappa.ci_high, 4),
                        num(c.kappa.p_observed, 4),
                        num(c.kappa.p_expected, 4),
                        c.kappa.degenerate.to_string(),
                        path_str(&c.log_a),
                        path_str(&c.log_b),
                    ]
                })
                .collect(),
            &foot,
        )?,
    ));
    files.push((
        "overlap.csv".to_string(),
        csv_table(
            &["pair", "task", "condition", "n", "both_wrong", "same_wrong", "overlap", "chance"],
            cmp.iter()
                .filter_map(|c| c.overlap.as_ref().map(|o| (c, o)))
                .map(|(c, o)| {
                    vec![
                        c.pair_label(),
                        c.task.clone(),
                        c.condition.clone(),
                        c.n.to_string(),
                        o.both_wrong.to_string(),
                        o.same_wrong.to_string(),
                        opt(o.overlap, 4),
                        num(o.chance, 4),
                    ]
                })
                .collect(),
            &foot,
        )?,
    ));
    files.push((
        "mcnemar.csv".to_string(),
        csv_table(
            &["pair", "task", "condition", "n", "b", "c", "method", "statistic", "p_value", "p_adjusted", "rejected"],
            cmp.iter()
                .map(|c| {
                    vec![
                        c.pair_label(),
                        c.task.clone(),
                        c.condition.clone(),
                        c.n.to_string(),
                        c.mcnemar.b.to_string(),
                        c.mcnemar.c.to_string(),
                        format!("{:?}", c.mcnemar.method).to_lowercase(),
                        opt(c.mcnemar.statistic, 4),
                        format!("{:.6e}", c.mcnemar.p_value),
                        c.p_adjusted.map(|p| format!("{p:.6e}")).unwrap_or_default(),
                        c.rejected.map(|r| r.to_string()).unwrap_or_default(),
                    ]
                })
                .collect(),
            &foot,
        )?,
    ));
    files.push((
        "accuracy.csv".to_string(),
        csv_table(
            &["system", "task", "condition", "n", "correct", "accuracy", "invalid", "malformed", "log"],
            b.accuracy
                .iter()
                .map(|a| {
                    vec![
                        a.system.clone(),
                        a.task.clone(),
                        a.condition.clone(),
                        a.n.to_string(),
                        a.correct.to_string(),
                        num(a.accuracy, 4),
                        a.invalid.to_string(),
                        a.malformed.to_string(),
                        path_str(&a.log),
                    ]
                })
                .collect(),
            &foot,
        )?,
    ));
    let mut deg = Vec::new();
    let mut rev = Vec::new();
    for t in &b.degradation {
        for s in &t.series {
            for (c, a) in t.conditions.iter().zip(&s.accuracy) {
                deg.push(vec![t.task.clone(), s.system.clone(), c.clone(), num(*a, 4)]);
            }
        }
        for r in &t.reversals {
            rev.push(vec![
                t.task.clone(),
                r.a.clone(),
                r.b.clone(),
                num(r.clean_advantage, 2),
                r.noisy_condition.clone(),
                num(r.noisy_advantage, 2),
                num(r.reversal, 2),
                r.sign_flip.to_string(),
            ]);
        }
    }
    files.push(("degradation.csv".into(), csv_table(&["task", "system", "condition", "accuracy"], deg, &foot)?));
    files.push((
        "reversals.csv".into(),
        csv_table(
            &["task", "a", "b", "clean_advantage_pts", "noisy_condition", "noisy_advantage_pts", "reversal_pts", "sign_flip"],
            rev,
            &foot,
        )?,
    ));
    files.push((
        "leace.csv".into(),
        csv_table(
            &["system", "task", "condition", "label", "concept_dim", "accuracy", "delta_vs_baseline"],
            b.leace
                .iter()
                .map(|r| {
                    vec![
                        r.system.clone(),
                        r.task.clone(),
                        r.condition.clone(),
                        r.label.clone(),
                        r.concept_dim.map(|d| d.to_string()).unwrap_or_default(),
                        num(r.accuracy, 4),
                        opt(r.delta_vs_baseline, 4),
                    ]
                })
                .collect(),
            &foot,
        )?,
    ));
    files.push((
        "implicit.csv".into(),
        csv_table(
            &["task", "condition", "n_implicit", "kappa_implicit", "ci_low_implicit", "ci_high_implicit", "n_cascade", "kappa_cascade", "ci_low_cascade", "ci_high_cascade"],
            b.implicit
                .iter()
                .map(|r| {
                    vec![
                        r.task.clone(),
                        r.condition.clone(),
                        r.n_implicit.to_string(),
                        num(r.kappa_implicit.kappa, 3),
                        opt(r.kappa_implicit.ci_low, 3),
                        opt(r.kappa_implicit.ci_high, 3),
                        r.n_cascade.to_string(),
                        num(r.kappa_cascade.kappa, 3),
                        opt(r.kappa_cascade.ci_low, 3),
                        opt(r.kappa_cascade.ci_high, 3),
                    ]
                })
                .collect(),
            &foot,
        )?,
    ));
    let mut curves = Vec::new();
    for e in &b.curves {
        for (l, v) in e.curve.layers.iter().zip(&e.curve.values) {
            curves.push(vec![
                e.curve.name.clone(),
                e.curve.metric.clone(),
                l.to_string(),
                opt(*v, 4),
                serde_json::to_value(e.shape).expect("serialisable").as_str().unwrap_or_default().to_string(),
                path_str(&e.source),
            ]);
        }
    }
    files.push(("curves.csv".into(), csv_table(&["curve", "metric", "layer", "value", "shape", "source"], curves, &foot)?));
    Ok(files)
}

fn md_table(out: &mut String, header: &[String], rows: &[Vec<String>], foot: &str) {
    let _ = writeln!(out, "| {} |", header.join(" | "));
    let _ = writeln!(out, "|{}|", header.iter().map(|_| "---").collect::<Vec<_>>().join("|"));
    for r in rows {
        let _ = writeln!(out, "| {} |", r.join(" | "));
    }
    let _ = writeln!(out, "\n_{foot}_\n");
}

fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn render_markdown(b: &ReportBundle) -> String {
    let foot = footer(b);
    let mut out = String::from("# Cascade-equivalence report\n\n");
    let cmp = ordered_comparisons(b);

    let mut conditions: Vec<&str> = Vec::new();
    let mut tasks: Vec<&str> = Vec::new();
    for c in &cmp {
        if !conditions.contains(&c.condition.as_str()) {
            conditions.push(&c.condition);
        }
        if !tasks.contains(&c.task.as_str()) {
            tasks.push(&c.task);
        }
    }
    out.push_str("## Agreement (Cohen's kappa)\n\n");
    if conditions.is_empty() {
        let mut h = strings(&["Pair"]);
        h.push("Mean".into());
        md_table(&mut out, &h, &[], &foot);
    }
    for cond in &conditions {
        let _ = writeln!(out, "Condition: {cond}. Rows ordered by decreasing mean kappa.\n");
        let mut h = strings(&["Pair"]);
        h.extend(tasks.iter().map(|t| t.to_string()));
        h.push("Mean".into());
        let mut rows = Vec::new();
        for pair in b.pair_order(cond) {
            let mut row = vec![pair.clone()];
            let mut ks = Vec::new();
            for t in &tasks {
                let cell = cmp.iter().find(|c| c.condition == *cond && c.task == *t && c.pair_label() == pair);
                row.push(match cell {
                    Some(c) => {
                        ks.push(c.kappa.kappa);
                        match (c.kappa.ci_low, c.kappa.ci_high) {
                            (Some(lo), Some(hi)) => format!("{} [{}, {}]", num(c.kappa.kappa, 3), num(lo, 3), num(hi, 3)),
                            _ => num(c.kappa.kappa, 3),
                        }
                    }
                    None => "-".into(),
                });
            }
            let mean = ks.iter().sum::<f64>() / ks.len().max(1) as f64;
            row.push(num(mean, 3));
            rows.push(row);
        }
        md_table(&mut out, &h, &rows, &foot);
    }

    out.push_str("## Conditional error overlap\n\n");
    let rows: Vec<Vec<String>> = cmp
        .iter()
        .filter_map(|c| c.overlap.as_ref().map(|o| (c, o)))
        .map(|(c, o)| {
            vec![
                c.pair_label(),
                c.task.clone(),
                c.condition.clone(),
                o.both_wrong.to_string(),
                opt(o.overlap, 3),
                num(o.chance, 3),
            ]
        })
        .collect();
    md_table(&mut out, &strings(&["Pair", "Task", "Condition", "Both wrong", "Overlap", "Chance"]), &rows, &foot);

    out.push_str("## McNemar tests\n\n");
    let rows: Vec<Vec<String>> = cmp
        .iter()
        .map(|c| {
            vec![
                c.pair_label(),
                c.task.clone(),
                c.condition.clone(),
                c.mcnemar.b.to_string(),
                c.mcnemar.c.to_string(),
                format!("{:.3e}", c.mcnemar.p_value),
                c.p_adjusted.map(|p| format!("{p:.3e}")).unwrap_or_else(|| "-".into()),
                c.rejected.map(|r| if r { "yes" } else { "no" }.to_string()).unwrap_or_else(|| "-".into()),
            ]
        })
        .collect();
    md_table(&mut out, &strings(&["Pair", "Task", "Condition", "b", "c", "p", "p (BH)", "Reject"]), &rows, &foot);

    out.push_str("## Accuracy\n\n");
    let rows: Vec<Vec<String>> = b
        .accuracy
        .iter()
        .map(|a| vec![a.system.clone(), a.task.clone(), a.condition.clone(), a.n.to_string(), pct(a.accuracy, 2)])
        .collect();
    md_table(&mut out, &strings(&["System", "Task", "Condition", "n", "Accuracy (%)"]), &rows, &foot);

    out.push_str("## Noise degradation\n\n");
    if b.degradation.is_empty() {
        md_table(&mut out, &strings(&["System"]), &[], &foot);
    }
    for t in &b.degradation {
        let _ = writeln!(out, "Task: {}.\n", t.task);
        let mut h = strings(&["System"]);
        h.extend(t.conditions.iter().cloned());
        let rows: Vec<Vec<String>> = t
            .series
            .iter()
            .map(|s| {
                let mut r = vec![s.system.clone()];
                r.extend(s.accuracy.iter().map(|a| pct(*a, 2)));
                r
            })
            .collect();
        md_table(&mut out, &h, &rows, &foot);
        for r in &t.reversals {
            let _ = writeln!(
                out,
                "- {} vs {}: {:+.2} points at {}, {:+.2} points at {}; reversal {:.2} points{}",
                r.a,
                r.b,
                r.clean_advantage,
                t.conditions[0],
                r.noisy_advantage,
                r.noisy_condition,
                r.reversal,
                if r.sign_flip { " (sign flip)" } else { "" }
            );
        }
        out.push('\n');
    }

    out.push_str("## Concept erasure\n\n");
    let mut by_system: BTreeMap<&str, Vec<&super::bundle::LeaceRow>> = BTreeMap::new();
    let mut leace_tasks: Vec<&str> = Vec::new();
    let mut systems: Vec<&str> = Vec::new();
    for r in &b.leace {
        by_system.entry(&r.system).or_default().push(r);
        if !leace_tasks.contains(&r.task.as_str()) {
            leace_tasks.push(&r.task);
        }
        if !systems.contains(&r.system.as_str()) {
            systems.push(&r.system);
        }
    }
    if systems.is_empty() {
        md_table(&mut out, &strings(&["Condition", "d"]), &[], &foot);
    }
    for s in systems {
        let _ = writeln!(out, "System: {s}.\n");
        let mut h = strings(&["Condition", "d"]);
        h.extend(leace_tasks.iter().map(|t| t.to_string()));
        let rows_for = &by_system[s];
        let mut rows = Vec::new();
        for (_, label, dim) in LEACE_CONDITIONS {
            if !rows_for.iter().any(|r| r.label == label) {
                continue;
            }
            let mut row = vec![label.to_string(), dim.map(|d| d.to_string()).unwrap_or_else(|| "-".into())];
            for t in &leace_tasks {
                row.push(
                    rows_for
                        .iter()
                        .find(|r| r.label == label && r.task == *t)
                        .map(|r| pct(r.accuracy, 1))
                        .unwrap_or_else(|| "-".into()),
                );
            }
            rows.push(row);
        }
        md_table(&mut out, &h, &rows, &foot);
    }

    out.push_str("## Implicit cascade\n\n");
    let rows: Vec<Vec<String>> = b
        .implicit
        .iter()
        .map(|r| {
            vec![
                r.task.clone(),
                r.condition.clone(),
                num(r.kappa_implicit.kappa, 3),
                num(r.kappa_cascade.kappa, 3),
            ]
        })
        .collect();
    md_table(&mut out, &strings(&["Task", "Condition", "kappa (implicit)", "kappa (cascade)"]), &rows, &foot);

    out.push_str("## Layer curves\n\n");
    let rows: Vec<Vec<String>> = b
        .curves
        .iter()
        .map(|e| {
            let pts: Vec<String> = e
                .curve
                .layers
                .iter()
                .zip(&e.curve.values)
                .map(|(l, v)| format!("L{l}: {}", opt(*v, 3)))
                .collect();
            vec![
                e.curve.name.clone(),
                e.curve.metric.clone(),
                pts.join(", "),
                serde_json::to_value(e.shape).expect("serialisable").as_str().unwrap_or_default().replace('_', "-"),
            ]
        })
        .collect();
    md_table(&mut out, &strings(&["Curve", "Metric", "Values", "Shape"]), &rows, &foot);

    if !b.footnotes.is_empty() {
        out.push_str("## Notes\n\n");
        for (i, f) in b.footnotes.iter().enumerate() {
            let _ = writeln!(out, "{}. {f}", i + 1);
        }
    }
    out
}

/// File names and contents for `format`; stable names, deterministic bytes.
pub fn render_files(b: &ReportBundle, format: Format) -> Result<Vec<(String, String)>> {
    Ok(match format {
        Format::Csv => render_csv(b)?,
        Format::Json => vec![("report.json".into(), serde_json::to_string_pretty(b)? + "\n")],
        Format::Markdown => vec![("report.md".into(), render_markdown(b))],
    })
}

pub fn render(b: &ReportBundle, format: Format, out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = out_dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for (name, body) in render_files(b, format)? {
        let p = dir.join(name);
        fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        written.push(p);
    }
    Ok(written)
}
