// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::labels::{LabelId, LabelSpace};
use crate::{Error, Result};

/// One validated line of a prediction log.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PredictionRecord {
    pub example_id: String,
    pub task_id: String,
    pub gold: LabelId,
    pub pred: LabelId,
    /// The answer exactly as it appeared in the log, kept so INVALID records
    /// can be written back unchanged.
    pub raw_pred: String,
    pub transcript: Option<String>,
    pub condition: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct RawRecord {
    id: Value,
    task: String,
    gold: String,
    pred: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    transcript: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    condition: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LineError {
    /// 1-based line number.
    pub line: usize,
    pub message: String,
}

/// Result of loading a log. Lines are never dropped silently:
/// `records.len() + malformed.len() + blank_lines == lines_in`.
#[derive(Clone, Debug, Default)]
pub struct PredictionLog {
    pub path: Option<PathBuf>,
    pub records: Vec<PredictionRecord>,
    pub invalid_count: usize,
    pub malformed: Vec<LineError>,
    pub blank_lines: usize,
    pub lines_in: usize,
}

impl PredictionLog {
    /// Fails on the first malformed line.
    pub fn into_strict(self) -> Result<Self> {
        if let Some(e) = self.malformed.first() {
            return Err(Error::MalformedLine {
                path: self.path.clone().unwrap_or_default(),
                line: e.line,
                message: e.message.clone(),
            });
        }
        Ok(self)
    }
}

fn id_to_string(v: &Value) -> std::result::Result<String, String> {
    match v {
        Value::String(s) if !s.is_empty() => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        other => Err(format!("id must be a nonempty string or a number, got {other}")),
    }
}

/// Parses and validates one JSON line against `space`.
pub fn parse_prediction_line(
    line: &str,
    space: &LabelSpace,
) -> std::result::Result<PredictionRecord, String> {
    let raw: RawRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let example_id = id_to_string(&raw.id)?;
    if raw.task != space.task_id() {
        return Err(format!(
            "unknown task_id {:?} (expected {:?})",
            raw.task,
            space.task_id()
        ));
    }
    let gold = space.resolve(&raw.gold);
    if gold.is_invalid() {
        return Err(format!("gold label {:?} is not in the label space", raw.gold));
    }
    Ok(PredictionRecord {
        example_id,
        task_id: raw.task,
        gold,
        pred: space.resolve(&raw.pred),
        raw_pred: raw.pred,
        transcript: raw.transcript,
        condition: raw.condition,
    })
}

pub fn parse_prediction_log(text: &str, space: &LabelSpace) -> PredictionLog {
    let mut log = PredictionLog::default();
    for (i, line) in text.lines().enumerate() {
        log.lines_in += 1;
        if line.trim().is_empty() {
            log.blank_lines += 1;
            continue;
        }
        match parse_prediction_line(line, space) {
            Ok(rec) => {
                if rec.pred.is_invalid() {
                    log.invalid_count += 1;
                }
                log.records.push(rec);
            }
            Err(message) => log.malformed.push(LineError {
                line: i + 1,
                message,
            }),
        }
    }
    log
}

/// Reads a JSONL prediction log. Malformed lines are collected, not fatal;
/// call [`PredictionLog::into_strict`] to turn them into an error.
pub fn load_prediction_log(path: impl AsRef<Path>, space: &LabelSpace) -> Result<PredictionLog> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut log = parse_prediction_log(&text, space);
    log.path = Some(path.to_path_buf());
    Ok(log)
}

pub fn record_to_json_line(rec: &PredictionRecord, space: &LabelSpace) -> String {
    let raw = RawRecord {
        id: Value::String(rec.example_id.clone()),
        task: rec.task_id.clone(),
        gold: space.name(rec.gold).to_string(),
        pred: rec.raw_pred.clone(),
        transcript: rec.transcript.clone(),
        condition: rec.condition.clone(),
    };
    serde_json::to_string(&raw).expect("record serialisation cannot fail")
}

pub fn write_prediction_log(
    path: impl AsRef<Path>,
    records: &[PredictionRecord],
    space: &LabelSpace,
) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for r in records {
        out.push_str(&record_to_json_line(r, space));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Two systems' answers on the same examples, with the shared gold labels.
#[derive(Clone, Debug, PartialEq)]
pub struct PairedPredictions {
    gold: Vec<LabelId>,
    pred_a: Vec<LabelId>,
    pred_b: Vec<LabelId>,
    label_space: LabelSpace,
}

impl PairedPredictions {
    pub fn new(
        gold: Vec<LabelId>,
        pred_a: Vec<LabelId>,
        pred_b: Vec<LabelId>,
        label_space: LabelSpace,
    ) -> Result<Self> {
        if gold.is_empty() {
            return Err(Error::input("paired predictions need at least one example"));
        }
        if gold.len() != pred_a.len() || gold.len() != pred_b.len() {
            return Err(Error::Dimension(format!(
                "gold/pred_a/pred_b lengths {}/{}/{}",
                gold.len(),
                pred_a.len(),
                pred_b.len()
            )));
        }
        if gold.iter().any(|g| g.is_invalid() || !label_space.contains(*g)) {
            return Err(Error::input("gold labels must lie in the label space"));
        }
        if pred_a
            .iter()
            .chain(pred_b.iter())
            .any(|p| !label_space.contains(*p))
        {
            return Err(Error::input("prediction outside the label space"));
        }
        Ok(Self {
            gold,
            pred_a,
            pred_b,
            label_space,
        })
    }

    /// Convenience constructor from label names; unknown names map to INVALID.
    pub fn from_names(
        label_space: LabelSpace,
        gold: &[&str],
        pred_a: &[&str],
        pred_b: &[&str],
    ) -> Result<Self> {
        let map = |v: &[&str]| v.iter().map(|s| label_space.resolve(s)).collect::<Vec<_>>();
        let (g, a, b) = (map(gold), map(pred_a), map(pred_b));
        Self::new(g, a, b, label_space)
    }

    pub fn n(&self) -> usize {
        self.gold.len()
    }

    pub fn gold(&self) -> &[LabelId] {
        &self.gold
    }

    pub fn pred_a(&self) -> &[LabelId] {
        &self.pred_a
    }

    pub fn pred_b(&self) -> &[LabelId] {
        &self.pred_b
    }

    pub fn label_space(&self) -> &LabelSpace {
        &self.label_space
    }

    pub fn swapped(&self) -> Self {
        Self {
            gold: self.gold.clone(),
            pred_a: self.pred_b.clone(),
            pred_b: self.pred_a.clone(),
            label_space: self.label_space.clone(),
        }
    }

    /// Resample by example index (indices may repeat).
    pub fn select(&self, idx: &[usize]) -> Self {
        let pick = |v: &[LabelId]| idx.iter().map(|&i| v[i]).collect();
        Self {
            gold: pick(&self.gold),
            pred_a: pick(&self.pred_a),
            pred_b: pick(&self.pred_b),
            label_space: self.label_space.clone(),
        }
    }
}

/// Output of [`align_logs`]: the joined pairs plus what each side lost.
#[derive(Clone, Debug, PartialEq)]
pub struct Alignment {
    pub pairs: PairedPredictions,
    pub ids: Vec<String>,
    pub dropped_a: usize,
    pub dropped_b: usize,
}

fn index_by_id<'a>(
    recs: &'a [PredictionRecord],
    side: &str,
) -> Result<BTreeMap<&'a str, &'a PredictionRecord>> {
    let mut map = BTreeMap::new();
    for r in recs {
        if map.insert(r.example_id.as_str(), r).is_some() {
            return Err(Error::input(format!(
                "duplicate example_id {:?} in log {side}",
                r.example_id
            )));
        }
    }
    Ok(map)
}

/// Inner join of two logs on `example_id`, ordered by id.
pub fn align_logs(
    a: &[PredictionRecord],
    b: &[PredictionRecord],
    space: &LabelSpace,
) -> Result<Alignment> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::input("cannot align an empty log"));
    }
    let ma = index_by_id(a, "a")?;
    let mb = index_by_id(b, "b")?;
    let mut ids = Vec::new();
    let (mut gold, mut pa, mut pb) = (Vec::new(), Vec::new(), Vec::new());
    for (id, ra) in &ma {
        if let Some(rb) = mb.get(id) {
            if ra.gold != rb.gold {
                return Err(Error::input(format!(
                    "example {id:?}: gold labels differ between logs"
                )));
            }
            ids.push(id.to_string());
            gold.push(ra.gold);
            pa.push(ra.pred);
            pb.push(rb.pred);
        }
    }
    if ids.is_empty() {
        return Err(Error::input("logs share no example ids"));
    }
    let n = ids.len();
    Ok(Alignment {
        pairs: PairedPredictions::new(gold, pa, pb, space.clone())?,
        ids,
        dropped_a: ma.len() - n,
        dropped_b: mb.len() - n,
    })
}
