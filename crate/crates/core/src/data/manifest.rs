// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::labels::LabelSpace;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairSpec {
    pub a: String,
    pub b: String,
    #[serde(default)]
    pub matched: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogPath {
    pub system: String,
    pub task: String,
    pub condition: String,
    pub path: PathBuf,
}

/// Optional implicit-cascade comparison: a speech LLM against the backbone
/// re-prompted with its own lens-decoded text, and against an explicit cascade.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImplicitSpec {
    pub speech_llm: String,
    pub implicit: String,
    pub cascade: String,
    #[serde(default = "clean")]
    pub condition: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurveRef {
    pub path: PathBuf,
}

fn clean() -> String {
    "clean".into()
}

fn default_family() -> Vec<String> {
    vec![clean()]
}

/// Describes one evaluation run: which logs exist and which systems to compare.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub systems: Vec<String>,
    pub pairs: Vec<PairSpec>,
    pub tasks: Vec<String>,
    pub label_spaces: BTreeMap<String, Vec<String>>,
    pub conditions: Vec<String>,
    pub paths: Vec<LogPath>,
    /// Conditions whose pair×task comparisons form the FDR family.
    #[serde(default = "default_family")]
    pub fdr_conditions: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub implicit: Option<ImplicitSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub curves: Vec<CurveRef>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Manifest {
    pub fn from_json_slice(bytes: &[u8]) -> Result<Self> {
        let m: Manifest = serde_json::from_slice(bytes)?;
        m.validate()?;
        Ok(m)
    }

    /// Loads a manifest; relative log paths resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut m = Self::from_json_slice(&bytes)?;
        m.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(m)
    }

    pub fn label_space(&self, task: &str) -> Result<LabelSpace> {
        let labels = self
            .label_spaces
            .get(task)
            .ok_or_else(|| Error::input(format!("no label space for task {task:?}")))?;
        LabelSpace::new(task, labels.clone())
    }

    pub fn log_path(&self, system: &str, task: &str, condition: &str) -> Option<PathBuf> {
        self.paths
            .iter()
            .find(|p| p.system == system && p.task == task && p.condition == condition)
            .map(|p| self.resolve(&p.path))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unique = |v: &[String], what: &str| -> Result<BTreeSet<String>> {
            let s: BTreeSet<String> = v.iter().cloned().collect();
            if s.len() != v.len() {
                return Err(Error::input(format!("manifest: duplicate {what}")));
            }
            Ok(s)
        };
        let systems = unique(&self.systems, "system")?;
        let tasks = unique(&self.tasks, "task")?;
        let conditions = unique(&self.conditions, "condition")?;
        for p in &self.pairs {
            for s in [&p.a, &p.b] {
                if !systems.contains(s) {
                    return Err(Error::input(format!("manifest: pair references unknown system {s:?}")));
                }
            }
            if p.a == p.b {
                return Err(Error::input(format!("manifest: pair compares {:?} with itself", p.a)));
            }
        }
        for t in &self.tasks {
            LabelSpace::new(
                t.clone(),
                self.label_spaces
                    .get(t)
                    .cloned()
                    .ok_or_else(|| Error::input(format!("manifest: no label space for task {t:?}")))?,
            )?;
        }
        let mut keys = BTreeSet::new();
        for p in &self.paths {
            if !systems.contains(&p.system) || !tasks.contains(&p.task) || !conditions.contains(&p.condition) {
                return Err(Error::input(format!(
                    "manifest: path entry ({}, {}, {}) references an undeclared system, task or condition",
                    p.system, p.task, p.condition
                )));
            }
            if !keys.insert((&p.system, &p.task, &p.condition)) {
                return Err(Error::input(format!(
                    "manifest: duplicate path entry ({}, {}, {})",
                    p.system, p.task, p.condition
                )));
            }
        }
        for c in &self.fdr_conditions {
            if !conditions.contains(c) {
                return Err(Error::input(format!("manifest: FDR condition {c:?} is undeclared")));
            }
        }
        if let Some(i) = &self.implicit {
            for s in [&i.speech_llm, &i.implicit, &i.cascade] {
                if !systems.contains(s) {
                    return Err(Error::input(format!("manifest: implicit block references unknown system {s:?}")));
                }
            }
        }
        Ok(())
    }
}
