// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Display name of the reserved label given to predictions outside the label space.
pub const INVALID_LABEL: &str = "INVALID";

/// Index of a label inside a [`LabelSpace`], or [`LabelId::INVALID`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LabelId(pub u32);

impl LabelId {
    pub const INVALID: LabelId = LabelId(u32::MAX);

    pub fn is_invalid(self) -> bool {
        self == Self::INVALID
    }
}

/// Ordered, closed set of answers for one classification task.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSpace {
    task_id: String,
    labels: Vec<String>,
}

fn normalize(s: &str) -> String {
    s.trim().to_lowercase()
}

impl LabelSpace {
    pub fn new(task_id: impl Into<String>, labels: Vec<String>) -> Result<Self> {
        let task_id = task_id.into();
        if labels.len() < 2 {
            return Err(Error::input(format!(
                "task {task_id}: label space needs at least 2 labels, got {}",
                labels.len()
            )));
        }
        let mut seen = std::collections::BTreeSet::new();
        for l in &labels {
            let key = normalize(l);
            if key.is_empty() {
                return Err(Error::input(format!("task {task_id}: empty label")));
            }
            if key == normalize(INVALID_LABEL) {
                return Err(Error::input(format!(
                    "task {task_id}: label {l:?} collides with the reserved {INVALID_LABEL} label"
                )));
            }
            if !seen.insert(key) {
                return Err(Error::input(format!("task {task_id}: duplicate label {l:?}")));
            }
        }
        Ok(Self { task_id, labels })
    }

    pub fn task_id(&self) -> &str {
        &self.task_id
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Chance level of the conditional error overlap, `1/(|C|-1)`.
    pub fn chance_overlap(&self) -> f64 {
        1.0 / (self.labels.len() as f64 - 1.0)
    }

    /// Maps a raw answer onto the label space (trimmed, case-insensitive).
    /// Anything else becomes [`LabelId::INVALID`].
    pub fn resolve(&self, raw: &str) -> LabelId {
        let key = normalize(raw);
        self.labels
            .iter()
            .position(|l| normalize(l) == key)
            .map(|i| LabelId(i as u32))
            .unwrap_or(LabelId::INVALID)
    }

    pub fn name(&self, id: LabelId) -> &str {
        if id.is_invalid() {
            INVALID_LABEL
        } else {
            &self.labels[id.0 as usize]
        }
    }

    pub fn contains(&self, id: LabelId) -> bool {
        id.is_invalid() || (id.0 as usize) < self.labels.len()
    }
}
