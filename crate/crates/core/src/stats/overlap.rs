// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use crate::data::PairedPredictions;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlapResult {
    /// `same_wrong / both_wrong`; `None` when neither system ever fails together.
    pub overlap: Option<f64>,
    pub both_wrong: usize,
    pub same_wrong: usize,
    /// `1/(|C|-1)`: the overlap expected if wrong answers were uniform over the
    /// non-gold labels.
    pub chance: f64,
}

impl OverlapResult {
    pub fn is_defined(&self) -> bool {
        self.overlap.is_some()
    }
}

/// P(same wrong answer | both wrong). Refused for binary tasks, where two
/// wrong answers are necessarily identical.
///
/// Two INVALID answers count as the same wrong answer.
pub fn conditional_error_overlap(pp: &PairedPredictions) -> Result<OverlapResult> {
    let space = pp.label_space();
    if space.len() < 3 {
        return Err(Error::input(format!(
            "error overlap needs at least 3 labels; task {} has {}",
            space.task_id(),
            space.len()
        )));
    }
    let (mut both_wrong, mut same_wrong) = (0usize, 0usize);
    for ((g, a), b) in pp.gold().iter().zip(pp.pred_a()).zip(pp.pred_b()) {
        if a != g && b != g {
            both_wrong += 1;
            if a == b {
                same_wrong += 1;
            }
        }
    }
    Ok(OverlapResult {
        overlap: (both_wrong > 0).then(|| same_wrong as f64 / both_wrong as f64),
        both_wrong,
        same_wrong,
        chance: space.chance_overlap(),
    })
}
