// SPDX-License-Identifier: Apache-2.0

use crate::{Error, Result};

/// `max(0, 1 - CER)` with CER the character-level Levenshtein distance
/// divided by the reference length.
pub fn text_decodability(hyp: &str, reference: &str) -> Result<f64> {
    let len = reference.chars().count();
    if len == 0 {
        return Err(Error::input("text decodability needs a nonempty reference"));
    }
    let dist = strsim::levenshtein(hyp, reference);
    Ok((1.0 - dist as f64 / len as f64).max(0.0))
}
