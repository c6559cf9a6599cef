// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FdrResult {
    pub raw: Vec<f64>,
    pub adjusted: Vec<f64>,
    pub rejected: Vec<bool>,
    pub alpha: f64,
}

/// Benjamini-Hochberg step-up adjustment.
///
/// `adjusted[i] = min_{j >= rank(i)} (m / j) p_(j)`, clipped to 1;
/// a hypothesis is rejected iff its adjusted value is `<= alpha`.
pub fn bh_fdr(pvals: &[f64], alpha: f64) -> Result<FdrResult> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::input(format!("alpha must lie in (0,1), got {alpha}")));
    }
    if let Some(p) = pvals.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::input(format!("p-value {p} outside [0,1]")));
    }
    let m = pvals.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| pvals[a].total_cmp(&pvals[b]).then(a.cmp(&b)));
    let mut adjusted = vec![0.0; m];
    let mut running = 1.0f64;
    for (rank0, &i) in order.iter().enumerate().rev() {
        let scaled = pvals[i] * m as f64 / (rank0 + 1) as f64;
        running = running.min(scaled);
        // (m/j)·p >= p exactly; the max only undoes rounding in the product.
        adjusted[i] = running.min(1.0).max(pvals[i]);
    }
    let rejected = adjusted.iter().map(|&q| q <= alpha).collect();
    Ok(FdrResult {
        raw: pvals.to_vec(),
        adjusted,
        rejected,
        alpha,
    })
}
