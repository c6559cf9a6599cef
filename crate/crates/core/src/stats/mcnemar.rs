// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use crate::data::PairedPredictions;
use crate::{Error, Result};

/// Largest discordant count `b + c` handled by the exact binomial test.
pub const EXACT_LIMIT: u64 = 25;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum McNemarMethod {
    Exact,
    ContinuityCorrected,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McNemarResult {
    /// A right, B wrong.
    pub b: u64,
    /// A wrong, B right.
    pub c: u64,
    pub p_value: f64,
    pub method: McNemarMethod,
    /// Chi-square statistic for the asymptotic branch.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub statistic: Option<f64>,
    /// No discordant pairs at all.
    pub degenerate: bool,
}

/// `P(X <= k)` for `X ~ Binomial(n, 1/2)`, summed exactly for `n <= 62`.
fn binomial_half_cdf(n: u64, k: u64) -> f64 {
    let mut coef: u128 = 1;
    let mut total: u128 = 0;
    for i in 0..=k.min(n) {
        if i > 0 {
            coef = coef * u128::from(n - i + 1) / u128::from(i);
        }
        total += coef;
    }
    total as f64 / (2f64).powi(n as i32)
}

/// Upper tail of a chi-square with one degree of freedom.
fn chi2_1_sf(x: f64) -> f64 {
    libm::erfc((x / 2.0).sqrt())
}

pub fn mcnemar_from_counts(b: u64, c: u64) -> McNemarResult {
    let n = b + c;
    if n == 0 {
        return McNemarResult {
            b,
            c,
            p_value: 1.0,
            method: McNemarMethod::Exact,
            statistic: None,
            degenerate: true,
        };
    }
    if n <= EXACT_LIMIT {
        let p = (2.0 * binomial_half_cdf(n, b.min(c))).min(1.0);
        McNemarResult {
            b,
            c,
            p_value: p,
            method: McNemarMethod::Exact,
            statistic: None,
            degenerate: false,
        }
    } else {
        let diff = b.abs_diff(c) as f64 - 1.0;
        let stat = diff * diff / n as f64;
        McNemarResult {
            b,
            c,
            p_value: chi2_1_sf(stat),
            method: McNemarMethod::ContinuityCorrected,
            statistic: Some(stat),
            degenerate: false,
        }
    }
}

/// McNemar's test on the discordant pairs of `pp` with respect to gold.
pub fn mcnemar(pp: &PairedPredictions) -> Result<McNemarResult> {
    if pp.n() == 0 {
        return Err(Error::input("McNemar needs at least one example"));
    }
    let (mut b, mut c) = (0u64, 0u64);
    for ((g, a), bb) in pp.gold().iter().zip(pp.pred_a()).zip(pp.pred_b()) {
        match (a == g, bb == g) {
            (true, false) => b += 1,
            (false, true) => c += 1,
            _ => {}
        }
    }
    Ok(mcnemar_from_counts(b, c))
}
