// SPDX-License-Identifier: Apache-2.0

//! CTC loss over a `T × C` logit matrix whose last column is the blank.

use nalgebra::DMatrix;

use super::alphabet::{decode, BLANK, CTC_CLASSES};
use crate::{Error, Result};

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Row-wise log-softmax.
pub fn log_softmax(logits: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = logits.clone();
    for mut row in out.row_iter_mut() {
        let m = row.max();
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        row.add_scalar_mut(-lse);
    }
    out
}

/// Minimum number of frames that can emit `target`: one per symbol plus a
/// separating blank between equal neighbours.
pub fn min_frames(target: &[usize]) -> usize {
    target.len() + target.windows(2).filter(|w| w[0] == w[1]).count()
}

struct Lattice {
    /// Blank-augmented label sequence.
    ext: Vec<usize>,
    log_probs: DMatrix<f64>,
}

impl Lattice {
    fn new(logits: &DMatrix<f64>, target: &[usize]) -> Result<Self> {
        let (t, c) = logits.shape();
        if t == 0 || c < 2 {
            return Err(Error::Dimension(format!("CTC needs T >= 1 and at least 2 classes, got {t}x{c}")));
        }
        let blank = c - 1;
        if let Some(&bad) = target.iter().find(|&&s| s >= blank) {
            return Err(Error::input(format!("target symbol {bad} outside the {blank}-symbol alphabet")));
        }
        if min_frames(target) > t {
            return Err(Error::input(format!(
                "target of length {} needs at least {} frames, only {t} available",
                target.len(),
                min_frames(target)
            )));
        }
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite logits".into()));
        }
        let mut ext = Vec::with_capacity(2 * target.len() + 1);
        ext.push(blank);
        for &s in target {
            ext.push(s);
            ext.push(blank);
        }
        Ok(Self {
            ext,
            log_probs: log_softmax(logits),
        })
    }

    fn skip_allowed(&self, s: usize) -> bool {
        s >= 2 && self.ext[s] != self.ext[s - 2] && self.ext[s] != *self.ext.last().unwrap()
    }

    fn forward(&self) -> DMatrix<f64> {
        let (t_len, s_len) = (self.log_probs.nrows(), self.ext.len());
        let mut a = DMatrix::from_element(t_len, s_len, f64::NEG_INFINITY);
        a[(0, 0)] = self.log_probs[(0, self.ext[0])];
        if s_len > 1 {
            a[(0, 1)] = self.log_probs[(0, self.ext[1])];
        }
        for t in 1..t_len {
            for s in 0..s_len {
                let mut acc = a[(t - 1, s)];
                if s >= 1 {
                    acc = log_add(acc, a[(t - 1, s - 1)]);
                }
                if self.skip_allowed(s) {
                    acc = log_add(acc, a[(t - 1, s - 2)]);
                }
                a[(t, s)] = acc + self.log_probs[(t, self.ext[s])];
            }
        }
        a
    }

    /// `b[(t, s)]`: log-probability of completing the target after frame `t`
    /// given state `s` at `t` (emission at `t` excluded).
    fn backward(&self) -> DMatrix<f64> {
        let (t_len, s_len) = (self.log_probs.nrows(), self.ext.len());
        let mut b = DMatrix::from_element(t_len, s_len, f64::NEG_INFINITY);
        b[(t_len - 1, s_len - 1)] = 0.0;
        if s_len > 1 {
            b[(t_len - 1, s_len - 2)] = 0.0;
        }
        for t in (0..t_len - 1).rev() {
            for s in 0..s_len {
                let step = |s2: usize| b[(t + 1, s2)] + self.log_probs[(t + 1, self.ext[s2])];
                let mut acc = step(s);
                if s + 1 < s_len {
                    acc = log_add(acc, step(s + 1));
                }
                if s + 2 < s_len && self.skip_allowed(s + 2) {
                    acc = log_add(acc, step(s + 2));
                }
                b[(t, s)] = acc;
            }
        }
        b
    }

    fn total(&self, alpha: &DMatrix<f64>) -> f64 {
        let (t, s) = (alpha.nrows() - 1, self.ext.len());
        let mut lp = alpha[(t, s - 1)];
        if s > 1 {
            lp = log_add(lp, alpha[(t, s - 2)]);
        }
        lp
    }
}

/// Negative log-probability of `target` summed over every blank-augmented
/// alignment. The blank is the last logit column.
pub fn ctc_loss(logits: &DMatrix<f64>, target: &[usize]) -> Result<f64> {
    let lat = Lattice::new(logits, target)?;
    let lp = lat.total(&lat.forward());
    if lp == f64::NEG_INFINITY {
        return Err(Error::Numerical("target has zero probability".into()));
    }
    Ok((-lp).max(0.0))
}

/// Loss and its gradient with respect to the logits.
pub fn ctc_loss_and_grad(logits: &DMatrix<f64>, target: &[usize]) -> Result<(f64, DMatrix<f64>)> {
    let lat = Lattice::new(logits, target)?;
    let alpha = lat.forward();
    let beta = lat.backward();
    let lp = lat.total(&alpha);
    if !lp.is_finite() {
        return Err(Error::Numerical("target has zero probability".into()));
    }
    let mut grad = lat.log_probs.map(f64::exp);
    for t in 0..grad.nrows() {
        let mut occ = vec![f64::NEG_INFINITY; grad.ncols()];
        for (s, &k) in lat.ext.iter().enumerate() {
            occ[k] = log_add(occ[k], alpha[(t, s)] + beta[(t, s)]);
        }
        for (k, o) in occ.into_iter().enumerate() {
            if o != f64::NEG_INFINITY {
                grad[(t, k)] -= (o - lp).exp();
            }
        }
    }
    Ok(((-lp).max(0.0), grad))
}

/// Per-frame argmax (lowest index wins ties).
pub fn best_path(logits: &DMatrix<f64>) -> Vec<usize> {
    logits
        .row_iter()
        .map(|r| {
            let mut best = 0;
            for (k, &v) in r.iter().enumerate() {
                if v > r[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

/// Merge consecutive repeats, then drop blanks.
pub fn collapse(path: &[usize], blank: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for &k in path {
        if Some(k) != prev && k != blank {
            out.push(k);
        }
        prev = Some(k);
    }
    out
}

/// Best-path decode of a `T × 49` logit matrix into alphabet text.
pub fn greedy_ctc_decode(logits: &DMatrix<f64>) -> String {
    debug_assert_eq!(logits.ncols(), CTC_CLASSES);
    decode(&collapse(&best_path(logits), BLANK))
}
