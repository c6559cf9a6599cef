// SPDX-License-Identifier: Apache-2.0

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::data::{LabelId, PairedPredictions};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KappaResult {
    pub kappa: f64,
    pub p_observed: f64,
    pub p_expected: f64,
    pub n: usize,
    /// Both systems emitted one identical constant label, so `p_expected = 1`
    /// and κ is reported as 1.
    pub degenerate: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ci_low: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ci_high: Option<f64>,
}

/// Cohen's κ between two label sequences. Gold is never consulted.
pub fn kappa_from_labels(a: &[LabelId], b: &[LabelId]) -> Result<KappaResult> {
    if a.is_empty() {
        return Err(Error::input("kappa needs at least one example"));
    }
    if a.len() != b.len() {
        return Err(Error::Dimension(format!("{} vs {} predictions", a.len(), b.len())));
    }
    let n = a.len() as u128;
    let mut agree = 0u128;
    let mut marginals: HashMap<LabelId, (u128, u128)> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        agree += u128::from(x == y);
        marginals.entry(x).or_default().0 += 1;
        marginals.entry(y).or_default().1 += 1;
    }
    // Integer numerator keeps the statistic exactly symmetric and
    // label-permutation invariant.
    let expected_num: u128 = marginals.values().map(|(ca, cb)| ca * cb).sum();
    let n2 = n * n;
    let p_observed = agree as f64 / n as f64;
    let p_expected = expected_num as f64 / n2 as f64;
    let degenerate = expected_num == n2;
    let kappa = if degenerate {
        1.0
    } else {
        (p_observed - p_expected) / (1.0 - p_expected)
    };
    Ok(KappaResult {
        kappa,
        p_observed,
        p_expected,
        n: a.len(),
        degenerate,
        ci_low: None,
        ci_high: None,
    })
}

pub fn cohen_kappa(pp: &PairedPredictions) -> Result<KappaResult> {
    kappa_from_labels(pp.pred_a(), pp.pred_b())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::LabelSpace;
    use proptest::prelude::*;

    fn ids(v: &[u32]) -> Vec<LabelId> {
        v.iter().map(|&i| LabelId(i)).collect()
    }

    #[test]
    fn perfect_agreement() {
        let r = kappa_from_labels(&ids(&[0, 0, 1, 1]), &ids(&[0, 0, 1, 1])).unwrap();
        assert_eq!(r.kappa, 1.0);
    }

    #[test]
    fn chance_agreement_is_zero() {
        let r = kappa_from_labels(&ids(&[0, 0, 1, 1]), &ids(&[0, 1, 0, 1])).unwrap();
        assert_eq!((r.p_observed, r.p_expected, r.kappa), (0.5, 0.5, 0.0));
    }

    #[test]
    fn total_disagreement_is_minus_one() {
        let r = kappa_from_labels(&ids(&[0, 1]), &ids(&[1, 0])).unwrap();
        assert_eq!((r.p_observed, r.p_expected, r.kappa), (0.0, 0.5, -1.0));
    }

    #[test]
    fn constant_identical_is_degenerate() {
        let r = kappa_from_labels(&ids(&[2, 2, 2]), &ids(&[2, 2, 2])).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.kappa, 1.0);
    }

    #[test]
    fn invalid_is_its_own_category() {
        let a = vec![LabelId::INVALID, LabelId::INVALID, LabelId(0), LabelId(1)];
        let r = kappa_from_labels(&a, &a).unwrap();
        assert_eq!(r.kappa, 1.0);
        let b = vec![LabelId(0), LabelId(0), LabelId(0), LabelId(1)];
        assert!(kappa_from_labels(&a, &b).unwrap().kappa < 1.0);
    }

    #[test]
    fn empty_is_an_error() {
        assert!(kappa_from_labels(&[], &[]).is_err());
    }

    proptest! {
        #[test]
        fn symmetric_and_permutation_invariant(
            pairs in proptest::collection::vec((0u32..4, 0u32..4), 1..60),
            perm in Just([0u32, 1, 2, 3]).prop_shuffle(),
        ) {
            let a: Vec<_> = pairs.iter().map(|p| LabelId(p.0)).collect();
            let b: Vec<_> = pairs.iter().map(|p| LabelId(p.1)).collect();
            let ab = kappa_from_labels(&a, &b).unwrap();
            let ba = kappa_from_labels(&b, &a).unwrap();
            prop_assert_eq!(ab.kappa.to_bits(), ba.kappa.to_bits());
            let relabel = |v: &[LabelId]| v.iter().map(|l| LabelId(perm[l.0 as usize])).collect::<Vec<_>>();
            let pk = kappa_from_labels(&relabel(&a), &relabel(&b)).unwrap();
            prop_assert_eq!(pk.kappa.to_bits(), ab.kappa.to_bits());
            prop_assert!((-1.0..=1.0).contains(&ab.kappa));
        }

        #[test]
        fn gold_is_irrelevant(
            rows in proptest::collection::vec((0u32..3, 0u32..3, 0u32..3, 0u32..3), 1..40),
        ) {
            let space = LabelSpace::new("t", vec!["x".into(), "y".into(), "z".into()]).unwrap();
            let a: Vec<_> = rows.iter().map(|r| LabelId(r.0)).collect();
            let b: Vec<_> = rows.iter().map(|r| LabelId(r.1)).collect();
            let g1: Vec<_> = rows.iter().map(|r| LabelId(r.2)).collect();
            let g2: Vec<_> = rows.iter().map(|r| LabelId(r.3)).collect();
            let k1 = cohen_kappa(&PairedPredictions::new(g1, a.clone(), b.clone(), space.clone()).unwrap()).unwrap();
            let k2 = cohen_kappa(&PairedPredictions::new(g2, a, b, space).unwrap()).unwrap();
            prop_assert_eq!(k1.kappa.to_bits(), k2.kappa.to_bits());
        }
    }
}
