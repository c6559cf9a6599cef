// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::HiddenStateDump;
use crate::probes::{aligned_frame, boc_vector, log_softmax, normalize_text, probe_frames, CtcProbe, ALPHABET_SIZE, CTC_CLASSES};
use crate::{Error, Result};

/// Width of the first-word concept: 158 frequent words plus OTHER.
pub const PROXY_WIDTH: usize = 159;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConceptKind {
    Boc,
    Proxy,
    Ctc,
    Acoustic,
    Random,
    Custom,
}

impl ConceptKind {
    pub const ALL: [ConceptKind; 6] = [
        ConceptKind::Boc,
        ConceptKind::Proxy,
        ConceptKind::Ctc,
        ConceptKind::Acoustic,
        ConceptKind::Random,
        ConceptKind::Custom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ConceptKind::Boc => "boc",
            ConceptKind::Proxy => "proxy",
            ConceptKind::Ctc => "ctc",
            ConceptKind::Acoustic => "acoustic",
            ConceptKind::Random => "random",
            ConceptKind::Custom => "custom",
        }
    }

    /// Required width, if the kind fixes one.
    pub fn width(self) -> Option<usize> {
        match self {
            ConceptKind::Boc => Some(ALPHABET_SIZE),
            ConceptKind::Proxy => Some(PROXY_WIDTH),
            ConceptKind::Ctc => Some(CTC_CLASSES),
            ConceptKind::Acoustic => Some(2),
            ConceptKind::Random | ConceptKind::Custom => None,
        }
    }

    pub fn is_one_hot(self) -> bool {
        matches!(self, ConceptKind::Proxy | ConceptKind::Ctc)
    }
}

impl fmt::Display for ConceptKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ConceptKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ConceptKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::input(format!("unknown concept {s:?}")))
    }
}

/// Concept values, one row per hidden-state row.
#[derive(Clone, Debug, PartialEq)]
pub struct ConceptMatrix {
    z: DMatrix<f64>,
    kind: ConceptKind,
    /// Set when one-hot labels were replaced by probabilities.
    soft: bool,
}

impl ConceptMatrix {
    pub fn new(z: DMatrix<f64>, kind: ConceptKind) -> Result<Self> {
        Self::build(z, kind, false)
    }

    /// Probability rows for a one-hot kind (each row sums to 1).
    pub fn soft(z: DMatrix<f64>, kind: ConceptKind) -> Result<Self> {
        Self::build(z, kind, true)
    }

    fn build(z: DMatrix<f64>, kind: ConceptKind, soft: bool) -> Result<Self> {
        if let Some(w) = kind.width() {
            if z.ncols() != w {
                return Err(Error::Dimension(format!("{kind} concept must have {w} columns, got {}", z.ncols())));
            }
        }
        if z.ncols() == 0 {
            return Err(Error::Dimension("concept has no columns".into()));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite concept values".into()));
        }
        if kind.is_one_hot() {
            for (i, row) in z.row_iter().enumerate() {
                let ok = if soft {
                    (row.sum() - 1.0).abs() < 1e-6 && row.iter().all(|&v| v >= 0.0)
                } else {
                    row.iter().filter(|&&v| v == 1.0).count() == 1 && row.iter().all(|&v| v == 0.0 || v == 1.0)
                };
                if !ok {
                    return Err(Error::input(format!("{kind} concept row {i} is not one-hot")));
                }
            }
        }
        Ok(Self { z, kind, soft })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn kind(&self) -> ConceptKind {
        self.kind
    }

    pub fn is_soft(&self) -> bool {
        self.soft
    }

    pub fn rows(&self) -> usize {
        self.z.nrows()
    }

    pub fn width(&self) -> usize {
        self.z.ncols()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            z: DMatrix::from_fn(rows.len(), self.z.ncols(), |i, j| self.z[(rows[i], j)]),
            kind: self.kind,
            soft: self.soft,
        }
    }
}

/// First word of a transcript after text normalisation.
pub fn first_word(transcript: &str) -> Option<String> {
    normalize_text(transcript)
        .split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric() && c != '\''))
        .find(|w| !w.is_empty())
        .map(str::to_string)
}

/// The first-word classes: up to 158 words by descending frequency (ties
/// alphabetical), then OTHER.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProxyVocab {
    pub words: Vec<String>,
}

impl ProxyVocab {
    pub const OTHER: usize = PROXY_WIDTH - 1;

    pub fn build<'a>(transcripts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for t in transcripts {
            if let Some(w) = first_word(t) {
                *counts.entry(w).or_default() += 1;
            }
        }
        let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Self {
            words: ranked.into_iter().take(Self::OTHER).map(|(w, _)| w).collect(),
        }
    }

    pub fn class_of(&self, transcript: &str) -> usize {
        first_word(transcript)
            .and_then(|w| self.words.iter().position(|v| *v == w))
            .unwrap_or(Self::OTHER)
    }
}

fn stack_rows(parts: Vec<(DMatrix<f64>, DMatrix<f64>)>, width: usize, k: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let n: usize = parts.iter().map(|(x, _)| x.nrows()).sum();
    let mut x = DMatrix::zeros(n, width);
    let mut z = DMatrix::zeros(n, k);
    let mut at = 0;
    for (px, pz) in parts {
        let r = px.nrows();
        x.rows_mut(at, r).copy_from(&px);
        z.rows_mut(at, r).copy_from(&pz);
        at += r;
    }
    (x, z)
}

fn common_width(dumps: &[&HiddenStateDump]) -> Result<usize> {
    let w = dumps.first().map(|d| d.width()).ok_or_else(|| Error::input("no utterances"))?;
    if dumps.iter().any(|d| d.width() != w) {
        return Err(Error::Dimension("dumps disagree on hidden width".into()));
    }
    Ok(w)
}

/// Every probed frame paired with its utterance-level concept row.
fn broadcast(
    dumps: &[&HiddenStateDump],
    k: usize,
    row_of: impl Fn(&HiddenStateDump) -> Vec<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let width = common_width(dumps)?;
    let parts = dumps
        .iter()
        .map(|d| {
            let frames = probe_frames(d);
            let z = row_of(d);
            let zr = DMatrix::from_fn(frames.nrows(), k, |_, j| z[j]);
            (frames, zr)
        })
        .collect();
    Ok(stack_rows(parts, width, k))
}

/// Frames paired with their utterance's character-frequency vector.
pub fn boc_concept(dumps: &[&HiddenStateDump]) -> Result<(DMatrix<f64>, ConceptMatrix)> {
    let (x, z) = broadcast(dumps, ALPHABET_SIZE, |d| boc_vector(&d.transcript).to_vec())?;
    Ok((x, ConceptMatrix::new(z, ConceptKind::Boc)?))
}

/// Frames paired with a one-hot of their utterance's first word.
pub fn proxy_concept(dumps: &[&HiddenStateDump], vocab: &ProxyVocab) -> Result<(DMatrix<f64>, ConceptMatrix)> {
    let (x, z) = broadcast(dumps, PROXY_WIDTH, |d| {
        let mut v = vec![0.0; PROXY_WIDTH];
        v[vocab.class_of(&d.transcript)] = 1.0;
        v
    })?;
    Ok((x, ConceptMatrix::new(z, ConceptKind::Proxy)?))
}

/// Frames paired with their time-aligned `(pitch, energy)` values.
pub fn acoustic_concept(dumps: &[&HiddenStateDump]) -> Result<(DMatrix<f64>, ConceptMatrix)> {
    let width = common_width(dumps)?;
    let mut parts = Vec::new();
    for d in dumps {
        let a = d.acoustic_targets.as_ref().ok_or_else(|| {
            Error::input(format!("utterance {:?} has no acoustic targets", d.utterance_id))
        })?;
        let frames = probe_frames(d);
        let t = frames.nrows();
        let z = DMatrix::from_fn(t, 2, |i, j| {
            let row = aligned_frame(i, t, a.nrows());
            a[(row, 1 - j)] as f64
        });
        parts.push((frames, z));
    }
    let (x, z) = stack_rows(parts, width, 2);
    Ok((x, ConceptMatrix::new(z, ConceptKind::Acoustic)?))
}

/// Per-frame classes predicted by a CTC probe: hard argmax one-hots, or the
/// softmax probabilities when `soft` is set.
pub fn ctc_concept_labels(probe: &CtcProbe, d: &HiddenStateDump, soft: bool) -> Result<(DMatrix<f64>, ConceptMatrix)> {
    if probe.width() != d.width() {
        return Err(Error::Dimension(format!(
            "probe width {} does not match dump width {}",
            probe.width(),
            d.width()
        )));
    }
    let frames = probe_frames(d);
    let logits = probe.logits(&frames);
    let z = if soft {
        log_softmax(&logits).map(f64::exp)
    } else {
        let path = crate::probes::best_path(&logits);
        DMatrix::from_fn(frames.nrows(), CTC_CLASSES, |i, j| if path[i] == j { 1.0 } else { 0.0 })
    };
    let concept = if soft {
        ConceptMatrix::soft(z, ConceptKind::Ctc)?
    } else {
        ConceptMatrix::new(z, ConceptKind::Ctc)?
    };
    Ok((frames, concept))
}

/// [`ctc_concept_labels`] over several utterances, rows stacked.
pub fn ctc_concept(probe: &CtcProbe, dumps: &[&HiddenStateDump], soft: bool) -> Result<(DMatrix<f64>, ConceptMatrix)> {
    let width = common_width(dumps)?;
    let mut parts = Vec::new();
    for d in dumps {
        let (x, c) = ctc_concept_labels(probe, d, soft)?;
        parts.push((x, c.matrix().clone()));
    }
    let (x, z) = stack_rows(parts, width, CTC_CLASSES);
    let c = if soft { ConceptMatrix::soft(z, ConceptKind::Ctc)? } else { ConceptMatrix::new(z, ConceptKind::Ctc)? };
    Ok((x, c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probes::{BLANK, CTC_CLASSES};
    use nalgebra::DVector;

    fn identity_probe() -> CtcProbe {
        let mut p = CtcProbe::initial(CTC_CLASSES, 0);
        p.weights = DMatrix::identity(CTC_CLASSES, CTC_CLASSES);
        p.bias = DVector::zeros(CTC_CLASSES);
        p
    }

    fn one_hot_frames(ks: &[usize]) -> DMatrix<f32> {
        DMatrix::from_fn(ks.len(), CTC_CLASSES, |i, j| if ks[i] == j { 1.0 } else { 0.0 })
    }

    #[test]
    fn ctc_labels_reproduce_frame_characters() {
        let ks = [7, 7, BLANK, 4, 11, BLANK];
        let d = HiddenStateDump::new("u", 0, one_hot_frames(&ks), "hel");
        let (_, z) = ctc_concept_labels(&identity_probe(), &d, false).unwrap();
        for (i, row) in z.matrix().row_iter().enumerate() {
            assert_eq!(row.sum(), 1.0);
            assert_eq!(row[ks[i]], 1.0);
        }
        let blank = HiddenStateDump::new("b", 0, one_hot_frames(&[BLANK; 4]), "x");
        let (_, z) = ctc_concept_labels(&identity_probe(), &blank, false).unwrap();
        assert!(z.matrix().row_iter().all(|r| r[BLANK] == 1.0));
        let (_, s) = ctc_concept_labels(&identity_probe(), &d, true).unwrap();
        assert!(s.is_soft());
        assert!(s.matrix().row_iter().all(|r| (r.sum() - 1.0).abs() < 1e-12));
        let narrow = HiddenStateDump::new("n", 0, DMatrix::zeros(2, 3), "x");
        assert!(ctc_concept_labels(&identity_probe(), &narrow, false).is_err());
    }

    #[test]
    fn proxy_vocab_orders_by_frequency() {
        let texts = ["What is it?", "what now", "Is this", "The end", "the start", "the middle", "\"Why\" not"];
        let v = ProxyVocab::build(texts.iter().copied());
        assert_eq!(v.words, vec!["the", "what", "is", "why"]);
        assert_eq!(v.class_of("THE cat"), 0);
        assert_eq!(v.class_of("zebra"), ProxyVocab::OTHER);
        let many: Vec<String> = (0..300).map(|i| format!("w{i} x")).collect();
        assert_eq!(ProxyVocab::build(many.iter().map(String::as_str)).words.len(), 158);
    }

    #[test]
    fn concept_rows_follow_frames() {
        let mut d = HiddenStateDump::new("u", 0, DMatrix::from_element(3, 4, 1.0), "ab");
        d.audio_positions = Some(vec![0, 2]);
        d.acoustic_targets = Some(DMatrix::from_row_slice(2, 2, &[-1.0, 100.0, -2.0, 0.0]));
        let (x, z) = boc_concept(&[&d]).unwrap();
        assert_eq!((x.nrows(), z.rows(), z.width()), (2, 2, 48));
        assert_eq!(z.matrix()[(1, 0)], 0.5);
        let (_, a) = acoustic_concept(&[&d]).unwrap();
        assert_eq!(a.matrix().as_slice(), &[100.0, 0.0, -1.0, -2.0]);
        let (_, p) = proxy_concept(&[&d], &ProxyVocab::build(["ab"])).unwrap();
        assert_eq!(p.matrix()[(0, 0)], 1.0);
    }

    #[test]
    fn one_hot_kinds_are_checked() {
        assert!(ConceptMatrix::new(DMatrix::from_element(2, 49, 0.0), ConceptKind::Ctc).is_err());
        assert!(ConceptMatrix::new(DMatrix::from_element(2, 3, 0.0), ConceptKind::Boc).is_err());
        assert!(ConceptMatrix::new(DMatrix::from_element(2, 3, 0.5), ConceptKind::Custom).is_ok());
    }
}
