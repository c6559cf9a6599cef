// SPDX-License-Identifier: Apache-2.0

//! Logit lens: intermediate hidden states pushed through the model's final
//! RMSNorm and unembedding.

use std::collections::{BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{DumpSet, HiddenStateDump, Tensor, TensorContainer};
use crate::probes::LayerCurve;
use crate::{Error, Result};

const LENS_FORMAT: &str = "lens-weights";

/// Leading word-boundary markers used by SentencePiece and byte-level BPE.
pub const BOUNDARY_MARKERS: [char; 2] = ['\u{2581}', '\u{0120}'];

#[derive(Serialize, Deserialize)]
struct LensMeta {
    format: String,
    rms_epsilon: f64,
    vocab: Vec<String>,
    #[serde(default)]
    special_tokens: Vec<u32>,
}

/// Final norm and unembedding of a backbone.
#[derive(Clone, Debug, PartialEq)]
pub struct LensWeights {
    /// `V × d`.
    unembed: DMatrix<f32>,
    rms_gamma: DVector<f32>,
    rms_epsilon: f64,
    vocab: Vec<String>,
    special: HashSet<u32>,
}

impl LensWeights {
    pub fn new(
        unembed: DMatrix<f32>,
        rms_gamma: DVector<f32>,
        rms_epsilon: f64,
        vocab: Vec<String>,
        special_tokens: impl IntoIterator<Item = u32>,
    ) -> Result<Self> {
        let (v, d) = unembed.shape();
        if v == 0 || d == 0 {
            return Err(Error::Dimension("empty unembedding".into()));
        }
        if vocab.len() != v {
            return Err(Error::Dimension(format!("vocab has {} entries, unembedding has {v} rows", vocab.len())));
        }
        if rms_gamma.len() != d {
            return Err(Error::Dimension(format!("gamma has {} entries, hidden width is {d}", rms_gamma.len())));
        }
        if rms_gamma.iter().any(|g| !g.is_finite()) || !(rms_epsilon >= 0.0 && rms_epsilon.is_finite()) {
            return Err(Error::input("RMSNorm gamma and epsilon must be finite"));
        }
        let special: HashSet<u32> = special_tokens.into_iter().collect();
        if let Some(bad) = special.iter().find(|&&s| s as usize >= v) {
            return Err(Error::input(format!("special token id {bad} outside vocabulary")));
        }
        Ok(Self {
            unembed,
            rms_gamma,
            rms_epsilon,
            vocab,
            special,
        })
    }

    pub fn width(&self) -> usize {
        self.unembed.ncols()
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn is_special(&self, id: u32) -> bool {
        self.special.contains(&id)
    }

    pub fn to_container(&self) -> TensorContainer {
        let mut special: Vec<u32> = self.special.iter().copied().collect();
        special.sort_unstable();
        let meta = LensMeta {
            format: LENS_FORMAT.into(),
            rms_epsilon: self.rms_epsilon,
            vocab: self.vocab.clone(),
            special_tokens: special,
        };
        let mut c = TensorContainer::with_metadata(serde_json::to_value(meta).expect("serialisable"));
        c.push(Tensor::from_matrix("unembed", &self.unembed)).expect("unique");
        c.push(Tensor::from_vector("rms_gamma", self.rms_gamma.iter().copied().collect()))
            .expect("unique");
        c
    }

    pub fn from_container(c: &TensorContainer) -> Result<Self> {
        let meta: LensMeta = serde_json::from_value(
            c.metadata().cloned().ok_or_else(|| Error::Container("lens weights without metadata".into()))?,
        )
        .map_err(|e| Error::Container(format!("lens metadata: {e}")))?;
        if meta.format != LENS_FORMAT {
            return Err(Error::Container(format!("expected format {LENS_FORMAT:?}, found {:?}", meta.format)));
        }
        let unembed = c.require("unembed")?.to_matrix()?;
        let gamma = c.require("rms_gamma")?.data().to_vec();
        Self::new(unembed, DVector::from_vec(gamma), meta.rms_epsilon, meta.vocab, meta.special_tokens)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_container(&TensorContainer::read(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_container().write(path)
    }
}

/// `h / sqrt(mean(h²) + ε) ⊙ γ`.
pub fn rmsnorm(h: &[f64], gamma: &[f64], epsilon: f64) -> Result<Vec<f64>> {
    if h.is_empty() || h.len() != gamma.len() {
        return Err(Error::Dimension(format!("rmsnorm over {} values with {} gains", h.len(), gamma.len())));
    }
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite hidden state".into()));
    }
    let ms = h.iter().map(|v| v * v).sum::<f64>() / h.len() as f64;
    let scale = 1.0 / (ms + epsilon).sqrt();
    Ok(h.iter().zip(gamma).map(|(v, g)| v * scale * g).collect())
}

/// Which positions of a dump the lens reads.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Positions {
    All,
    /// The dump's recorded audio positions, or every position if none are
    /// recorded.
    Audio,
    Explicit(Vec<usize>),
}

impl Positions {
    fn select(&self, d: &HiddenStateDump) -> Result<Vec<usize>> {
        let all = || (0..d.positions()).collect();
        Ok(match self {
            Positions::All => all(),
            Positions::Audio => d.audio_positions.clone().unwrap_or_else(all),
            Positions::Explicit(p) => {
                if let Some(bad) = p.iter().find(|&&i| i >= d.positions()) {
                    return Err(Error::Dimension(format!("position {bad} beyond {} positions", d.positions())));
                }
                p.clone()
            }
        })
    }
}

/// Lens logits, `|positions| × V`.
pub fn lens_logits(frames: &DMatrix<f32>, positions: &[usize], w: &LensWeights) -> Result<DMatrix<f32>> {
    if frames.ncols() != w.width() {
        return Err(Error::Dimension(format!(
            "dump width {} does not match lens width {}",
            frames.ncols(),
            w.width()
        )));
    }
    let gamma: Vec<f64> = w.rms_gamma.iter().map(|&g| g as f64).collect();
    let mut normed = DMatrix::<f32>::zeros(w.width(), positions.len());
    for (c, &p) in positions.iter().enumerate() {
        let h: Vec<f64> = frames.row(p).iter().map(|&v| v as f64).collect();
        for (r, v) in rmsnorm(&h, &gamma, w.rms_epsilon)?.into_iter().enumerate() {
            normed[(r, c)] = v as f32;
        }
    }
    Ok((&w.unembed * normed).transpose())
}

/// Argmax per row, lowest id on ties.
fn argmax_rows(logits: &DMatrix<f32>) -> Vec<u32> {
    logits
        .row_iter()
        .map(|r| {
            let mut best = 0usize;
            for (k, &v) in r.iter().enumerate() {
                if v > r[best] {
                    best = k;
                }
            }
            best as u32
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BagOptions {
    /// Count repeated decoded tokens individually instead of deduplicating.
    pub multiset: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LensResult {
    pub utterance_id: String,
    pub layer: u32,
    pub positions: Vec<usize>,
    pub top_tokens: Vec<u32>,
    /// `None` when no non-special token was decoded.
    pub bag_precision: Option<f64>,
}

pub fn logit_lens(d: &HiddenStateDump, w: &LensWeights, positions: &Positions, bag: BagOptions) -> Result<LensResult> {
    let positions = positions.select(d)?;
    let top_tokens = argmax_rows(&lens_logits(&d.frames, &positions, w)?);
    let decoded: Vec<&str> = top_tokens
        .iter()
        .filter(|&&t| !w.is_special(t))
        .map(|&t| w.vocab[t as usize].as_str())
        .collect();
    let segmenter = VocabSegmenter::new(&w.vocab);
    Ok(LensResult {
        utterance_id: d.utterance_id.clone(),
        layer: d.layer_index,
        positions,
        bag_precision: bag_precision(&decoded, &d.transcript, &segmenter, bag),
        top_tokens,
    })
}

/// Lowercase and strip leading boundary markers and surrounding whitespace.
pub fn normalize_token(t: &str) -> String {
    t.trim_start_matches(|c: char| BOUNDARY_MARKERS.contains(&c) || c.is_whitespace())
        .trim_end()
        .to_lowercase()
}

/// Splits each whitespace-separated word by greedy longest match against the
/// normalised vocabulary; characters that match nothing become single-char
/// tokens.
pub struct VocabSegmenter {
    pieces: HashSet<String>,
    longest: usize,
}

impl VocabSegmenter {
    pub fn new(vocab: &[String]) -> Self {
        let pieces: HashSet<String> = vocab.iter().map(|t| normalize_token(t)).filter(|t| !t.is_empty()).collect();
        let longest = pieces.iter().map(|p| p.chars().count()).max().unwrap_or(1);
        Self { pieces, longest }
    }

    /// Whole words only.
    pub fn whitespace() -> Self {
        Self {
            pieces: HashSet::new(),
            longest: 0,
        }
    }

    pub fn segment(&self, text: &str) -> Vec<String> {
        let mut out = Vec::new();
        for word in text.to_lowercase().split_whitespace() {
            if self.longest == 0 || self.pieces.contains(word) {
                out.push(word.to_string());
                continue;
            }
            let chars: Vec<char> = word.chars().collect();
            let mut i = 0;
            while i < chars.len() {
                let mut len = self.longest.min(chars.len() - i);
                while len > 1 && !self.pieces.contains(&chars[i..i + len].iter().collect::<String>()) {
                    len -= 1;
                }
                out.push(chars[i..i + len].iter().collect());
                i += len;
            }
        }
        out
    }
}

/// Fraction of decoded tokens whose normalised form appears among the
/// reference's segmented tokens. Tokens that normalise to nothing are
/// ignored; `None` when nothing remains.
pub fn bag_precision(decoded: &[&str], reference: &str, segmenter: &VocabSegmenter, opts: BagOptions) -> Option<f64> {
    let reference: HashSet<String> = segmenter.segment(reference).into_iter().collect();
    let norm: Vec<String> = decoded.iter().map(|t| normalize_token(t)).filter(|t| !t.is_empty()).collect();
    let bag: Vec<&String> = if opts.multiset {
        norm.iter().collect()
    } else {
        norm.iter().collect::<BTreeSet<_>>().into_iter().collect()
    };
    if bag.is_empty() {
        return None;
    }
    let hits = bag.iter().filter(|t| reference.contains(t.as_str())).count();
    Some(hits as f64 / bag.len() as f64)
}

/// Joins lens tokens into text: collapse consecutive repeats, drop specials,
/// turn boundary markers into spaces, concatenate, then squeeze whitespace.
/// `[he, he, llo]` gives `"hello"`; `[▁he, llo, ▁world]` gives `"hello world"`.
pub fn lens_decode_text(tokens: &[u32], w: &LensWeights) -> String {
    let mut s = String::new();
    let mut prev = None;
    for &t in tokens {
        if Some(t) == prev {
            continue;
        }
        prev = Some(t);
        if w.is_special(t) {
            continue;
        }
        for c in w.vocab[t as usize].chars() {
            s.push(if BOUNDARY_MARKERS.contains(&c) { ' ' } else { c });
        }
    }
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Lens results for every utterance at `layer`, utterances in parallel.
pub fn lens_layer(
    set: &DumpSet,
    layer: u32,
    w: &LensWeights,
    positions: &Positions,
    bag: BagOptions,
) -> Result<Vec<LensResult>> {
    set.at_layer(layer)?
        .par_iter()
        .map(|d| logit_lens(d, w, positions, bag))
        .collect()
}

/// Mean defined bag precision per layer.
pub fn lens_curve(set: &DumpSet, layers: &[u32], w: &LensWeights, positions: &Positions, bag: BagOptions) -> Result<LayerCurve> {
    let mut points = Vec::with_capacity(layers.len());
    for &l in layers {
        let results = lens_layer(set, l, w, positions, bag)?;
        let defined: Vec<f64> = results.iter().filter_map(|r| r.bag_precision).collect();
        let mean = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
        points.push((l, mean));
    }
    Ok(LayerCurve::new("lens", "bag_precision", points))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodedText {
    pub id: String,
    pub decoded_text: String,
}

/// One `{id, decoded_text}` JSON object per line.
pub fn write_decoded_texts(path: impl AsRef<Path>, texts: &[DecodedText]) -> Result<()> {
    let path = path.as_ref();
    let mut f = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    for t in texts {
        serde_json::to_writer(&mut f, t)?;
        f.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    f.flush().map_err(|e| Error::io(path, e))
}

pub fn read_decoded_texts(path: impl AsRef<Path>) -> Result<Vec<DecodedText>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::MalformedLine {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}
