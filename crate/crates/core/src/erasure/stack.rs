// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::concept::{acoustic_concept, boc_concept, ctc_concept, proxy_concept, ConceptKind, ConceptMatrix, ProxyVocab};
use super::leace::{fit_leace, Eraser, Shrinkage};
use crate::data::{DumpSet, HiddenStateDump, Tensor, TensorContainer};
use crate::linalg::{to_f32, to_f64};
use crate::probes::CtcProbe;
use crate::{Error, Result};

const STACK_FORMAT: &str = "eraser-stack";

fn tensor_name(layer: u32) -> String {
    format!("P_e.{layer}")
}

#[derive(Serialize, Deserialize)]
struct LayerMeta {
    layer: u32,
    n: usize,
    shrinkage: f64,
    rank: usize,
}

#[derive(Serialize, Deserialize)]
struct StackMeta {
    format: String,
    concept: ConceptKind,
    concept_dim: usize,
    layers: Vec<LayerMeta>,
}

/// One eraser per probed layer, applied jointly.
#[derive(Clone, Debug, PartialEq)]
pub struct EraserStack {
    erasers: BTreeMap<u32, Eraser>,
}

impl EraserStack {
    pub fn new(erasers: impl IntoIterator<Item = (u32, Eraser)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        let mut kind = None;
        for (layer, mut e) in erasers {
            e.layer = Some(layer);
            match kind {
                None => kind = Some((e.concept_kind, e.concept_dim)),
                Some(k) if k != (e.concept_kind, e.concept_dim) => {
                    return Err(Error::input("stack mixes concepts"));
                }
                _ => {}
            }
            if map.insert(layer, e).is_some() {
                return Err(Error::input(format!("layer {layer} appears twice in stack")));
            }
        }
        if map.is_empty() {
            return Err(Error::input("empty eraser stack"));
        }
        Ok(Self { erasers: map })
    }

    pub fn layers(&self) -> Vec<u32> {
        self.erasers.keys().copied().collect()
    }

    pub fn get(&self, layer: u32) -> Option<&Eraser> {
        self.erasers.get(&layer)
    }

    pub fn erasers(&self) -> impl Iterator<Item = (u32, &Eraser)> {
        self.erasers.iter().map(|(l, e)| (*l, e))
    }

    pub fn concept_kind(&self) -> ConceptKind {
        self.erasers.values().next().expect("nonempty").concept_kind
    }

    /// Erases every covered layer of `set`; the stack must cover exactly the
    /// dump's layers.
    pub fn apply(&self, set: &DumpSet) -> Result<DumpSet> {
        if set.layers() != self.layers() {
            return Err(Error::input(format!(
                "stack covers layers {:?}, dump has {:?}",
                self.layers(),
                set.layers()
            )));
        }
        let mut out = set.clone();
        for (layer, e) in &self.erasers {
            out = out.map_layer(*layer, |f| e.apply_f32(f))?;
        }
        Ok(out)
    }

    pub fn to_container(&self) -> TensorContainer {
        let first = self.erasers.values().next().expect("nonempty");
        let meta = StackMeta {
            format: STACK_FORMAT.into(),
            concept: first.concept_kind,
            concept_dim: first.concept_dim,
            layers: self
                .erasers
                .iter()
                .map(|(l, e)| LayerMeta {
                    layer: *l,
                    n: e.n,
                    shrinkage: e.shrinkage,
                    rank: e.rank,
                })
                .collect(),
        };
        let mut c = TensorContainer::with_metadata(serde_json::to_value(meta).expect("serialisable"));
        for (l, e) in &self.erasers {
            c.push(Tensor::from_matrix(tensor_name(*l), &to_f32(&e.projection))).expect("unique");
        }
        c
    }

    pub fn from_container(c: &TensorContainer) -> Result<Self> {
        let meta: StackMeta = serde_json::from_value(
            c.metadata().cloned().ok_or_else(|| Error::Container("eraser stack without metadata".into()))?,
        )
        .map_err(|e| Error::Container(format!("eraser metadata: {e}")))?;
        if meta.format != STACK_FORMAT {
            return Err(Error::Container(format!("expected format {STACK_FORMAT:?}, found {:?}", meta.format)));
        }
        if c.len() != meta.layers.len() {
            return Err(Error::Container("eraser tensors do not match the listed layers".into()));
        }
        let mut erasers = Vec::new();
        for l in meta.layers {
            let p = to_f64(&c.require(&tensor_name(l.layer))?.to_matrix()?);
            if p.nrows() != p.ncols() {
                return Err(Error::Container(format!("eraser for layer {} is not square", l.layer)));
            }
            erasers.push((
                l.layer,
                Eraser {
                    projection: p,
                    concept_kind: meta.concept,
                    concept_dim: meta.concept_dim,
                    layer: Some(l.layer),
                    n: l.n,
                    shrinkage: l.shrinkage,
                    rank: l.rank,
                },
            ));
        }
        Self::new(erasers)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_container(&TensorContainer::read(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_container().write(path)
    }
}

/// Where concept rows come from when building a stack.
#[derive(Clone, Debug)]
pub enum ConceptSource {
    Boc,
    /// First-word classes; `None` builds the vocabulary from the dump.
    Proxy(Option<ProxyVocab>),
    Acoustic,
    /// Per-frame predictions of a CTC probe trained at each layer.
    Ctc { probes: BTreeMap<u32, CtcProbe>, soft: bool },
}

impl ConceptSource {
    pub fn kind(&self) -> ConceptKind {
        match self {
            ConceptSource::Boc => ConceptKind::Boc,
            ConceptSource::Proxy(_) => ConceptKind::Proxy,
            ConceptSource::Acoustic => ConceptKind::Acoustic,
            ConceptSource::Ctc { .. } => ConceptKind::Ctc,
        }
    }

    pub fn rows(&self, layer: u32, dumps: &[&HiddenStateDump]) -> Result<(DMatrix<f64>, ConceptMatrix)> {
        match self {
            ConceptSource::Boc => boc_concept(dumps),
            ConceptSource::Proxy(v) => {
                let built;
                let vocab = match v {
                    Some(v) => v,
                    None => {
                        built = ProxyVocab::build(dumps.iter().map(|d| d.transcript.as_str()));
                        &built
                    }
                };
                proxy_concept(dumps, vocab)
            }
            ConceptSource::Acoustic => acoustic_concept(dumps),
            ConceptSource::Ctc { probes, soft } => {
                let p = probes
                    .get(&layer)
                    .ok_or_else(|| Error::input(format!("no CTC probe for layer {layer}")))?;
                ctc_concept(p, dumps, *soft)
            }
        }
    }
}

/// Fits one eraser per layer of `set` (layers in parallel).
pub fn build_stack(set: &DumpSet, source: &ConceptSource, shrinkage: Shrinkage) -> Result<EraserStack> {
    build_stack_with(set, shrinkage, |layer, dumps| source.rows(layer, dumps))
}

pub fn build_stack_with<F>(set: &DumpSet, shrinkage: Shrinkage, concept: F) -> Result<EraserStack>
where
    F: Fn(u32, &[&HiddenStateDump]) -> Result<(DMatrix<f64>, ConceptMatrix)> + Sync,
{
    let layers = set.layers();
    if layers.is_empty() {
        return Err(Error::input("dump has no layers"));
    }
    let erasers: Vec<(u32, Eraser)> = layers
        .par_iter()
        .map(|&l| {
            let dumps = set.at_layer(l)?;
            let (x, z) = concept(l, &dumps)?;
            Ok((l, fit_leace(&x, &z, shrinkage)?))
        })
        .collect::<Result<_>>()?;
    EraserStack::new(erasers)
}

/// Random controls matched in width and erased dimension, one per layer with
/// independent seeds.
pub fn random_stack(layers: &[u32], d: usize, k: usize, seed: u64) -> Result<EraserStack> {
    let erasers = layers
        .iter()
        .enumerate()
        .map(|(i, &l)| Ok((l, super::leace::random_eraser(d, k, seed.wrapping_add(i as u64))?)))
        .collect::<Result<Vec<_>>>()?;
    EraserStack::new(erasers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::DEFAULT_LAYERS;
    use crate::probes::{fit_ctc_probe, CtcTraining, SplitSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn synthetic(layers: &[u32], d: usize) -> DumpSet {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let words = ["alpha", "beta", "gamma", "delta", "omega"];
        let mut dumps = Vec::new();
        for u in 0..12 {
            let t = format!("{} {}", words[u % 5], words[(u * 3 + 1) % 5]);
            for &l in layers {
                let frames = DMatrix::from_fn(40, d, |_, _| rng.gen_range(-1.0f32..1.0));
                let mut dump = HiddenStateDump::new(format!("u{u}"), l, frames, t.clone());
                dump.acoustic_targets = Some(DMatrix::from_fn(5, 2, |_, _| rng.gen_range(0.0f32..1.0)));
                dumps.push(dump);
            }
        }
        DumpSet::new(dumps).unwrap()
    }

    #[test]
    fn nine_layer_stack_round_trips() {
        let set = synthetic(&DEFAULT_LAYERS, 64);
        let stack = build_stack(&set, &ConceptSource::Boc, Shrinkage::Auto).unwrap();
        assert_eq!(stack.layers(), DEFAULT_LAYERS.to_vec());
        let c = stack.to_container();
        assert!(c.get("P_e.31").is_some());
        let back = EraserStack::from_container(&TensorContainer::from_bytes(&c.to_bytes()).unwrap()).unwrap();
        assert_eq!(back.layers(), stack.layers());
        for (l, e) in back.erasers() {
            assert!((&e.projection - &stack.get(l).unwrap().projection).amax() < 1e-5);
            assert_eq!(e.concept_kind, ConceptKind::Boc);
        }
        let erased = stack.apply(&set).unwrap();
        assert_eq!(erased.layers(), set.layers());
    }

    #[test]
    fn single_layer_stack_is_plain_fit() {
        let set = synthetic(&[8], 60);
        let stack = build_stack(&set, &ConceptSource::Acoustic, Shrinkage::Auto).unwrap();
        let (x, z) = acoustic_concept(&set.at_layer(8).unwrap()).unwrap();
        assert_eq!(stack.get(8).unwrap().projection, fit_leace(&x, &z, Shrinkage::Auto).unwrap().projection);
    }

    #[test]
    fn other_sources_build() {
        let set = synthetic(&[0, 4], 200);
        let proxy = build_stack(&set, &ConceptSource::Proxy(None), Shrinkage::Auto).unwrap();
        assert_eq!(proxy.concept_kind(), ConceptKind::Proxy);
        let mut probes = BTreeMap::new();
        for l in [0, 4] {
            let cfg = CtcTraining { epochs: 1, ..Default::default() };
            probes.insert(l, fit_ctc_probe(&set.at_layer(l).unwrap(), &SplitSpec::default(), &cfg).unwrap());
        }
        let ctc = build_stack(&set, &ConceptSource::Ctc { probes, soft: false }, Shrinkage::Auto).unwrap();
        assert_eq!(ctc.get(4).unwrap().concept_dim, 49);
        assert!(build_stack(&set, &ConceptSource::Ctc { probes: BTreeMap::new(), soft: false }, Shrinkage::Auto).is_err());
    }

    #[test]
    fn stack_must_cover_dump_layers() {
        let set = synthetic(&[0, 4], 64);
        let partial = random_stack(&[0], 64, 3, 1).unwrap();
        assert!(partial.apply(&set).is_err());
        let full = random_stack(&[0, 4], 64, 3, 1).unwrap();
        assert_ne!(full.get(0).unwrap().projection, full.get(4).unwrap().projection);
        assert!(full.apply(&set).is_ok());
    }
}
