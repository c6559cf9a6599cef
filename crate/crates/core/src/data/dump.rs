// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::container::{Tensor, TensorContainer};
use crate::{Error, Result};

/// Layers probed by default on a 32-block backbone.
pub const DEFAULT_LAYERS: [u32; 9] = [0, 4, 8, 12, 16, 20, 24, 28, 31];

const DUMP_FORMAT: &str = "hidden-states";

/// Hidden states of one utterance at one layer.
#[derive(Clone, Debug, PartialEq)]
pub struct HiddenStateDump {
    pub utterance_id: String,
    pub layer_index: u32,
    /// `T × d`, one row per position.
    pub frames: DMatrix<f32>,
    pub transcript: String,
    /// `T_a × 2` acoustic frames, columns `(energy, pitch)`. `T_a` need not equal `T`.
    pub acoustic_targets: Option<DMatrix<f32>>,
    /// Positions holding audio tokens; `None` means every position.
    pub audio_positions: Option<Vec<usize>>,
}

impl HiddenStateDump {
    pub fn new(
        utterance_id: impl Into<String>,
        layer_index: u32,
        frames: DMatrix<f32>,
        transcript: impl Into<String>,
    ) -> Self {
        Self {
            utterance_id: utterance_id.into(),
            layer_index,
            frames,
            transcript: transcript.into(),
            acoustic_targets: None,
            audio_positions: None,
        }
    }

    pub fn positions(&self) -> usize {
        self.frames.nrows()
    }

    pub fn width(&self) -> usize {
        self.frames.ncols()
    }
}

#[derive(Serialize, Deserialize)]
struct UtteranceMeta {
    id: String,
    transcript: String,
    layers: Vec<u32>,
    #[serde(default)]
    acoustic: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    audio_positions: Option<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct DumpMeta {
    format: String,
    utterances: Vec<UtteranceMeta>,
}

fn hidden_name(utt: &str, layer: u32) -> String {
    format!("hidden/{utt}/{layer}")
}

fn acoustic_name(utt: &str) -> String {
    format!("acoustic/{utt}")
}

/// A validated collection of dumps: every utterance has the same layer set,
/// all layers of an utterance share `T`, and every dump shares `d`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DumpSet {
    dumps: Vec<HiddenStateDump>,
    utterances: Vec<String>,
}

impl DumpSet {
    pub fn new(mut dumps: Vec<HiddenStateDump>) -> Result<Self> {
        let mut utterances: Vec<String> = Vec::new();
        let mut by_utt: BTreeMap<String, Vec<&HiddenStateDump>> = BTreeMap::new();
        for d in &dumps {
            if !by_utt.contains_key(&d.utterance_id) {
                utterances.push(d.utterance_id.clone());
            }
            by_utt.entry(d.utterance_id.clone()).or_default().push(d);
        }
        let mut width = None;
        let mut layer_set: Option<BTreeSet<u32>> = None;
        for (utt, group) in &by_utt {
            let first = group[0];
            if first.positions() == 0 || first.width() == 0 {
                return Err(Error::Dimension(format!("utterance {utt:?}: empty frames")));
            }
            let mut layers = BTreeSet::new();
            for d in group {
                if !layers.insert(d.layer_index) {
                    return Err(Error::input(format!(
                        "utterance {utt:?}: layer {} appears twice",
                        d.layer_index
                    )));
                }
                if d.positions() != first.positions() || d.width() != first.width() {
                    return Err(Error::Dimension(format!(
                        "utterance {utt:?}: layer {} is {}x{}, layer {} is {}x{}",
                        d.layer_index,
                        d.positions(),
                        d.width(),
                        first.layer_index,
                        first.positions(),
                        first.width()
                    )));
                }
                if d.transcript != first.transcript {
                    return Err(Error::input(format!(
                        "utterance {utt:?}: transcript differs across layers"
                    )));
                }
                if let Some(a) = &d.acoustic_targets {
                    if a.ncols() != 2 || a.nrows() == 0 {
                        return Err(Error::Dimension(format!(
                            "utterance {utt:?}: acoustic targets must be T_a x 2"
                        )));
                    }
                }
                if let Some(p) = &d.audio_positions {
                    if p.iter().any(|&i| i >= d.positions()) {
                        return Err(Error::Dimension(format!(
                            "utterance {utt:?}: audio position out of range"
                        )));
                    }
                }
            }
            match width {
                None => width = Some(first.width()),
                Some(w) if w != first.width() => {
                    return Err(Error::Dimension(format!(
                        "utterance {utt:?} has width {}, others have {w}",
                        first.width()
                    )))
                }
                _ => {}
            }
            match &layer_set {
                None => layer_set = Some(layers),
                Some(ls) if *ls != layers => {
                    return Err(Error::input(format!(
                        "layer sets inconsistent across utterances: {utt:?} has {layers:?}, expected {ls:?}"
                    )))
                }
                _ => {}
            }
        }
        let order: BTreeMap<&str, usize> = utterances
            .iter()
            .enumerate()
            .map(|(i, u)| (u.as_str(), i))
            .collect();
        dumps.sort_by_key(|d| (order[d.utterance_id.as_str()], d.layer_index));
        Ok(Self { dumps, utterances })
    }

    pub fn dumps(&self) -> &[HiddenStateDump] {
        &self.dumps
    }

    pub fn utterance_ids(&self) -> &[String] {
        &self.utterances
    }

    pub fn is_empty(&self) -> bool {
        self.dumps.is_empty()
    }

    pub fn layers(&self) -> Vec<u32> {
        self.dumps
            .iter()
            .map(|d| d.layer_index)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn width(&self) -> Option<usize> {
        self.dumps.first().map(|d| d.width())
    }

    /// All utterances at `layer`, in utterance order.
    pub fn at_layer(&self, layer: u32) -> Result<Vec<&HiddenStateDump>> {
        let v: Vec<_> = self.dumps.iter().filter(|d| d.layer_index == layer).collect();
        if v.is_empty() {
            return Err(Error::input(format!("layer {layer} not present in dump")));
        }
        Ok(v)
    }

    /// Rewrites the frames of every dump at `layer`.
    pub fn map_layer(
        &self,
        layer: u32,
        mut f: impl FnMut(&DMatrix<f32>) -> Result<DMatrix<f32>>,
    ) -> Result<Self> {
        let mut out = self.clone();
        for d in out.dumps.iter_mut().filter(|d| d.layer_index == layer) {
            d.frames = f(&d.frames)?;
        }
        Ok(out)
    }

    pub fn to_container(&self) -> TensorContainer {
        let mut metas = Vec::new();
        let mut c = TensorContainer::new();
        for utt in &self.utterances {
            let group: Vec<_> = self.dumps.iter().filter(|d| &d.utterance_id == utt).collect();
            let first = group[0];
            for d in &group {
                c.push(Tensor::from_matrix(hidden_name(utt, d.layer_index), &d.frames))
                    .expect("names unique by construction");
            }
            if let Some(a) = &first.acoustic_targets {
                c.push(Tensor::from_matrix(acoustic_name(utt), a))
                    .expect("names unique by construction");
            }
            metas.push(UtteranceMeta {
                id: utt.clone(),
                transcript: first.transcript.clone(),
                layers: group.iter().map(|d| d.layer_index).collect(),
                acoustic: first.acoustic_targets.is_some(),
                audio_positions: first.audio_positions.clone(),
            });
        }
        c.set_metadata(Some(
            serde_json::to_value(DumpMeta {
                format: DUMP_FORMAT.into(),
                utterances: metas,
            })
            .expect("metadata serialisation cannot fail"),
        ));
        c
    }

    pub fn from_container(c: &TensorContainer) -> Result<Self> {
        let meta: DumpMeta = serde_json::from_value(
            c.metadata()
                .cloned()
                .ok_or_else(|| Error::Container("hidden-state dump without metadata".into()))?,
        )
        .map_err(|e| Error::Container(format!("dump metadata: {e}")))?;
        if meta.format != DUMP_FORMAT {
            return Err(Error::Container(format!(
                "expected format {DUMP_FORMAT:?}, found {:?}",
                meta.format
            )));
        }
        let mut dumps = Vec::new();
        for u in meta.utterances {
            let acoustic = if u.acoustic {
                Some(c.require(&acoustic_name(&u.id))?.to_matrix()?)
            } else {
                None
            };
            for &layer in &u.layers {
                let frames = c.require(&hidden_name(&u.id, layer))?.to_matrix()?;
                dumps.push(HiddenStateDump {
                    utterance_id: u.id.clone(),
                    layer_index: layer,
                    frames,
                    transcript: u.transcript.clone(),
                    acoustic_targets: acoustic.clone(),
                    audio_positions: u.audio_positions.clone(),
                });
            }
        }
        Self::new(dumps)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_container(&TensorContainer::read(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_container().write(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dump(utt: &str, layer: u32, t: usize, d: usize) -> HiddenStateDump {
        let frames = DMatrix::from_fn(t, d, |i, j| (i * 10 + j) as f32 + layer as f32 / 100.0);
        HiddenStateDump::new(utt, layer, frames, format!("text of {utt}"))
    }

    #[test]
    fn container_round_trip() {
        let mut a = dump("u1", 0, 3, 4);
        a.acoustic_targets = Some(DMatrix::from_element(5, 2, 0.5));
        a.audio_positions = Some(vec![0, 2]);
        let mut a4 = dump("u1", 4, 3, 4);
        a4.acoustic_targets = a.acoustic_targets.clone();
        a4.audio_positions = a.audio_positions.clone();
        let set = DumpSet::new(vec![a, a4, dump("u2", 4, 2, 4), dump("u2", 0, 2, 4)]).unwrap();
        assert_eq!(set.layers(), vec![0, 4]);
        let back = DumpSet::from_container(&TensorContainer::from_bytes(&set.to_container().to_bytes()).unwrap()).unwrap();
        assert_eq!(back, set);
    }

    #[test]
    fn shape_contract() {
        let set = DumpSet::new(vec![dump("u", 0, 3, 2), dump("u", 4, 3, 2)]).unwrap();
        let c = set.to_container();
        assert_eq!(c.len(), 2);
        assert!(c.tensors().iter().all(|t| t.shape() == [3, 2]));
    }

    #[test]
    fn inconsistent_sets_are_rejected() {
        assert!(DumpSet::new(vec![dump("u", 0, 3, 2), dump("u", 4, 2, 2)]).is_err());
        assert!(DumpSet::new(vec![dump("u", 0, 3, 2), dump("v", 0, 3, 3)]).is_err());
        let err = DumpSet::new(vec![dump("u", 0, 3, 2), dump("u", 4, 3, 2), dump("v", 0, 3, 2)])
            .unwrap_err();
        assert!(err.to_string().contains("layer sets inconsistent"));
        assert!(DumpSet::new(vec![dump("u", 0, 3, 2), dump("u", 0, 3, 2)]).is_err());
    }

    #[test]
    fn empty_set_round_trips() {
        let set = DumpSet::new(vec![]).unwrap();
        let back = DumpSet::from_container(&set.to_container()).unwrap();
        assert!(back.is_empty());
    }
}
