// SPDX-License-Identifier: Apache-2.0

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::alphabet::{boc_vector, ALPHABET_SIZE};
use super::ctc_probe::{fit_ctc_probe, CtcProbe, CtcTraining};
use super::ridge::{fit_ridge_probe, r2_scores, Lambda, ProbeData, RidgeProbe};
use super::{probe_frames, SplitSpec};
use crate::data::{DumpSet, HiddenStateDump};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeKind {
    Energy,
    Pitch,
    Boc,
    Ctc,
}

impl ProbeKind {
    pub const ALL: [ProbeKind; 4] = [ProbeKind::Energy, ProbeKind::Pitch, ProbeKind::Boc, ProbeKind::Ctc];

    pub fn name(self) -> &'static str {
        match self {
            ProbeKind::Energy => "energy",
            ProbeKind::Pitch => "pitch",
            ProbeKind::Boc => "boc",
            ProbeKind::Ctc => "ctc",
        }
    }

    /// Score name: R² for the ridge probes, decodability for CTC.
    pub fn metric(self) -> &'static str {
        match self {
            ProbeKind::Ctc => "text_decodability",
            _ => "r2",
        }
    }
}

impl fmt::Display for ProbeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProbeKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ProbeKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::input(format!("unknown probe target {s:?}; expected energy, pitch, boc or ctc")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeOptions {
    pub split: SplitSpec,
    pub lambda: Lambda,
    pub ctc: CtcTraining,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        Self {
            split: SplitSpec::default(),
            lambda: Lambda::Auto,
            ctc: CtcTraining::default(),
        }
    }
}

impl ProbeOptions {
    pub fn with_seed(seed: u64) -> Self {
        let mut o = Self::default();
        o.split.seed = seed;
        o.ctc.seed = seed;
        o
    }
}

/// Acoustic frame matched to hidden position `i` of `t_h` by uniform
/// resampling.
pub fn aligned_frame(i: usize, t_h: usize, t_a: usize) -> usize {
    (((i as f64 + 0.5) * t_a as f64 / t_h as f64).floor() as usize).min(t_a - 1)
}

/// Builds probe rows for the ridge targets. Acoustic probes are frame-level,
/// one row per probed position (pitch keeps voiced frames only); the BoC
/// probe uses one mean-pooled row per utterance.
pub fn ridge_data(dumps: &[&HiddenStateDump], kind: ProbeKind) -> Result<ProbeData> {
    let width = dumps.first().map(|d| d.width()).ok_or_else(|| Error::input("no utterances"))?;
    let mut rows: Vec<f64> = Vec::new();
    let mut targets: Vec<f64> = Vec::new();
    let mut groups = Vec::new();
    let k = match kind {
        ProbeKind::Boc => ALPHABET_SIZE,
        ProbeKind::Energy | ProbeKind::Pitch => 1,
        ProbeKind::Ctc => return Err(Error::input("the CTC probe is not a ridge probe")),
    };
    for (u, d) in dumps.iter().enumerate() {
        let frames = probe_frames(d);
        if kind == ProbeKind::Boc {
            rows.extend(frames.row_mean().iter());
            targets.extend(boc_vector(&d.transcript));
            groups.push(u);
            continue;
        }
        let acoustic = d.acoustic_targets.as_ref().ok_or_else(|| {
            Error::input(format!("utterance {:?} has no acoustic targets", d.utterance_id))
        })?;
        let col = if kind == ProbeKind::Energy { 0 } else { 1 };
        for i in 0..frames.nrows() {
            let v = acoustic[(aligned_frame(i, frames.nrows(), acoustic.nrows()), col)] as f64;
            if kind == ProbeKind::Pitch && v <= 0.0 {
                continue;
            }
            rows.extend(frames.row(i).iter());
            targets.push(v);
            groups.push(u);
        }
    }
    let n = groups.len();
    if n == 0 {
        return Err(Error::input(format!("no usable rows for the {kind} probe")));
    }
    Ok(ProbeData {
        x: DMatrix::from_row_slice(n, width, &rows),
        y: DMatrix::from_row_slice(n, k, &targets),
        groups,
    })
}

#[derive(Clone, Debug)]
pub enum FittedProbe {
    Ridge { kind: ProbeKind, layer: u32, probe: RidgeProbe },
    Ctc { layer: u32, probe: CtcProbe },
}

impl FittedProbe {
    pub fn kind(&self) -> ProbeKind {
        match self {
            FittedProbe::Ridge { kind, .. } => *kind,
            FittedProbe::Ctc { .. } => ProbeKind::Ctc,
        }
    }

    pub fn layer(&self) -> u32 {
        match self {
            FittedProbe::Ridge { layer, .. } | FittedProbe::Ctc { layer, .. } => *layer,
        }
    }

    /// Held-out score: mean R² or decodability.
    pub fn score(&self) -> Option<f64> {
        match self {
            FittedProbe::Ridge { probe, .. } => probe.r2_test.mean,
            FittedProbe::Ctc { probe, .. } => Some(probe.text_decodability).filter(|v| v.is_finite()),
        }
    }

    /// Scores the probe on every utterance of `set` at the probe's layer.
    pub fn evaluate(&self, set: &DumpSet) -> Result<Option<f64>> {
        let dumps = set.at_layer(self.layer())?;
        match self {
            FittedProbe::Ridge { kind, probe, .. } => {
                let data = ridge_data(&dumps, *kind)?;
                if data.x.ncols() != probe.model.weights.nrows() {
                    return Err(Error::Dimension("probe width does not match dump width".into()));
                }
                Ok(r2_scores(&data.y, &probe.model.predict(&data.x)).mean)
            }
            FittedProbe::Ctc { probe, .. } => probe.evaluate(&dumps).map(Some),
        }
    }
}

pub fn fit_probe(set: &DumpSet, layer: u32, kind: ProbeKind, opts: &ProbeOptions) -> Result<FittedProbe> {
    let dumps = set.at_layer(layer)?;
    Ok(match kind {
        ProbeKind::Ctc => FittedProbe::Ctc {
            layer,
            probe: fit_ctc_probe(&dumps, &opts.split, &opts.ctc)?,
        },
        _ => FittedProbe::Ridge {
            kind,
            layer,
            probe: fit_ridge_probe(&ridge_data(&dumps, kind)?, opts.lambda, &opts.split)?,
        },
    })
}

/// Trend of a per-layer series.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveShape {
    Constant,
    Increasing,
    Decreasing,
    NonMonotonic,
    Undefined,
}

/// A named per-layer series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerCurve {
    pub name: String,
    pub metric: String,
    pub layers: Vec<u32>,
    pub values: Vec<Option<f64>>,
}

impl LayerCurve {
    pub fn new(name: impl Into<String>, metric: impl Into<String>, points: Vec<(u32, Option<f64>)>) -> Self {
        let (layers, values) = points.into_iter().unzip();
        Self {
            name: name.into(),
            metric: metric.into(),
            layers,
            values,
        }
    }

    /// Non-strict monotonicity within `tol`; any undefined point makes the
    /// shape undefined.
    pub fn shape(&self, tol: f64) -> CurveShape {
        let Some(v) = self.values.iter().copied().collect::<Option<Vec<f64>>>() else {
            return CurveShape::Undefined;
        };
        let up = v.windows(2).all(|w| w[1] >= w[0] - tol);
        let down = v.windows(2).all(|w| w[1] <= w[0] + tol);
        match (up, down) {
            (true, true) => CurveShape::Constant,
            (true, false) => CurveShape::Increasing,
            (false, true) => CurveShape::Decreasing,
            (false, false) => CurveShape::NonMonotonic,
        }
    }

    pub fn get(&self, layer: u32) -> Option<f64> {
        self.layers.iter().position(|&l| l == layer).and_then(|i| self.values[i])
    }
}

/// Fits one probe per layer, layers in parallel.
pub fn probe_curve(set: &DumpSet, kind: ProbeKind, opts: &ProbeOptions) -> Result<LayerCurve> {
    let layers = set.layers();
    if layers.is_empty() {
        return Err(Error::input("dump has no layers"));
    }
    let scores: Vec<Option<f64>> = layers
        .par_iter()
        .map(|&l| fit_probe(set, l, kind, opts).map(|p| p.score()))
        .collect::<Result<_>>()?;
    Ok(LayerCurve::new(
        kind.name(),
        kind.metric(),
        layers.into_iter().zip(scores).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probes::alphabet::{encode, BLANK, CTC_CLASSES};
    use crate::probes::ctc_probe::tests::random_transcripts;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Text structure mixed with noise; the one-hot signal strength grows
    /// with depth and is absent at layer 0.
    fn layered_set(layers: &[(u32, f32)], n: usize) -> DumpSet {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut dumps = Vec::new();
        for (u, t) in random_transcripts(n, 21).iter().enumerate() {
            let mut rows = Vec::new();
            for s in encode(t) {
                rows.extend([s, s, BLANK]);
            }
            let noise = DMatrix::from_fn(rows.len(), CTC_CLASSES, |_, _| rng.gen_range(-1.0f32..1.0));
            for &(layer, strength) in layers {
                let frames = DMatrix::from_fn(rows.len(), CTC_CLASSES, |i, j| {
                    noise[(i, j)] + if j == rows[i] { strength } else { 0.0 }
                });
                dumps.push(HiddenStateDump::new(format!("u{u}"), layer, frames, t.clone()));
            }
        }
        DumpSet::new(dumps).unwrap()
    }

    #[test]
    fn late_text_structure_gives_rising_ctc_curve() {
        let set = layered_set(&[(0, 0.0), (8, 1.0), (16, 3.0), (24, 8.0)], 40);
        let c = probe_curve(&set, ProbeKind::Ctc, &ProbeOptions::with_seed(1)).unwrap();
        assert_eq!(c.shape(0.02), CurveShape::Increasing, "{:?}", c.values);
        assert!(c.get(24).unwrap() >= 0.9);
        assert!(c.get(0).unwrap() < 0.5);
    }

    #[test]
    fn identical_layers_give_constant_curve() {
        let set = layered_set(&[(0, 2.0), (4, 2.0), (8, 2.0)], 20);
        for kind in [ProbeKind::Boc, ProbeKind::Ctc] {
            let c = probe_curve(&set, kind, &ProbeOptions::with_seed(3)).unwrap();
            assert_eq!(c.shape(0.0), CurveShape::Constant, "{kind}: {:?}", c.values);
        }
    }

    #[test]
    fn whisper_style_dip_is_non_monotonic() {
        let c = LayerCurve::new("ctc", "text_decodability", vec![(0, Some(0.26)), (16, Some(0.16)), (31, Some(0.26))]);
        assert_eq!(c.shape(0.0), CurveShape::NonMonotonic);
    }

    #[test]
    fn acoustic_rows_are_time_aligned() {
        assert_eq!(aligned_frame(0, 2, 10), 2);
        assert_eq!(aligned_frame(1, 2, 10), 7);
        assert_eq!(aligned_frame(4, 5, 5), 4);
        let mut d = HiddenStateDump::new("u", 0, DMatrix::from_element(4, 3, 1.0f32), "hi");
        d.acoustic_targets = Some(DMatrix::from_row_slice(2, 2, &[-3.0f32, 0.0, -2.0, 120.0]));
        let e = ridge_data(&[&d], ProbeKind::Energy).unwrap();
        assert_eq!(e.y.as_slice(), &[-3.0, -3.0, -2.0, -2.0]);
        let p = ridge_data(&[&d], ProbeKind::Pitch).unwrap();
        assert_eq!(p.y.as_slice(), &[120.0, 120.0]);
        let b = ridge_data(&[&d], ProbeKind::Boc).unwrap();
        assert_eq!(b.y.ncols(), 48);
        assert_eq!(b.x.nrows(), 1);
    }

    #[test]
    fn energy_probe_recovers_linear_encoding() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut dumps = Vec::new();
        for u in 0..20 {
            let energy: Vec<f32> = (0..30).map(|_| rng.gen_range(-5.0..0.0)).collect();
            let frames = DMatrix::from_fn(30, 6, |i, j| if j == 0 { energy[i] } else { rng.gen_range(-1.0..1.0) });
            let mut d = HiddenStateDump::new(format!("u{u}"), 0, frames, "x");
            d.acoustic_targets = Some(DMatrix::from_fn(30, 2, |i, j| if j == 0 { energy[i] } else { 0.0 }));
            dumps.push(d);
        }
        let set = DumpSet::new(dumps).unwrap();
        let p = fit_probe(&set, 0, ProbeKind::Energy, &ProbeOptions::default()).unwrap();
        assert!(p.score().unwrap() > 0.99);
        assert!(p.evaluate(&set).unwrap().unwrap() > 0.99);
    }
}
