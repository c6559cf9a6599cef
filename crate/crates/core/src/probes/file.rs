// SPDX-License-Identifier: Apache-2.0

//! Probe files: a tensor container holding the weights and bias plus a JSON
//! metadata entry describing the fit.

use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::alphabet::{BLANK, CTC_CLASSES};
use super::ctc_probe::CtcProbe;
use super::curve::{FittedProbe, ProbeKind};
use super::ridge::{RidgeModel, RidgeProbe, R2};
use crate::data::{Tensor, TensorContainer};
use crate::linalg::{to_f32, to_f64};
use crate::{Error, Result};

const PROBE_FORMAT: &str = "probe";

#[derive(Serialize, Deserialize)]
struct ProbeMeta {
    format: String,
    kind: ProbeKind,
    layer: u32,
    score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    r2_train: Option<R2>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    r2_test: Option<R2>,
    train_units: Vec<usize>,
    test_units: Vec<usize>,
}

impl FittedProbe {
    pub fn to_container(&self) -> TensorContainer {
        let (weights, bias, meta) = match self {
            FittedProbe::Ridge { kind, layer, probe } => (
                &probe.model.weights,
                &probe.model.intercept,
                ProbeMeta {
                    format: PROBE_FORMAT.into(),
                    kind: *kind,
                    layer: *layer,
                    score: probe.r2_test.mean,
                    lambda: Some(probe.model.lambda),
                    r2_train: Some(probe.r2_train.clone()),
                    r2_test: Some(probe.r2_test.clone()),
                    train_units: probe.train_units.clone(),
                    test_units: probe.test_units.clone(),
                },
            ),
            FittedProbe::Ctc { layer, probe } => (
                &probe.weights,
                &probe.bias,
                ProbeMeta {
                    format: PROBE_FORMAT.into(),
                    kind: ProbeKind::Ctc,
                    layer: *layer,
                    score: probe.text_decodability.is_finite().then_some(probe.text_decodability),
                    lambda: None,
                    r2_train: None,
                    r2_test: None,
                    train_units: probe.train_units.clone(),
                    test_units: probe.test_units.clone(),
                },
            ),
        };
        let mut c = TensorContainer::with_metadata(serde_json::to_value(meta).expect("serialisable"));
        c.push(Tensor::from_matrix("weights", &to_f32(weights))).expect("unique");
        c.push(Tensor::from_vector("bias", bias.iter().map(|&v| v as f32).collect()))
            .expect("unique");
        c
    }

    pub fn from_container(c: &TensorContainer) -> Result<Self> {
        let meta: ProbeMeta = serde_json::from_value(
            c.metadata().cloned().ok_or_else(|| Error::Container("probe file without metadata".into()))?,
        )
        .map_err(|e| Error::Container(format!("probe metadata: {e}")))?;
        if meta.format != PROBE_FORMAT {
            return Err(Error::Container(format!("expected format {PROBE_FORMAT:?}, found {:?}", meta.format)));
        }
        let weights = to_f64(&c.require("weights")?.to_matrix()?);
        let bias_t = c.require("bias")?;
        let bias = DVector::from_iterator(bias_t.data().len(), bias_t.data().iter().map(|&v| v as f64));
        if bias.len() != weights.ncols() {
            return Err(Error::Container(format!(
                "bias has {} entries, weights have {} columns",
                bias.len(),
                weights.ncols()
            )));
        }
        Ok(match meta.kind {
            ProbeKind::Ctc => {
                if weights.ncols() != CTC_CLASSES {
                    return Err(Error::Container(format!("CTC probe must have {CTC_CLASSES} outputs")));
                }
                FittedProbe::Ctc {
                    layer: meta.layer,
                    probe: CtcProbe {
                        weights,
                        bias,
                        blank_index: BLANK,
                        text_decodability: meta.score.unwrap_or(f64::NAN),
                        train_units: meta.train_units,
                        test_units: meta.test_units,
                    },
                }
            }
            kind => {
                let missing = || Error::Container("ridge probe metadata incomplete".into());
                FittedProbe::Ridge {
                    kind,
                    layer: meta.layer,
                    probe: RidgeProbe {
                        model: RidgeModel {
                            weights,
                            intercept: bias,
                            lambda: meta.lambda.ok_or_else(missing)?,
                        },
                        r2_train: meta.r2_train.ok_or_else(missing)?,
                        r2_test: meta.r2_test.ok_or_else(missing)?,
                        train_units: meta.train_units,
                        test_units: meta.test_units,
                    },
                }
            }
        })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_container(&TensorContainer::read(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_container().write(path)
    }
}
