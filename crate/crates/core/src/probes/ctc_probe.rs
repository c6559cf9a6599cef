// SPDX-License-Identifier: Apache-2.0

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::alphabet::{encode, normalize_text, BLANK, CTC_CLASSES};
use super::ctc::{ctc_loss_and_grad, greedy_ctc_decode};
use super::decodability::text_decodability;
use super::{probe_frames, SplitSpec};
use crate::data::HiddenStateDump;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CtcTraining {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Utterances per gradient step.
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for CtcTraining {
    fn default() -> Self {
        Self {
            epochs: 50,
            learning_rate: 0.5,
            batch_size: 8,
            seed: 0,
        }
    }
}

/// Per-frame linear classifier onto the 48 symbols plus blank.
#[derive(Clone, Debug, PartialEq)]
pub struct CtcProbe {
    /// `d × 49`.
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub blank_index: usize,
    /// Mean held-out decodability; NaN until scored.
    pub text_decodability: f64,
    pub train_units: Vec<usize>,
    pub test_units: Vec<usize>,
}

struct Example {
    frames: DMatrix<f64>,
    target: Vec<usize>,
}

fn example(d: &HiddenStateDump) -> Result<Example> {
    let target = encode(&d.transcript);
    if target.is_empty() {
        return Err(Error::input(format!(
            "utterance {:?}: transcript is empty after normalisation",
            d.utterance_id
        )));
    }
    Ok(Example {
        frames: probe_frames(d),
        target,
    })
}

impl CtcProbe {
    /// Seeded random initialisation, `N(0, 0.01²)` weights and zero bias.
    pub fn initial(width: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 0.01).expect("valid normal");
        Self {
            weights: DMatrix::from_fn(width, CTC_CLASSES, |_, _| normal.sample(&mut rng)),
            bias: DVector::zeros(CTC_CLASSES),
            blank_index: BLANK,
            text_decodability: f64::NAN,
            train_units: vec![],
            test_units: vec![],
        }
    }

    pub fn width(&self) -> usize {
        self.weights.nrows()
    }

    pub fn logits(&self, frames: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = frames * &self.weights;
        for mut row in out.row_iter_mut() {
            row += self.bias.transpose();
        }
        out
    }

    pub fn decode(&self, frames: &DMatrix<f64>) -> String {
        greedy_ctc_decode(&self.logits(frames))
    }

    /// Mean decodability of this probe's transcriptions over `dumps`.
    pub fn evaluate(&self, dumps: &[&HiddenStateDump]) -> Result<f64> {
        if dumps.is_empty() {
            return Err(Error::input("no utterances to evaluate"));
        }
        let mut total = 0.0;
        for d in dumps {
            if d.width() != self.width() {
                return Err(Error::Dimension(format!(
                    "probe width {} does not match dump width {}",
                    self.width(),
                    d.width()
                )));
            }
            let reference = normalize_text(&d.transcript);
            total += text_decodability(&self.decode(&probe_frames(d)), &reference)?;
        }
        Ok(total / dumps.len() as f64)
    }

    /// Loss and gradients with respect to the weights and bias.
    fn loss_and_grad(&self, ex: &Example) -> Result<(f64, DMatrix<f64>, DVector<f64>)> {
        let (loss, g) = ctc_loss_and_grad(&self.logits(&ex.frames), &ex.target)?;
        let gw = ex.frames.transpose() * &g;
        let gb = g.row_sum().transpose();
        Ok((loss, gw, gb))
    }
}

/// Trains the linear map only, by minibatch gradient descent with seeded
/// shuffling, and scores decodability on the held-out utterances.
pub fn fit_ctc_probe(dumps: &[&HiddenStateDump], split: &SplitSpec, training: &CtcTraining) -> Result<CtcProbe> {
    let width = dumps
        .first()
        .map(|d| d.width())
        .ok_or_else(|| Error::input("no utterances to probe"))?;
    if dumps.iter().any(|d| d.width() != width) {
        return Err(Error::Dimension("dumps disagree on hidden width".into()));
    }
    if !(training.learning_rate > 0.0 && training.learning_rate.is_finite()) || training.batch_size == 0 {
        return Err(Error::input("learning rate must be positive and batch size nonzero"));
    }
    let (train_units, test_units) = split.split(dumps.len())?;
    if train_units.len() < 2 {
        return Err(Error::input("CTC probe needs at least 2 training utterances"));
    }
    let train: Vec<Example> = train_units.iter().map(|&i| example(dumps[i])).collect::<Result<_>>()?;

    let mut probe = CtcProbe::initial(width, training.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(training.seed ^ 0x5eed_c7c0);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut step = 0usize;
    for _ in 0..training.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(training.batch_size) {
            let mut gw = DMatrix::zeros(width, CTC_CLASSES);
            let mut gb = DVector::zeros(CTC_CLASSES);
            let mut loss = 0.0;
            for &i in batch {
                let (l, w, b) = probe.loss_and_grad(&train[i]).map_err(|e| match e {
                    Error::Numerical(m) => Error::Numerical(format!("CTC probe diverged at step {step}: {m}")),
                    other => other,
                })?;
                loss += l;
                gw += w;
                gb += b;
            }
            let scale = training.learning_rate / batch.len() as f64;
            probe.weights -= gw * scale;
            probe.bias -= gb * scale;
            if !loss.is_finite() || probe.weights.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!("CTC probe diverged at step {step}")));
            }
            step += 1;
        }
    }

    let held_out: Vec<&HiddenStateDump> = test_units.iter().map(|&i| dumps[i]).collect();
    probe.text_decodability = probe.evaluate(&held_out)?;
    probe.train_units = train_units;
    probe.test_units = test_units;
    Ok(probe)
}
