// SPDX-License-Identifier: Apache-2.0

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::Waveform;
use crate::{Error, Result};

/// Recorded in mixing metadata: how signal and noise power are measured.
pub const POWER_CONVENTION: &str = "mean-square over the full clip (no voice-activity weighting)";

pub fn mean_power(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

/// `10·log10(P_signal / P_noise)` over raw sample slices.
pub fn snr_db(signal: &[f64], noise: &[f64]) -> Result<f64> {
    let (ps, pn) = (mean_power(signal), mean_power(noise));
    if ps == 0.0 || pn == 0.0 {
        return Err(Error::input("SNR undefined for a zero-power input"));
    }
    Ok(10.0 * (ps / pn).log10())
}

pub fn measured_snr(signal: &Waveform, noise: &Waveform) -> Result<f64> {
    snr_db(signal.samples(), noise.samples())
}

/// A mixture together with the components needed to audit it.
#[derive(Clone, Debug)]
pub struct Mixture {
    pub mixture: Waveform,
    /// `gain · noise`, looped to the signal length, before any peak rescaling.
    pub scaled_noise: Vec<f64>,
    pub gain: f64,
    pub noise_offset: usize,
    pub target_snr_db: f64,
    /// SNR of signal against `scaled_noise`.
    pub achieved_snr_db: f64,
    /// Factor applied to the whole mixture to keep it within `[-1, 1]` (1 if none).
    pub rescale: f64,
    pub clipping_avoided: bool,
}

#[derive(Serialize)]
pub struct MixtureReport {
    pub target_snr_db: f64,
    pub achieved_snr_db: f64,
    pub gain: f64,
    pub noise_offset: usize,
    pub rescale: f64,
    pub clipping_avoided: bool,
    pub power_convention: &'static str,
}

impl Mixture {
    pub fn report(&self) -> MixtureReport {
        MixtureReport {
            target_snr_db: self.target_snr_db,
            achieved_snr_db: self.achieved_snr_db,
            gain: self.gain,
            noise_offset: self.noise_offset,
            rescale: self.rescale,
            clipping_avoided: self.clipping_avoided,
            power_convention: POWER_CONVENTION,
        }
    }
}

/// Adds `noise` to `signal` at `snr_db`.
///
/// The noise starts at a seeded uniform offset and loops to cover the
/// signal. It is scaled by `g = sqrt(P_s / (P_n · 10^(snr/10)))`, with both
/// powers taken over the full clip. A mixture that would leave `[-1, 1]` is
/// divided by its peak.
pub fn mix_at_snr(signal: &Waveform, noise: &Waveform, snr_db_target: f64, seed: u64) -> Result<Mixture> {
    if signal.sample_rate() != noise.sample_rate() {
        return Err(Error::input(format!(
            "sample rate mismatch: signal {} Hz, noise {} Hz",
            signal.sample_rate(),
            noise.sample_rate()
        )));
    }
    if !snr_db_target.is_finite() {
        return Err(Error::input("target SNR must be finite"));
    }
    let ps = mean_power(signal.samples());
    if ps == 0.0 {
        return Err(Error::input("signal has zero power"));
    }
    if mean_power(noise.samples()) == 0.0 {
        return Err(Error::input("noise has zero power"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offset = rng.gen_range(0..noise.len());
    let ns = noise.samples();
    let segment: Vec<f64> = (0..signal.len()).map(|i| ns[(offset + i) % ns.len()]).collect();
    let pn = mean_power(&segment);
    if pn == 0.0 {
        return Err(Error::input("noise segment under the signal has zero power"));
    }
    let gain = (ps / (pn * 10f64.powf(snr_db_target / 10.0))).sqrt();
    let scaled_noise: Vec<f64> = segment.iter().map(|v| v * gain).collect();
    let mut mixed: Vec<f64> = signal
        .samples()
        .iter()
        .zip(&scaled_noise)
        .map(|(s, n)| s + n)
        .collect();
    let peak = mixed.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let (rescale, clipping_avoided) = if peak > 1.0 {
        let f = 1.0 / peak;
        mixed.iter_mut().for_each(|v| *v = (*v * f).clamp(-1.0, 1.0));
        (f, true)
    } else {
        (1.0, false)
    };
    let achieved = snr_db(signal.samples(), &scaled_noise)?;
    Ok(Mixture {
        mixture: Waveform::new(mixed, signal.sample_rate())?,
        scaled_noise,
        gain,
        noise_offset: offset,
        target_snr_db: snr_db_target,
        achieved_snr_db: achieved,
        rescale,
        clipping_avoided,
    })
}
