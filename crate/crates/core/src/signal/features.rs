// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use super::Waveform;
use crate::{Error, Result};

/// Floor added to the RMS before taking the log.
pub const ENERGY_EPSILON: f64 = 1e-10;
/// Frames whose best normalised autocorrelation peak is below this are unvoiced.
pub const VOICING_THRESHOLD: f64 = 0.5;
/// Among the candidate peaks, the shortest lag within this fraction of the
/// best peak wins. Keeps a clean periodic signal from locking onto a multiple
/// of its period.
const OCTAVE_TOLERANCE: f64 = 0.9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcousticParams {
    /// Seconds.
    pub frame_length: f64,
    /// Seconds.
    pub hop: f64,
    pub f_min: f64,
    pub f_max: f64,
}

impl Default for AcousticParams {
    fn default() -> Self {
        Self {
            frame_length: 0.025,
            hop: 0.010,
            f_min: 50.0,
            f_max: 400.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcousticSeries {
    pub frame_length: f64,
    pub hop: f64,
    /// Natural log of `RMS + ε` per frame.
    pub energy: Vec<f64>,
    /// Hz per frame, 0 when unvoiced.
    pub pitch: Vec<f64>,
}

struct Frames {
    len: usize,
    hop: usize,
    count: usize,
}

fn frames(w: &Waveform, frame_length: f64, hop: f64) -> Result<Frames> {
    if !(hop > 0.0 && frame_length >= hop) {
        return Err(Error::input(format!(
            "need frame_length >= hop > 0, got frame_length={frame_length}, hop={hop}"
        )));
    }
    let sr = w.sample_rate() as f64;
    let len = (frame_length * sr).round() as usize;
    let hop = ((hop * sr).round() as usize).max(1);
    if len == 0 {
        return Err(Error::input("frame shorter than one sample"));
    }
    if w.len() < len {
        return Err(Error::input(format!(
            "audio of {} samples is shorter than one {len}-sample frame",
            w.len()
        )));
    }
    Ok(Frames {
        len,
        hop,
        count: (w.len() - len) / hop + 1,
    })
}

pub fn frame_energy(w: &Waveform, frame_length: f64, hop: f64) -> Result<Vec<f64>> {
    let f = frames(w, frame_length, hop)?;
    let x = w.samples();
    Ok((0..f.count)
        .map(|i| {
            let frame = &x[i * f.hop..i * f.hop + f.len];
            let rms = (frame.iter().map(|v| v * v).sum::<f64>() / f.len as f64).sqrt();
            (rms + ENERGY_EPSILON).ln()
        })
        .collect())
}

fn normalized_autocorrelation(frame: &[f64], lag: usize) -> f64 {
    let (mut xy, mut xx, mut yy) = (0.0, 0.0, 0.0);
    for i in 0..frame.len() - lag {
        let (a, b) = (frame[i], frame[i + lag]);
        xy += a * b;
        xx += a * a;
        yy += b * b;
    }
    let denom = (xx * yy).sqrt();
    if denom <= f64::MIN_POSITIVE {
        0.0
    } else {
        xy / denom
    }
}

fn frame_pitch(frame: &[f64], sr: f64, min_lag: usize, max_lag: usize, f_min: f64, f_max: f64) -> f64 {
    // r[k] holds the correlation at lag min_lag - 1 + k, so every candidate has
    // both neighbours.
    let r: Vec<f64> = (min_lag - 1..=max_lag + 1)
        .map(|lag| normalized_autocorrelation(frame, lag))
        .collect();
    let peaks: Vec<usize> = (1..r.len() - 1)
        .filter(|&k| r[k] > r[k - 1] && r[k] >= r[k + 1])
        .collect();
    let best = peaks.iter().map(|&k| r[k]).fold(f64::NEG_INFINITY, f64::max);
    if !(best >= VOICING_THRESHOLD) {
        return 0.0;
    }
    let k = *peaks
        .iter()
        .find(|&&k| r[k] >= OCTAVE_TOLERANCE * best)
        .expect("best peak qualifies");
    let (a, b, c) = (r[k - 1], r[k], r[k + 1]);
    let curvature = a - 2.0 * b + c;
    let shift = if curvature < 0.0 {
        (0.5 * (a - c) / curvature).clamp(-0.5, 0.5)
    } else {
        0.0
    };
    let lag = (min_lag - 1 + k) as f64 + shift;
    (sr / lag).clamp(f_min, f_max)
}

/// Fundamental frequency per frame by normalised autocorrelation, searching
/// only lags in `[sr/f_max, sr/f_min]`. Peaks on the edge of that range do
/// not count, so a tone below `f_min` reads as unvoiced rather than as a
/// spurious in-range pitch.
pub fn estimate_pitch(w: &Waveform, frame_length: f64, hop: f64, f_min: f64, f_max: f64) -> Result<Vec<f64>> {
    let sr = w.sample_rate() as f64;
    if !(f_min > 0.0 && f_min < f_max && f_max < sr / 2.0) {
        return Err(Error::input(format!(
            "need 0 < f_min < f_max < sr/2, got f_min={f_min}, f_max={f_max}, sr={sr}"
        )));
    }
    let f = frames(w, frame_length, hop)?;
    let min_lag = ((sr / f_max).ceil() as usize).max(2);
    let max_lag = (sr / f_min).floor() as usize;
    if max_lag + 2 > f.len {
        return Err(Error::input(format!(
            "{}-sample window cannot hold one {f_min} Hz period ({max_lag} samples)",
            f.len
        )));
    }
    let x = w.samples();
    Ok((0..f.count)
        .map(|i| frame_pitch(&x[i * f.hop..i * f.hop + f.len], sr, min_lag, max_lag, f_min, f_max))
        .collect())
}

pub fn acoustic_series(w: &Waveform, p: &AcousticParams) -> Result<AcousticSeries> {
    Ok(AcousticSeries {
        frame_length: p.frame_length,
        hop: p.hop,
        energy: frame_energy(w, p.frame_length, p.hop)?,
        pitch: estimate_pitch(w, p.frame_length, p.hop, p.f_min, p.f_max)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    const SR: u32 = 16_000;

    fn tone(freq: f64, amp: f64, secs: f64) -> Waveform {
        let n = (secs * SR as f64) as usize;
        Waveform::new(
            (0..n).map(|i| amp * (2.0 * PI * freq * i as f64 / SR as f64).sin()).collect(),
            SR,
        )
        .unwrap()
    }

    #[test]
    fn constant_signal_energy() {
        let w = Waveform::new(vec![0.3; 1600], SR).unwrap();
        let e = frame_energy(&w, 0.025, 0.010).unwrap();
        assert_eq!(e.len(), (1600 - 400) / 160 + 1);
        assert!(e.iter().all(|v| (v - (0.3f64 + ENERGY_EPSILON).ln()).abs() < 1e-12));
    }

    #[test]
    fn sine_energy_is_log_root_half() {
        // 400-sample frames hold exactly 10 periods of a 400 Hz tone.
        let e = frame_energy(&tone(400.0, 1.0, 0.2), 0.025, 0.010).unwrap();
        assert!(e.iter().all(|v| (v - 0.5f64.sqrt().ln()).abs() < 1e-9));
    }

    #[test]
    fn silence_is_log_epsilon_and_unvoiced() {
        let w = Waveform::new(vec![0.0; 4000], SR).unwrap();
        assert!(frame_energy(&w, 0.025, 0.010).unwrap().iter().all(|&v| v == ENERGY_EPSILON.ln()));
        assert!(estimate_pitch(&w, 0.025, 0.010, 50.0, 400.0).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sine_220_hz() {
        let p = estimate_pitch(&tone(220.0, 0.8, 0.5), 0.025, 0.010, 50.0, 400.0).unwrap();
        for &f in &p[1..p.len() - 1] {
            assert!((f - 220.0).abs() <= 1.0, "{f}");
        }
    }

    #[test]
    fn tone_below_f_min_is_never_reported_at_its_frequency() {
        let p = estimate_pitch(&tone(100.0, 0.8, 0.5), 0.025, 0.010, 120.0, 400.0).unwrap();
        for &f in &p {
            assert!(f == 0.0 || (f - 100.0).abs() > 5.0, "{f}");
            assert!(f == 0.0 || (120.0..=400.0).contains(&f));
        }
    }

    #[test]
    fn amplitude_scaling() {
        let w = tone(180.0, 0.9, 0.3);
        let p = estimate_pitch(&w, 0.025, 0.010, 50.0, 400.0).unwrap();
        let e = frame_energy(&w, 0.025, 0.010).unwrap();
        for c in [0.5, 0.3, 0.01] {
            let scaled = Waveform::new(w.samples().iter().map(|v| v * c).collect(), SR).unwrap();
            let ps = estimate_pitch(&scaled, 0.025, 0.010, 50.0, 400.0).unwrap();
            let es = frame_energy(&scaled, 0.025, 0.010).unwrap();
            for (a, b) in p.iter().zip(&ps) {
                assert!((a - b).abs() < 1e-9);
            }
            for (a, b) in e.iter().zip(&es) {
                assert!((b - a - f64::ln(c)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn argument_errors() {
        let w = tone(200.0, 0.5, 0.1);
        assert!(frame_energy(&w, 0.01, 0.02).is_err());
        assert!(frame_energy(&Waveform::new(vec![0.1; 100], SR).unwrap(), 0.025, 0.01).is_err());
        assert!(estimate_pitch(&w, 0.025, 0.010, 400.0, 50.0).is_err());
        assert!(estimate_pitch(&w, 0.025, 0.010, 50.0, 9000.0).is_err());
        assert!(estimate_pitch(&w, 0.010, 0.010, 50.0, 400.0).is_err());
    }
}
