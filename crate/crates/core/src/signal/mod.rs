// SPDX-License-Identifier: Apache-2.0

//! Audio-side utilities: noise mixing at a target SNR and the frame-level
//! energy and pitch targets used by the acoustic probes.

mod features;
mod mix;
mod wav;

pub use features::{
    acoustic_series, estimate_pitch, frame_energy, AcousticParams, AcousticSeries, ENERGY_EPSILON,
    VOICING_THRESHOLD,
};
pub use mix::{mean_power, measured_snr, mix_at_snr, snr_db, Mixture, MixtureReport, POWER_CONVENTION};
pub use wav::{decode_wav, encode_wav, read_wav, write_wav, Waveform};
