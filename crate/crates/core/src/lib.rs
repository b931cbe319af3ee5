//! Decoy-state estimation and key-rate analysis for plug-and-play
//! measurement-device-independent QKD, with a channel simulator that produces
//! the measurable statistics and a timing-calibration calculator.

pub mod channel;
pub mod cli;
pub mod data_io;
pub mod decoy;
pub mod fixtures;
pub mod simulate;
pub mod tables;
pub mod timing;

pub use decoy::{
    binary_entropy, e11_upper, estimate_all, key_rate, qm_pair, single_photon_gain, y11_lower,
    DecoyBounds, DecoyError, KeyRateInput, KeyRateResult,
};
pub use tables::{Basis, IntensitySet, Level, MeasuredTables, PartyIntensities};
