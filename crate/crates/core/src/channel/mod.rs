//! Channel and detector model of the plug-and-play MDI link.
//!
//! Alice and Bob return weak coherent pulses over fibres of length
//! `length_a`, `length_b` to Charlie, who interferes them on a 50:50 beam
//! splitter with output detectors `C` and `D`. Each pulse occupies two time
//! bins (early, late):
//!
//! * Z basis: bit 0 fills the early bin, bit 1 the late bin. With probability
//!   `extinction_error` the pulse leaks into the wrong bin (finite modulator
//!   extinction), which flips the prepared bit.
//! * X basis: both bins with relative phase 0 (bit 0) or π (bit 1).
//!
//! A fraction `misalignment` of Bob's light sits in a mode orthogonal to
//! Alice's and does not interfere, which degrades the two-pulse visibility.
//!
//! Detectors are threshold detectors gated once per time bin. A gate with
//! mean detected photon number `I` fires with probability
//! `1 - (1 - p_dark - p_background) e^{-I}`. A Bell-state measurement is
//! accepted only for the singlet pattern: exactly two clicks, on different
//! detectors in different time bins. An accepted event is an error when
//! Alice's and Bob's encoded bits are equal.
//!
//! Two independent routes produce the same statistics:
//!
//! * [`analytic`] treats each party's pulse as a coherent state with uniformly
//!   random global phase and averages the closed-form click probabilities over
//!   the relative phase;
//! * [`fock`] resolves photon numbers exactly and mixes the per-photon-number
//!   yields with Poisson weights. [`montecarlo`] samples from this route.

pub mod analytic;
pub mod fock;
pub mod montecarlo;

pub use analytic::{analytic_tables, coherent_yield};
pub use fock::{
    click_distribution, photon_number_tables, photon_yield, poisson_cutoff, ClickDistribution,
};
pub use montecarlo::{
    bracketing_audit, mc_bsm_trial, mc_tables, BoundCheck, BracketingAudit, ClickPattern,
    CoincidenceRecord, PulseState, TrueSinglePhotonStats,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tables::Basis;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    #[error("invalid channel parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Charlie–Alice fibre length (km).
    pub length_a: f64,
    /// Charlie–Bob fibre length (km).
    pub length_b: f64,
    /// Fibre loss (dB/km).
    pub attenuation: f64,
    pub detector_efficiency: f64,
    /// Dark-count probability per detector per gate.
    pub dark_count_prob: f64,
    /// Background (Rayleigh backscatter) click probability per detector per gate.
    pub background_prob: f64,
    /// Fraction of Bob's intensity in a mode orthogonal to Alice's.
    pub misalignment: f64,
    /// Probability that a Z-basis pulse is prepared in the wrong time bin.
    pub extinction_error: f64,
}

impl Default for ChannelParams {
    /// Settings close to the 14 km / 22 km field run.
    fn default() -> Self {
        Self {
            length_a: 14.0,
            length_b: 22.0,
            attenuation: 0.2,
            detector_efficiency: 0.1,
            dark_count_prob: 6e-6,
            background_prob: 1e-5,
            misalignment: 0.02,
            extinction_error: 0.008,
        }
    }
}

impl ChannelParams {
    /// Lossless, noiseless, perfectly aligned link with unit-efficiency detectors.
    pub fn ideal() -> Self {
        Self {
            length_a: 0.0,
            length_b: 0.0,
            attenuation: 0.0,
            detector_efficiency: 1.0,
            dark_count_prob: 0.0,
            background_prob: 0.0,
            misalignment: 0.0,
            extinction_error: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        let bad = |name, reason: &str| {
            Err(ChannelError::InvalidParameter {
                name,
                reason: reason.to_string(),
            })
        };
        for (name, v) in [
            ("length_a", self.length_a),
            ("length_b", self.length_b),
            ("attenuation", self.attenuation),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(name, "must be finite and non-negative");
            }
        }
        if !(self.detector_efficiency > 0.0 && self.detector_efficiency <= 1.0) {
            return bad("detector_efficiency", "must lie in (0, 1]");
        }
        for (name, v) in [
            ("dark_count_prob", self.dark_count_prob),
            ("background_prob", self.background_prob),
            ("misalignment", self.misalignment),
            ("extinction_error", self.extinction_error),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(name, "must lie in [0, 1]");
            }
        }
        if self.noise_prob() > 1.0 {
            return bad("background_prob", "dark plus background probability exceeds 1");
        }
        Ok(())
    }

    pub fn transmittance_a(&self) -> f64 {
        10f64.powf(-self.attenuation * self.length_a / 10.0)
    }

    pub fn transmittance_b(&self) -> f64 {
        10f64.powf(-self.attenuation * self.length_b / 10.0)
    }

    /// Per-gate probability of a click without signal light.
    pub fn noise_prob(&self) -> f64 {
        self.dark_count_prob + self.background_prob
    }

    /// Probability that a prepared bit is flipped before transmission.
    pub(crate) fn flip_prob(&self, basis: Basis) -> f64 {
        match basis {
            Basis::Z => self.extinction_error,
            Basis::X => 0.0,
        }
    }
}

/// Real (early, late) amplitudes of the prepared time-bin mode.
pub(crate) fn mode_amplitudes(basis: Basis, bit: u8) -> [f64; 2] {
    match (basis, bit & 1) {
        (Basis::Z, 0) => [1.0, 0.0],
        (Basis::Z, _) => [0.0, 1.0],
        (Basis::X, 0) => [std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2],
        (Basis::X, _) => [std::f64::consts::FRAC_1_SQRT_2, -std::f64::consts::FRAC_1_SQRT_2],
    }
}

/// Detector gate: `C` or `D` in the early or late bin.
pub(crate) const SLOT_COUNT: usize = 4;

/// Bit index of a gate in a [`ClickPattern`] mask: `C` early, `C` late,
/// `D` early, `D` late.
pub(crate) fn slot_index(detector_d: bool, late: bool) -> usize {
    (detector_d as usize) * 2 + late as usize
}

/// Singlet patterns: `C` early with `D` late, or `D` early with `C` late.
pub(crate) const SINGLET_MASKS: [u8; 2] = [
    (1 << 0) | (1 << 3),
    (1 << 2) | (1 << 1),
];

/// The four prepared/flipped bit combinations with their weights.
pub(crate) fn bit_mixture(params: &ChannelParams, basis: Basis) -> Vec<(u8, u8, u8, u8, f64)> {
    let flip = params.flip_prob(basis);
    let mut out = Vec::with_capacity(16);
    for bit_a in 0..2u8 {
        for bit_b in 0..2u8 {
            for flip_a in 0..2u8 {
                for flip_b in 0..2u8 {
                    let w = 0.25
                        * if flip_a == 1 { flip } else { 1.0 - flip }
                        * if flip_b == 1 { flip } else { 1.0 - flip };
                    if w > 0.0 {
                        out.push((bit_a, bit_b, bit_a ^ flip_a, bit_b ^ flip_b, w));
                    }
                }
            }
        }
    }
    out
}

/// Gain and error-gain (accepted-and-wrong probability) of one configuration.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct YieldPair {
    pub gain: f64,
    pub error_gain: f64,
}

impl YieldPair {
    pub fn qber(&self) -> Option<f64> {
        (self.gain > 0.0).then(|| self.error_gain / self.gain)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_transmittances() {
        let p = ChannelParams::default();
        assert!((p.transmittance_a() - 10f64.powf(-0.28)).abs() < 1e-15);
        assert!((p.transmittance_b() - 10f64.powf(-0.44)).abs() < 1e-15);
        assert!(p.validate().is_ok());
        assert!(ChannelParams::ideal().validate().is_ok());
    }

    #[test]
    fn validation_rejects_out_of_range() {
        let mut p = ChannelParams::default();
        p.detector_efficiency = 0.0;
        assert!(p.validate().is_err());
        let mut p = ChannelParams::default();
        p.length_a = -1.0;
        assert!(p.validate().is_err());
        let mut p = ChannelParams::default();
        p.misalignment = 1.5;
        assert!(p.validate().is_err());
        let mut p = ChannelParams::default();
        p.dark_count_prob = 0.7;
        p.background_prob = 0.7;
        assert!(p.validate().is_err());
    }

    #[test]
    fn bit_mixture_weights_sum_to_one() {
        let p = ChannelParams::default();
        for basis in Basis::ALL {
            let total: f64 = bit_mixture(&p, basis).iter().map(|c| c.4).sum();
            assert!((total - 1.0).abs() < 1e-15);
        }
        assert_eq!(bit_mixture(&p, Basis::X).len(), 4);
    }
}
