//! Passive timing calibration of the asymmetric link.
//!
//! Each party's 1550 nm signal is triggered by a 1310 nm synchronisation pulse
//! that made the round trip to the *other* party, so the arrival-time mismatch
//! at Charlie only depends on the dispersion between the two wavelengths times
//! the length asymmetry. Round-trip factors cancel in the difference:
//!
//! ```text
//! Δt = (n_g(1550) - n_g(1310)) / c · (L_B - L_A)            (static offset)
//!    + (n_g(1550) - n_g(1310)) / c · α_T ΔT (L_B - L_A)      (thermal drift)
//! ```
//!
//! The static offset is removed with a delay chip of finite step; what remains
//! is the quantisation residual plus the drift, compared against the pulse
//! width.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Speed of light in vacuum, km per ns.
const C_KM_PER_NS: f64 = 2.997_924_58e-4;
/// Speed of light in vacuum, m per ps.
const C_M_PER_PS: f64 = 2.997_924_58e-4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TimingError {
    #[error("invalid timing parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingParams {
    /// Nominal Charlie–Alice length (km).
    pub length_a0: f64,
    /// Nominal Charlie–Bob length (km).
    pub length_b0: f64,
    pub group_index_1550: f64,
    pub group_index_1310: f64,
    /// Thermal expansion coefficient of the fibre (1/°C).
    pub alpha_t: f64,
    pub delta_t_celsius: f64,
    /// Delay chip step (ps).
    pub delay_resolution: f64,
    /// Signal pulse FWHM (ns).
    pub pulse_width: f64,
}

impl Default for TimingParams {
    fn default() -> Self {
        Self {
            length_a0: 14.0,
            length_b0: 22.0,
            group_index_1550: 1.4682,
            group_index_1310: 1.4672,
            alpha_t: 5.4e-7,
            delta_t_celsius: 10.0,
            delay_resolution: 10.0,
            pulse_width: 2.0,
        }
    }
}

impl TimingParams {
    pub fn validate(&self) -> Result<(), TimingError> {
        let bad = |name, reason: &str| {
            Err(TimingError::InvalidParameter {
                name,
                reason: reason.into(),
            })
        };
        for (name, v) in [
            ("length_a0", self.length_a0),
            ("length_b0", self.length_b0),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(name, "must be finite and non-negative");
            }
        }
        for (name, v) in [
            ("group_index_1550", self.group_index_1550),
            ("group_index_1310", self.group_index_1310),
        ] {
            if !(v.is_finite() && v > 1.0) {
                return bad(name, "must be finite and greater than 1");
            }
        }
        if !(self.alpha_t.is_finite() && self.delta_t_celsius.is_finite()) {
            return bad("alpha_t", "thermal inputs must be finite");
        }
        if !(self.delay_resolution.is_finite() && self.delay_resolution > 0.0) {
            return bad("delay_resolution", "must be positive");
        }
        if !(self.pulse_width.is_finite() && self.pulse_width > 0.0) {
            return bad("pulse_width", "must be positive");
        }
        Ok(())
    }
}

/// `α_T · L⁰ · ΔT` in metres for a length in km.
pub fn thermal_length_change(length0_km: f64, alpha_t: f64, delta_t: f64) -> f64 {
    alpha_t * length0_km * 1_000.0 * delta_t
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrivalTimeDifference {
    /// Static offset (ns).
    pub delta_t0: f64,
    /// Temperature-induced drift (ps).
    pub thermal_term: f64,
}

pub fn arrival_time_difference(params: &TimingParams) -> ArrivalTimeDifference {
    let dispersion = params.group_index_1550 - params.group_index_1310;
    let asymmetry_km = params.length_b0 - params.length_a0;
    let drift_m = thermal_length_change(asymmetry_km, params.alpha_t, params.delta_t_celsius);
    ArrivalTimeDifference {
        delta_t0: dispersion * asymmetry_km / C_KM_PER_NS,
        thermal_term: dispersion * drift_m / C_M_PER_PS,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelaySetting {
    /// Delay-chip steps, rounded half away from zero.
    pub steps: i64,
    /// Offset left after compensation (ps).
    pub residual: f64,
}

/// Quantise an offset in ns onto a delay chip with `resolution` ps steps.
pub fn delay_compensation(delta_t0_ns: f64, resolution_ps: f64) -> DelaySetting {
    let offset_ps = delta_t0_ns * 1_000.0;
    // f64::round rounds half away from zero.
    let steps = (offset_ps / resolution_ps).round();
    DelaySetting {
        steps: steps as i64,
        residual: offset_ps - steps * resolution_ps,
    }
}

/// Default ceiling on mismatch relative to the pulse width.
pub const DEFAULT_OVERLAP_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapVerdict {
    pub mismatch_ratio: f64,
    pub pass: bool,
}

/// `(|residual| + |thermal|) / pulse_width` against `threshold`.
pub fn overlap_check(residual_ps: f64, thermal_ps: f64, pulse_width_ns: f64, threshold: f64) -> OverlapVerdict {
    let mismatch_ratio = (residual_ps.abs() + thermal_ps.abs()) / (pulse_width_ns * 1_000.0);
    OverlapVerdict {
        mismatch_ratio,
        pass: mismatch_ratio < threshold,
    }
}

/// Everything the `timing` subcommand reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub params: TimingParams,
    pub arrival: ArrivalTimeDifference,
    pub delay: DelaySetting,
    pub overlap: OverlapVerdict,
    pub threshold: f64,
}

/// Run the whole calibration. `forced_residual_ps` replaces the quantisation
/// residual, e.g. to model a mis-set delay chip.
pub fn calibrate(
    params: &TimingParams,
    threshold: f64,
    forced_residual_ps: Option<f64>,
) -> Result<TimingReport, TimingError> {
    params.validate()?;
    if !(threshold.is_finite() && threshold > 0.0) {
        return Err(TimingError::InvalidParameter {
            name: "threshold",
            reason: "must be positive".into(),
        });
    }
    let arrival = arrival_time_difference(params);
    let mut delay = delay_compensation(arrival.delta_t0, params.delay_resolution);
    if let Some(r) = forced_residual_ps {
        delay.residual = r;
    }
    let overlap = overlap_check(delay.residual, arrival.thermal_term, params.pulse_width, threshold);
    Ok(TimingReport {
        params: *params,
        arrival,
        delay,
        overlap,
        threshold,
    })
}
