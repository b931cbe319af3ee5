//! Two-decoy analytical bounds and the asymptotic MDI key rate.
//!
//! Everything here is a pure function over [`MeasuredTables`] and an
//! [`IntensitySet`]. The pipeline is:
//!
//! 1. [`qm_pair`] folds the four `{nu, omega}` and `{mu, omega}` corner gains
//!    of a table into the combined quantities `Q^M1`, `Q^M2`;
//! 2. [`y11_lower`] turns them into a lower bound on the single-photon-pair
//!    yield (per basis);
//! 3. [`e11_upper`] bounds the single-photon X-basis error rate;
//! 4. [`key_rate`] evaluates
//!    `R = q { Q11 [1 - H(e11)] - Q_mumu f H(E_mumu) }` on the Z-basis signal
//!    cell, with `Q11 = mu_a mu_b e^-(mu_a+mu_b) Y11`.
//!
//! Bounds are clamped into their physical range (`Y11 ∈ [0,1]`,
//! `e11 ∈ [0,0.5]`) and the unclamped values are kept in [`DecoyBounds`].

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tables::{Basis, IntensitySet, Level, MeasuredTables};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DecoyError {
    #[error("invalid intensities for {party}: {reason}")]
    InvalidIntensities { party: &'static str, reason: String },
    #[error("degenerate intensities for {party}: adjacent levels are equal, bound denominator vanishes")]
    DegenerateIntensities { party: &'static str },
    #[error("{what} = {value} is outside [0, 1]")]
    Domain { what: &'static str, value: f64 },
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("e11 upper bound undefined: X-basis single-photon yield lower bound is zero")]
    UndefinedE11Bound,
    #[error("{basis}-basis table passed where {expected}-basis table is required")]
    WrongBasis { basis: Basis, expected: Basis },
}

impl DecoyError {
    /// True when the inputs are well-formed but admit no usable bound.
    pub fn is_degenerate(&self) -> bool {
        matches!(
            self,
            DecoyError::DegenerateIntensities { .. } | DecoyError::UndefinedE11Bound
        )
    }
}

/// Pipeline step at which an [`estimate_all`] failure occurred.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    QmPair(Basis),
    Y11Lower(Basis),
    E11Upper,
    KeyRate,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stage::QmPair(b) => write!(f, "qm_pair({b})"),
            Stage::Y11Lower(b) => write!(f, "y11_lower({b})"),
            Stage::E11Upper => f.write_str("e11_upper(X)"),
            Stage::KeyRate => f.write_str("key_rate"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{stage}: {source}")]
pub struct PipelineError {
    pub stage: Stage,
    #[source]
    pub source: DecoyError,
}

impl PipelineError {
    pub fn is_degenerate(&self) -> bool {
        self.source.is_degenerate()
    }
}

trait AtStage<T> {
    fn at(self, stage: Stage) -> Result<T, PipelineError>;
}

impl<T> AtStage<T> for Result<T, DecoyError> {
    fn at(self, stage: Stage) -> Result<T, PipelineError> {
        self.map_err(|source| PipelineError { stage, source })
    }
}

/// Binary Shannon entropy in bits, with `0 log 0 = 0`.
pub fn binary_entropy(p: f64) -> Result<f64, DecoyError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(DecoyError::Domain {
            what: "entropy argument",
            value: p,
        });
    }
    if p == 0.0 || p == 1.0 {
        return Ok(0.0);
    }
    Ok(-p * p.log2() - (1.0 - p) * (1.0 - p).log2())
}

/// Weighted corner combination `Σ ± Q^{ab} e^{a+b}` over two Alice levels and
/// two Bob levels, with `value` picking what is summed for each cell.
fn corner_sum(
    intensities: &IntensitySet,
    high: Level,
    low: Level,
    value: impl Fn(Level, Level) -> f64,
) -> f64 {
    let term = |a: Level, b: Level| {
        let (ia, ib) = intensities.pair(a, b);
        value(a, b) * (ia + ib).exp()
    };
    term(high, high) + term(low, low) - term(high, low) - term(low, high)
}

/// `(Q^M1, Q^M2)` for one basis. Negative values are passed through.
pub fn qm_pair(tables: &MeasuredTables, intensities: &IntensitySet) -> (f64, f64) {
    let gain = |a, b| tables.gain(a, b);
    let qm1 = corner_sum(intensities, Level::Nu, Level::Omega, gain);
    let qm2 = corner_sum(intensities, Level::Mu, Level::Omega, gain);
    (qm1, qm2)
}

fn y11_parts(qm1: f64, qm2: f64, intensities: &IntensitySet) -> Result<f64, DecoyError> {
    let a = intensities.alice();
    let b = intensities.bob();
    let denominator = (a.mu - a.omega)
        * (b.mu - b.omega)
        * (a.nu - a.omega)
        * (b.nu - b.omega)
        * (a.mu - a.nu);
    if denominator <= 0.0 || !denominator.is_finite() {
        let party = if a.mu == a.nu || a.nu == a.omega {
            "alice"
        } else {
            "bob"
        };
        return Err(DecoyError::DegenerateIntensities { party });
    }
    let numerator = (a.mu * a.mu - a.omega * a.omega) * (b.mu - b.omega) * qm1
        - (a.nu * a.nu - a.omega * a.omega) * (b.nu - b.omega) * qm2;
    Ok(numerator / denominator)
}

/// Unclamped single-photon-pair yield estimate.
pub fn y11_lower_unclamped(
    qm1: f64,
    qm2: f64,
    intensities: &IntensitySet,
) -> Result<f64, DecoyError> {
    y11_parts(qm1, qm2, intensities)
}

/// Lower bound on `Y11`, clamped into `[0, 1]`.
pub fn y11_lower(qm1: f64, qm2: f64, intensities: &IntensitySet) -> Result<f64, DecoyError> {
    Ok(y11_parts(qm1, qm2, intensities)?.clamp(0.0, 1.0))
}

/// Unclamped `e11` upper bound from the X-basis `Q·E` corner products.
pub fn e11_upper_unclamped(
    tables_x: &MeasuredTables,
    intensities: &IntensitySet,
    y11_x_lower: f64,
) -> Result<f64, DecoyError> {
    if tables_x.basis != Basis::X {
        return Err(DecoyError::WrongBasis {
            basis: tables_x.basis,
            expected: Basis::X,
        });
    }
    if y11_x_lower.is_nan() || y11_x_lower <= 0.0 {
        return Err(DecoyError::UndefinedE11Bound);
    }
    let a = intensities.alice();
    let b = intensities.bob();
    let denominator = (a.nu - a.omega) * (b.nu - b.omega) * y11_x_lower;
    if denominator <= 0.0 {
        let party = if a.nu == a.omega { "alice" } else { "bob" };
        return Err(DecoyError::DegenerateIntensities { party });
    }
    let error_gain = |l: Level, r: Level| tables_x.gain(l, r) * tables_x.qber(l, r);
    Ok(corner_sum(intensities, Level::Nu, Level::Omega, error_gain) / denominator)
}

/// Upper bound on the single-photon X-basis error rate, clamped to `[0, 0.5]`.
pub fn e11_upper(
    tables_x: &MeasuredTables,
    intensities: &IntensitySet,
    y11_x_lower: f64,
) -> Result<f64, DecoyError> {
    Ok(e11_upper_unclamped(tables_x, intensities, y11_x_lower)?.clamp(0.0, 0.5))
}

/// `mu^2 e^{-2 mu} Y11`: the (1,1) photon-number share of the signal gain.
pub fn single_photon_gain(mu: f64, y11: f64) -> f64 {
    single_photon_gain_pair(mu, mu, y11)
}

/// Asymmetric form `mu_a mu_b e^{-(mu_a+mu_b)} Y11`.
pub fn single_photon_gain_pair(mu_a: f64, mu_b: f64, y11: f64) -> f64 {
    mu_a * mu_b * (-(mu_a + mu_b)).exp() * y11
}

/// Where the `e11` value used in the key rate came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum E11Source {
    Estimated,
    Supplied,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoyBounds {
    pub qm1_z: f64,
    pub qm2_z: f64,
    pub qm1_x: f64,
    pub qm2_x: f64,
    pub y11_z_lower: f64,
    pub y11_x_lower: f64,
    pub e11_x_upper: f64,
    pub y11_z_unclamped: f64,
    pub y11_x_unclamped: f64,
    /// `None` when the X-basis yield bound is zero and no estimate exists.
    pub e11_x_unclamped: Option<f64>,
    pub e11_source: E11Source,
}

impl DecoyBounds {
    pub fn y11_z_clamped(&self) -> bool {
        self.y11_z_lower != self.y11_z_unclamped
    }

    pub fn y11_x_clamped(&self) -> bool {
        self.y11_x_lower != self.y11_x_unclamped
    }

    pub fn e11_x_clamped(&self) -> bool {
        match (self.e11_source, self.e11_x_unclamped) {
            (E11Source::Estimated, Some(raw)) => raw != self.e11_x_upper,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyRateInput {
    pub intensities: IntensitySet,
    pub tables_z: MeasuredTables,
    pub tables_x: MeasuredTables,
    /// Probability that both parties send signal-state Z pulses.
    pub q: f64,
    /// Error-correction efficiency.
    pub f: f64,
    pub n_pulses: Option<f64>,
    /// Use this `e11` instead of the estimate from the X tables.
    pub e11_x_upper: Option<f64>,
}

impl KeyRateInput {
    pub fn validate(&self) -> Result<(), DecoyError> {
        if !(self.q > 0.0 && self.q <= 1.0) {
            return Err(DecoyError::InvalidParameter {
                name: "q",
                reason: format!("must lie in (0, 1], got {}", self.q),
            });
        }
        if !(self.f >= 1.0 && self.f.is_finite()) {
            return Err(DecoyError::InvalidParameter {
                name: "f",
                reason: format!("must be finite and >= 1, got {}", self.f),
            });
        }
        if let Some(n) = self.n_pulses {
            if !(n >= 0.0 && n.is_finite()) {
                return Err(DecoyError::InvalidParameter {
                    name: "n_pulses",
                    reason: format!("must be finite and >= 0, got {n}"),
                });
            }
        }
        if let Some(e) = self.e11_x_upper {
            if !(0.0..=0.5).contains(&e) {
                return Err(DecoyError::InvalidParameter {
                    name: "e11_x_upper",
                    reason: format!("must lie in [0, 0.5], got {e}"),
                });
            }
        }
        for (tables, basis) in [(&self.tables_z, Basis::Z), (&self.tables_x, Basis::X)] {
            if tables.basis != basis {
                return Err(DecoyError::WrongBasis {
                    basis: tables.basis,
                    expected: basis,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyRateResult {
    pub rate_per_pulse: f64,
    pub rate_raw: f64,
    pub q11_z_lower: f64,
    pub entropy_e11: f64,
    pub entropy_qber: f64,
    pub bounds: DecoyBounds,
    pub total_key_bits: Option<f64>,
}

/// Evaluate the asymptotic key rate for the Z-basis signal cell.
pub fn key_rate(input: &KeyRateInput, bounds: &DecoyBounds) -> Result<KeyRateResult, DecoyError> {
    input.validate()?;
    let a = input.intensities.alice();
    let b = input.intensities.bob();
    let q11 = single_photon_gain_pair(a.mu, b.mu, bounds.y11_z_lower);
    let entropy_e11 = binary_entropy(bounds.e11_x_upper)?;
    let e_mumu = input.tables_z.qber(Level::Mu, Level::Mu);
    let entropy_qber = binary_entropy(e_mumu)?;
    let q_mumu = input.tables_z.gain(Level::Mu, Level::Mu);
    let rate_raw = input.q * (q11 * (1.0 - entropy_e11) - q_mumu * input.f * entropy_qber);
    let rate_per_pulse = rate_raw.max(0.0);
    Ok(KeyRateResult {
        rate_per_pulse,
        rate_raw,
        q11_z_lower: q11,
        entropy_e11,
        entropy_qber,
        bounds: bounds.clone(),
        total_key_bits: input.n_pulses.map(|n| n * rate_per_pulse),
    })
}

/// Run the bound estimation for both bases.
pub fn estimate_bounds(input: &KeyRateInput) -> Result<DecoyBounds, PipelineError> {
    input.validate().at(Stage::KeyRate)?;
    let intensities = &input.intensities;
    let (qm1_z, qm2_z) = qm_pair(&input.tables_z, intensities);
    let (qm1_x, qm2_x) = qm_pair(&input.tables_x, intensities);
    let y11_z_unclamped =
        y11_lower_unclamped(qm1_z, qm2_z, intensities).at(Stage::Y11Lower(Basis::Z))?;
    let y11_x_unclamped =
        y11_lower_unclamped(qm1_x, qm2_x, intensities).at(Stage::Y11Lower(Basis::X))?;
    let y11_z_lower = y11_z_unclamped.clamp(0.0, 1.0);
    let y11_x_lower = y11_x_unclamped.clamp(0.0, 1.0);

    let estimate = e11_upper_unclamped(&input.tables_x, intensities, y11_x_lower);
    let (e11_x_upper, e11_x_unclamped, e11_source) = match (input.e11_x_upper, estimate) {
        (Some(supplied), est) => (supplied, est.ok(), E11Source::Supplied),
        (None, Ok(raw)) => (raw.clamp(0.0, 0.5), Some(raw), E11Source::Estimated),
        (None, Err(e)) => return Err(e).at(Stage::E11Upper),
    };

    Ok(DecoyBounds {
        qm1_z,
        qm2_z,
        qm1_x,
        qm2_x,
        y11_z_lower,
        y11_x_lower,
        e11_x_upper,
        y11_z_unclamped,
        y11_x_unclamped,
        e11_x_unclamped,
        e11_source,
    })
}

/// Full pipeline: bounds for both bases, then the key rate.
pub fn estimate_all(input: &KeyRateInput) -> Result<KeyRateResult, PipelineError> {
    let bounds = estimate_bounds(input)?;
    key_rate(input, &bounds).at(Stage::KeyRate)
}
