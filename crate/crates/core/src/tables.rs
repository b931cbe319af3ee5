//! Shared domain types: bases, intensity levels and the 3×3 gain/QBER tables.
//!
//! Tables are indexed `[alice][bob]` by [`Level`], so row `i` is Alice's
//! intensity and column `j` is Bob's.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::decoy::DecoyError;

/// Encoding basis: time-bin occupancy (`Z`) or relative phase (`X`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Basis {
    Z,
    X,
}

impl Basis {
    pub const ALL: [Basis; 2] = [Basis::Z, Basis::X];

    pub fn label(self) -> &'static str {
        match self {
            Basis::Z => "Z",
            Basis::X => "X",
        }
    }
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Basis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Z" | "z" => Ok(Basis::Z),
            "X" | "x" => Ok(Basis::X),
            other => Err(format!("unknown basis `{other}`")),
        }
    }
}

/// One of the three decoy intensity levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    /// Signal state, μ.
    Mu,
    /// Decoy state, ν.
    Nu,
    /// Vacuum-like state, ω.
    Omega,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::Mu, Level::Nu, Level::Omega];

    pub fn index(self) -> usize {
        match self {
            Level::Mu => 0,
            Level::Nu => 1,
            Level::Omega => 2,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Level::Mu => "mu",
            Level::Nu => "nu",
            Level::Omega => "omega",
        }
    }
}

impl FromStr for Level {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mu" => Ok(Level::Mu),
            "nu" => Ok(Level::Nu),
            "omega" => Ok(Level::Omega),
            other => Err(format!("unknown intensity label `{other}`")),
        }
    }
}

/// Mean photon numbers one party uses for its three levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartyIntensities {
    pub mu: f64,
    pub nu: f64,
    pub omega: f64,
}

impl PartyIntensities {
    pub fn new(mu: f64, nu: f64, omega: f64) -> Self {
        Self { mu, nu, omega }
    }

    pub fn level(&self, level: Level) -> f64 {
        match level {
            Level::Mu => self.mu,
            Level::Nu => self.nu,
            Level::Omega => self.omega,
        }
    }

    fn validate(&self, party: &'static str) -> Result<(), DecoyError> {
        let values = [self.mu, self.nu, self.omega];
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(DecoyError::InvalidIntensities {
                party,
                reason: "intensities must be finite and non-negative".into(),
            });
        }
        if self.mu == self.nu || self.nu == self.omega {
            return Err(DecoyError::DegenerateIntensities { party });
        }
        if !(self.mu > self.nu && self.nu > self.omega) {
            return Err(DecoyError::InvalidIntensities {
                party,
                reason: format!(
                    "expected mu > nu > omega, got ({}, {}, {})",
                    self.mu, self.nu, self.omega
                ),
            });
        }
        Ok(())
    }
}

/// Validated intensity sets for Alice and Bob.
///
/// Construction enforces `mu > nu > omega >= 0` for both parties; equal
/// adjacent levels are reported as [`DecoyError::DegenerateIntensities`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawIntensitySet")]
pub struct IntensitySet {
    alice: PartyIntensities,
    bob: PartyIntensities,
}

#[derive(Deserialize)]
struct RawIntensitySet {
    alice: PartyIntensities,
    bob: PartyIntensities,
}

impl TryFrom<RawIntensitySet> for IntensitySet {
    type Error = DecoyError;

    fn try_from(raw: RawIntensitySet) -> Result<Self, Self::Error> {
        IntensitySet::new(raw.alice, raw.bob)
    }
}

impl IntensitySet {
    pub fn new(alice: PartyIntensities, bob: PartyIntensities) -> Result<Self, DecoyError> {
        alice.validate("alice")?;
        bob.validate("bob")?;
        Ok(Self { alice, bob })
    }

    /// Both parties use the same three intensities.
    pub fn symmetric(mu: f64, nu: f64, omega: f64) -> Result<Self, DecoyError> {
        let p = PartyIntensities::new(mu, nu, omega);
        Self::new(p, p)
    }

    pub fn alice(&self) -> &PartyIntensities {
        &self.alice
    }

    pub fn bob(&self) -> &PartyIntensities {
        &self.bob
    }

    /// `(alice, bob)` mean photon numbers for a table cell.
    pub fn pair(&self, a: Level, b: Level) -> (f64, f64) {
        (self.alice.level(a), self.bob.level(b))
    }
}

/// Gains and QBERs for the nine intensity pairs of one basis.
///
/// `qber_std` and `accepted` are optional per cell. A cell with
/// `accepted == Some(0)` has no coincidences; its QBER is stored as 0 and is
/// undefined (see [`MeasuredTables::qber_defined`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasuredTables {
    pub basis: Basis,
    pub gain: [[f64; 3]; 3],
    pub qber: [[f64; 3]; 3],
    pub qber_std: [[Option<f64>; 3]; 3],
    pub accepted: [[Option<u64>; 3]; 3],
}

impl MeasuredTables {
    pub fn zeros(basis: Basis) -> Self {
        Self {
            basis,
            gain: [[0.0; 3]; 3],
            qber: [[0.0; 3]; 3],
            qber_std: [[None; 3]; 3],
            accepted: [[None; 3]; 3],
        }
    }

    pub fn from_arrays(basis: Basis, gain: [[f64; 3]; 3], qber: [[f64; 3]; 3]) -> Self {
        Self {
            gain,
            qber,
            ..Self::zeros(basis)
        }
    }

    pub fn gain(&self, a: Level, b: Level) -> f64 {
        self.gain[a.index()][b.index()]
    }

    pub fn qber(&self, a: Level, b: Level) -> f64 {
        self.qber[a.index()][b.index()]
    }

    pub fn qber_defined(&self, a: Level, b: Level) -> bool {
        self.accepted[a.index()][b.index()] != Some(0)
    }

    /// Cells whose QBER is undefined because nothing was accepted.
    pub fn undefined_qber_cells(&self) -> Vec<(Level, Level)> {
        pairs().filter(|&(a, b)| !self.qber_defined(a, b)).collect()
    }

    /// Multiply every gain by `factor`, leaving QBERs untouched.
    pub fn scaled_gains(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for row in out.gain.iter_mut() {
            for g in row.iter_mut() {
                *g *= factor;
            }
        }
        out
    }
}

/// All nine `(alice, bob)` level pairs in row-major order.
pub fn pairs() -> impl Iterator<Item = (Level, Level)> {
    Level::ALL
        .into_iter()
        .flat_map(|a| Level::ALL.into_iter().map(move |b| (a, b)))
}
