//! Simulated tables fed through the estimation pipeline, singly or over a
//! one-dimensional parameter grid.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{analytic_tables, bracketing_audit, mc_tables, BracketingAudit, ChannelError, ChannelParams};
use crate::data_io::{six_sig, AnalysisReport, Provenance};
use crate::decoy::{estimate_all, DecoyError, KeyRateInput, KeyRateResult, PipelineError};
use crate::tables::{Basis, IntensitySet, MeasuredTables, PartyIntensities};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimulationMode {
    Analytic,
    Mc,
}

impl FromStr for SimulationMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "analytic" => Ok(Self::Analytic),
            "mc" => Ok(Self::Mc),
            other => Err(format!("unknown mode {other:?} (expected analytic or mc)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimulationError {
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Input(#[from] DecoyError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("invalid sweep: {0}")]
    Sweep(String),
}

impl SimulationError {
    pub fn is_degenerate(&self) -> bool {
        match self {
            SimulationError::Input(e) => e.is_degenerate(),
            SimulationError::Pipeline(e) => e.is_degenerate(),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub params: ChannelParams,
    pub intensities: IntensitySet,
    pub mode: SimulationMode,
    /// Monte Carlo trials per intensity pair.
    pub trials: u64,
    pub seed: u64,
    pub q: f64,
    pub f: f64,
    pub n_pulses: Option<f64>,
}

/// Tables plus the single-photon truth when they come from the Monte Carlo.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedTables {
    pub tables_z: MeasuredTables,
    pub tables_x: MeasuredTables,
    pub audit: Option<BracketingAudit>,
}

pub fn simulate_tables(config: &SimulationConfig) -> Result<SimulatedTables, SimulationError> {
    config.params.validate()?;
    match config.mode {
        SimulationMode::Analytic => Ok(SimulatedTables {
            tables_z: analytic_tables(&config.params, &config.intensities, Basis::Z),
            tables_x: analytic_tables(&config.params, &config.intensities, Basis::X),
            audit: None,
        }),
        SimulationMode::Mc => {
            let (tz, sz) = mc_tables(&config.params, &config.intensities, Basis::Z, config.trials, config.seed)?;
            let (tx, sx) = mc_tables(&config.params, &config.intensities, Basis::X, config.trials, config.seed)?;
            let audit = bracketing_audit(&config.intensities, &tz, &tx, &sz, &sx, config.trials, config.seed);
            Ok(SimulatedTables {
                tables_z: tz,
                tables_x: tx,
                audit: Some(audit),
            })
        }
    }
}

impl SimulationConfig {
    pub fn key_rate_input(&self, tables: &SimulatedTables) -> KeyRateInput {
        KeyRateInput {
            intensities: self.intensities,
            tables_z: tables.tables_z.clone(),
            tables_x: tables.tables_x.clone(),
            q: self.q,
            f: self.f,
            n_pulses: self.n_pulses,
            e11_x_upper: None,
        }
    }

    fn provenance(&self) -> Provenance {
        match self.mode {
            SimulationMode::Analytic => Provenance::SimulatedAnalytic,
            SimulationMode::Mc => Provenance::SimulatedMonteCarlo,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationRun {
    pub tables: SimulatedTables,
    pub result: KeyRateResult,
    pub report: AnalysisReport,
}

/// Generate tables and run the estimation pipeline on them.
pub fn run_simulation(config: &SimulationConfig) -> Result<SimulationRun, SimulationError> {
    let tables = simulate_tables(config)?;
    let input = config.key_rate_input(&tables);
    let result = estimate_all(&input)?;
    let mut report = AnalysisReport::new(&input, &result, config.provenance(), &[]);
    if let Some(audit) = &tables.audit {
        report = report.with_audit(audit.clone());
    }
    Ok(SimulationRun {
        tables,
        result,
        report,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    /// Total fibre length, split in the base configuration's A:B ratio.
    Length,
    /// Signal intensity of both parties.
    Mu,
    /// Dark-count probability.
    Dark,
    Misalign,
}

impl SweepAxis {
    pub fn label(self) -> &'static str {
        match self {
            SweepAxis::Length => "length",
            SweepAxis::Mu => "mu",
            SweepAxis::Dark => "dark",
            SweepAxis::Misalign => "misalign",
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for SweepAxis {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "length" => Ok(Self::Length),
            "mu" => Ok(Self::Mu),
            "dark" => Ok(Self::Dark),
            "misalign" => Ok(Self::Misalign),
            other => Err(format!(
                "unknown sweep axis {other:?} (expected length, mu, dark or misalign)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub rate_per_pulse: f64,
    pub y11_z_lower: f64,
    pub y11_x_lower: f64,
    pub e11_x_upper: f64,
    /// The bounds were degenerate here; the rate is recorded as 0.
    pub degenerate: bool,
}

/// `steps` evenly spaced values from `from` to `to` inclusive.
pub fn sweep_grid(from: f64, to: f64, steps: usize) -> Result<Vec<f64>, SimulationError> {
    if !(from.is_finite() && to.is_finite()) {
        return Err(SimulationError::Sweep("range bounds must be finite".into()));
    }
    match steps {
        0 => Err(SimulationError::Sweep("steps must be at least 1".into())),
        1 => Ok(vec![from]),
        n => Ok((0..n)
            .map(|k| from + (to - from) * k as f64 / (n - 1) as f64)
            .collect()),
    }
}

fn config_at(base: &SimulationConfig, axis: SweepAxis, value: f64) -> Result<SimulationConfig, SimulationError> {
    let mut config = base.clone();
    match axis {
        SweepAxis::Length => {
            let total = base.params.length_a + base.params.length_b;
            let share_a = if total > 0.0 { base.params.length_a / total } else { 0.5 };
            config.params.length_a = value * share_a;
            config.params.length_b = value * (1.0 - share_a);
        }
        SweepAxis::Mu => {
            let (a, b) = (base.intensities.alice(), base.intensities.bob());
            config.intensities = IntensitySet::new(
                PartyIntensities::new(value, a.nu, a.omega),
                PartyIntensities::new(value, b.nu, b.omega),
            )?;
        }
        SweepAxis::Dark => config.params.dark_count_prob = value,
        SweepAxis::Misalign => config.params.misalignment = value,
    }
    config.params.validate()?;
    Ok(config)
}

/// Run the pipeline at every grid point. Points whose bounds are degenerate
/// are kept with a zero rate and a flag; invalid parameters abort the sweep.
pub fn run_sweep(
    base: &SimulationConfig,
    axis: SweepAxis,
    grid: &[f64],
) -> Result<Vec<SweepPoint>, SimulationError> {
    // Validate the whole grid before simulating anything.
    let configs = grid
        .iter()
        .map(|&v| match config_at(base, axis, v) {
            Err(e) if e.is_degenerate() => Ok((v, None)),
            other => other.map(|c| (v, Some(c))),
        })
        .collect::<Result<Vec<_>, _>>()?;

    let degenerate = |value| SweepPoint {
        value,
        rate_per_pulse: 0.0,
        y11_z_lower: 0.0,
        y11_x_lower: 0.0,
        e11_x_upper: 0.0,
        degenerate: true,
    };
    configs
        .into_iter()
        .map(|(value, config)| {
            let Some(config) = config else {
                return Ok(degenerate(value));
            };
            match run_simulation(&config) {
                Ok(run) => Ok(SweepPoint {
                    value,
                    rate_per_pulse: run.result.rate_per_pulse,
                    y11_z_lower: run.result.bounds.y11_z_lower,
                    y11_x_lower: run.result.bounds.y11_x_lower,
                    e11_x_upper: run.result.bounds.e11_x_upper,
                    degenerate: false,
                }),
                Err(e) if e.is_degenerate() => Ok(degenerate(value)),
                Err(e) => Err(e),
            }
        })
        .collect()
}

/// Comma-delimited curve, one row per grid point, numbers to 6 significant
/// digits.
pub fn write_sweep_csv(axis: SweepAxis, points: &[SweepPoint]) -> String {
    let mut out = format!("{axis},rate_per_pulse,y11_z_lower,y11_x_lower,e11_x_upper,degenerate\n");
    for p in points {
        out.push_str(&format!(
            "{:e},{:e},{:e},{:e},{:e},{}\n",
            p.value,
            six_sig(p.rate_per_pulse),
            six_sig(p.y11_z_lower),
            six_sig(p.y11_x_lower),
            six_sig(p.e11_x_upper),
            p.degenerate
        ));
    }
    out
}
