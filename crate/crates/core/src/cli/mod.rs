//! `pnp-mdiqkd` command line.
//!
//! Exit status: 0 success, 2 usage/parse/IO error, 3 invalid parameters or
//! tables, 4 degenerate bounds (no key extractable).

mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::channel::ChannelParams;
use crate::data_io::{emit_report, parse_tables, write_tables, AnalysisReport, Provenance};
use crate::decoy::{estimate_all, KeyRateInput};
use crate::fixtures::{self, BUNDLED_TABLES_CSV, PUBLISHED_REFERENCE};
use crate::simulate::{
    run_simulation, run_sweep, sweep_grid, write_sweep_csv, SimulationConfig, SimulationMode, SweepAxis,
};
use crate::tables::{IntensitySet, PartyIntensities};
use crate::timing::{calibrate, TimingParams, DEFAULT_OVERLAP_THRESHOLD};

pub use output::{CliError, EXIT_DEGENERATE, EXIT_INVALID, EXIT_OK, EXIT_USAGE};
use output::{commit, read_input, Output};

#[derive(Debug, Parser)]
#[command(name = "pnp-mdiqkd", version, about = "Decoy-state key-rate analysis for plug-and-play MDI-QKD")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate decoy bounds and the key rate from measured tables.
    Estimate(EstimateArgs),
    /// Generate tables from a channel model and estimate from them.
    Simulate(SimulateArgs),
    /// Arrival-time offset, delay-chip setting and overlap verdict.
    Timing(TimingArgs),
    /// Key rate over a grid of one channel or source parameter.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
struct IntensityArgs {
    /// Signal intensity (Alice, and Bob unless --mu-b is given).
    #[arg(long, default_value_t = fixtures::SIGNAL_INTENSITY)]
    mu: f64,
    #[arg(long, default_value_t = fixtures::DECOY_INTENSITY)]
    nu: f64,
    #[arg(long, default_value_t = fixtures::VACUUM_INTENSITY)]
    omega: f64,
    #[arg(long)]
    mu_b: Option<f64>,
    #[arg(long)]
    nu_b: Option<f64>,
    #[arg(long)]
    omega_b: Option<f64>,
}

impl IntensityArgs {
    fn build(&self) -> Result<IntensitySet, CliError> {
        let alice = PartyIntensities::new(self.mu, self.nu, self.omega);
        let bob = PartyIntensities::new(
            self.mu_b.unwrap_or(self.mu),
            self.nu_b.unwrap_or(self.nu),
            self.omega_b.unwrap_or(self.omega),
        );
        Ok(IntensitySet::new(alice, bob)?)
    }
}

#[derive(Debug, Args)]
struct RateArgs {
    /// Probability that both parties send signal-state Z pulses.
    #[arg(long, default_value_t = fixtures::SIGNAL_PAIR_PROBABILITY)]
    q: f64,
    /// Error-correction efficiency.
    #[arg(long, default_value_t = fixtures::EC_EFFICIENCY)]
    f: f64,
    /// Pulse pairs sent, for the total key length.
    #[arg(long)]
    n_pulses: Option<f64>,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    /// Table file; the bundled published tables when omitted.
    #[arg(long)]
    tables: Option<PathBuf>,
    #[command(flatten)]
    intensities: IntensityArgs,
    #[command(flatten)]
    rate: RateArgs,
    /// Use this single-photon X error bound instead of estimating it. The
    /// bundled tables default to the published bound.
    #[arg(long, conflicts_with = "estimate_e11")]
    e11: Option<f64>,
    /// Estimate the X error bound from the bundled tables instead of using
    /// the published one.
    #[arg(long)]
    estimate_e11: bool,
    /// Compare intermediates with the published values (always on for the
    /// bundled tables).
    #[arg(long)]
    compare_published: bool,
    /// Report path; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ChannelArgs {
    #[arg(long, default_value = "analytic")]
    mode: SimulationMode,
    /// Charlie-Alice fibre length (km).
    #[arg(long, default_value_t = ChannelParams::default().length_a)]
    len_a: f64,
    /// Charlie-Bob fibre length (km).
    #[arg(long, default_value_t = ChannelParams::default().length_b)]
    len_b: f64,
    /// Fibre loss (dB/km).
    #[arg(long, default_value_t = ChannelParams::default().attenuation)]
    attenuation: f64,
    #[arg(long, default_value_t = ChannelParams::default().detector_efficiency)]
    det_eff: f64,
    /// Dark-count probability per gate.
    #[arg(long, default_value_t = ChannelParams::default().dark_count_prob)]
    dark: f64,
    /// Background click probability per gate.
    #[arg(long, default_value_t = ChannelParams::default().background_prob)]
    background: f64,
    /// Fraction of Bob's light in a mode orthogonal to Alice's.
    #[arg(long, default_value_t = ChannelParams::default().misalignment)]
    misalign: f64,
    /// Z-basis wrong-time-bin probability.
    #[arg(long, default_value_t = ChannelParams::default().extinction_error)]
    extinction: f64,
    /// Monte Carlo trials per intensity pair.
    #[arg(long, default_value_t = 100_000)]
    trials: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[command(flatten)]
    intensities: IntensityArgs,
    #[command(flatten)]
    rate: RateArgs,
}

impl ChannelArgs {
    fn config(&self) -> Result<SimulationConfig, CliError> {
        let params = ChannelParams {
            length_a: self.len_a,
            length_b: self.len_b,
            attenuation: self.attenuation,
            detector_efficiency: self.det_eff,
            dark_count_prob: self.dark,
            background_prob: self.background,
            misalignment: self.misalign,
            extinction_error: self.extinction,
        };
        params.validate()?;
        if self.mode == SimulationMode::Mc && self.trials == 0 {
            return Err(CliError::invalid("--trials must be at least 1"));
        }
        let config = SimulationConfig {
            params,
            intensities: self.intensities.build()?,
            mode: self.mode,
            trials: self.trials,
            seed: self.seed,
            q: self.rate.q,
            f: self.rate.f,
            n_pulses: self.rate.n_pulses,
        };
        // Reject bad q/f before any simulation work.
        let probe = KeyRateInput {
            intensities: config.intensities,
            tables_z: crate::tables::MeasuredTables::zeros(crate::tables::Basis::Z),
            tables_x: crate::tables::MeasuredTables::zeros(crate::tables::Basis::X),
            q: config.q,
            f: config.f,
            n_pulses: config.n_pulses,
            e11_x_upper: None,
        };
        probe.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    channel: ChannelArgs,
    /// Also write the generated tables in the table-file format.
    #[arg(long)]
    tables_out: Option<PathBuf>,
    /// Report path; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TimingArgs {
    #[arg(long, default_value_t = TimingParams::default().length_a0)]
    len_a: f64,
    #[arg(long, default_value_t = TimingParams::default().length_b0)]
    len_b: f64,
    #[arg(long, default_value_t = TimingParams::default().group_index_1550)]
    ng1550: f64,
    #[arg(long, default_value_t = TimingParams::default().group_index_1310)]
    ng1310: f64,
    /// Fibre thermal expansion coefficient (1/°C).
    #[arg(long, default_value_t = TimingParams::default().alpha_t)]
    alpha_t: f64,
    /// Temperature change (°C).
    #[arg(long, default_value_t = TimingParams::default().delta_t_celsius, allow_negative_numbers = true)]
    delta_t: f64,
    /// Delay-chip step (ps).
    #[arg(long, default_value_t = TimingParams::default().delay_resolution)]
    resolution: f64,
    /// Pulse FWHM (ns).
    #[arg(long, default_value_t = TimingParams::default().pulse_width)]
    pulse_width: f64,
    #[arg(long, default_value_t = DEFAULT_OVERLAP_THRESHOLD)]
    threshold: f64,
    /// Replace the quantisation residual (ps).
    #[arg(long, allow_negative_numbers = true)]
    forced_residual_ps: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    axis: SweepAxis,
    #[arg(long)]
    from: f64,
    #[arg(long)]
    to: f64,
    #[arg(long, default_value_t = 20)]
    steps: usize,
    #[command(flatten)]
    channel: ChannelArgs,
    /// Curve path; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run_estimate(args: &EstimateArgs) -> Result<Vec<Output>, CliError> {
    let content = match &args.tables {
        Some(path) => read_input(path)?,
        None => BUNDLED_TABLES_CSV.to_string(),
    };
    let (tables_z, tables_x) = parse_tables(&content)?;
    let input = KeyRateInput {
        intensities: args.intensities.build()?,
        tables_z,
        tables_x,
        q: args.rate.q,
        f: args.rate.f,
        n_pulses: args.rate.n_pulses,
        e11_x_upper: match (args.e11, &args.tables) {
            (Some(e), _) => Some(e),
            (None, None) if !args.estimate_e11 => Some(fixtures::PUBLISHED_E11_X),
            _ => None,
        },
    };
    let result = estimate_all(&input)?;
    let references: &[_] = if args.tables.is_none() || args.compare_published {
        &PUBLISHED_REFERENCE
    } else {
        &[]
    };
    let report = AnalysisReport::new(&input, &result, Provenance::Measured, references);
    Ok(vec![Output {
        path: args.out.clone(),
        content: emit_report(&report),
    }])
}

fn run_simulate(args: &SimulateArgs) -> Result<Vec<Output>, CliError> {
    let config = args.channel.config()?;
    let run = run_simulation(&config)?;
    let mut outputs = Vec::new();
    if let Some(path) = &args.tables_out {
        outputs.push(Output {
            path: Some(path.clone()),
            content: write_tables(&run.tables.tables_z, &run.tables.tables_x),
        });
    }
    outputs.push(Output {
        path: args.out.clone(),
        content: emit_report(&run.report),
    });
    Ok(outputs)
}

fn run_timing(args: &TimingArgs) -> Result<Vec<Output>, CliError> {
    let params = TimingParams {
        length_a0: args.len_a,
        length_b0: args.len_b,
        group_index_1550: args.ng1550,
        group_index_1310: args.ng1310,
        alpha_t: args.alpha_t,
        delta_t_celsius: args.delta_t,
        delay_resolution: args.resolution,
        pulse_width: args.pulse_width,
    };
    let report = calibrate(&params, args.threshold, args.forced_residual_ps)?;
    let mut content = serde_json::to_string_pretty(&report).expect("timing report is serializable");
    content.push('\n');
    Ok(vec![Output {
        path: args.out.clone(),
        content,
    }])
}

fn run_sweep_command(args: &SweepArgs) -> Result<Vec<Output>, CliError> {
    let base = args.channel.config()?;
    let grid = sweep_grid(args.from, args.to, args.steps)?;
    let points = run_sweep(&base, args.axis, &grid)?;
    Ok(vec![Output {
        path: args.out.clone(),
        content: write_sweep_csv(args.axis, &points),
    }])
}

/// Parse `args` (including the program name), run, and return the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let outputs = match &cli.command {
        Command::Estimate(a) => run_estimate(a),
        Command::Simulate(a) => run_simulate(a),
        Command::Timing(a) => run_timing(a),
        Command::Sweep(a) => run_sweep_command(a),
    };
    match outputs.and_then(commit) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}
