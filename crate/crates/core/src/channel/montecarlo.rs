//! Photon-level Monte Carlo of the Bell-state measurement.
//!
//! A uniformly phase-randomised coherent pulse is exactly a Poisson mixture of
//! photon-number states, so each trial draws Alice's and Bob's photon numbers,
//! then a click pattern from the exact [`click_distribution`] for those
//! numbers. Because the photon numbers are known per trial, the trials with
//! one photon from each side give the true single-photon yield and error rate
//! that the decoy bounds are supposed to bracket.
//!
//! Randomness is counter based: trial `k` of cell `c` in basis `b` reads the
//! 16 words starting at word `16 k` of ChaCha8 stream `16 b + c` keyed by the
//! seed. Results therefore do not depend on how trials are split across
//! threads.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::fock::{click_distribution, poisson_cutoff, ClickDistribution};
use crate::channel::{mode_amplitudes, ChannelError, ChannelParams, SINGLET_MASKS};
use crate::data_io::qber_std;
use crate::decoy::{e11_upper_unclamped, qm_pair, y11_lower_unclamped};
use crate::tables::{pairs, Basis, IntensitySet, MeasuredTables};

/// Random words consumed per trial (eight `u64` draws).
const WORDS_PER_TRIAL: u128 = 16;
const CHUNK: u64 = 4096;

/// What one party sends in a trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseState {
    pub basis: Basis,
    pub bit: u8,
    /// Mean photon number.
    pub intensity: f64,
}

/// Gates that fired: bit 0 `C` early, bit 1 `C` late, bit 2 `D` early,
/// bit 3 `D` late.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClickPattern(pub u8);

impl ClickPattern {
    pub fn clicked(self, detector_d: bool, late: bool) -> bool {
        self.0 >> crate::channel::slot_index(detector_d, late) & 1 == 1
    }

    pub fn is_singlet(self) -> bool {
        SINGLET_MASKS.contains(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoincidenceRecord {
    pub pattern: ClickPattern,
    pub photons_a: u32,
    pub photons_b: u32,
    pub accepted: bool,
    /// Accepted with equal encoded bits (the singlet implies opposite bits).
    pub error: bool,
}

/// Uniform draws for one trial.
#[derive(Debug, Clone, Copy)]
struct TrialDraws([f64; 8]);

impl TrialDraws {
    fn from_rng<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        let mut u = [0.0; 8];
        for slot in u.iter_mut() {
            *slot = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        }
        Self(u)
    }

    fn photons_a(&self) -> f64 {
        self.0[0]
    }
    fn photons_b(&self) -> f64 {
        self.0[1]
    }
    fn flip_a(&self) -> f64 {
        self.0[2]
    }
    fn flip_b(&self) -> f64 {
        self.0[3]
    }
    fn pattern(&self) -> f64 {
        self.0[4]
    }
    fn bit_a(&self) -> u8 {
        (self.0[5] < 0.5) as u8
    }
    fn bit_b(&self) -> u8 {
        (self.0[6] < 0.5) as u8
    }
}

/// Poisson sample by inversion of a single uniform.
fn poisson_inverse(mean: f64, u: f64) -> u32 {
    let mut k = 0u32;
    let mut p = (-mean).exp();
    let mut cdf = p;
    while u >= cdf {
        k += 1;
        p *= mean / k as f64;
        if p == 0.0 && k as f64 > mean {
            break;
        }
        cdf += p;
    }
    k
}

fn run_trial<F>(
    params: &ChannelParams,
    a: &PulseState,
    b: &PulseState,
    draws: &TrialDraws,
    distribution: F,
) -> CoincidenceRecord
where
    F: Fn(u8, u8, u32, u32) -> ClickDistribution,
{
    let n = poisson_inverse(a.intensity, draws.photons_a());
    let m = poisson_inverse(b.intensity, draws.photons_b());
    let flip_a = params.flip_prob(a.basis);
    let flip_b = params.flip_prob(b.basis);
    let sent_a = a.bit ^ (draws.flip_a() < flip_a) as u8;
    let sent_b = b.bit ^ (draws.flip_b() < flip_b) as u8;
    let pattern = ClickPattern(distribution(sent_a, sent_b, n, m).sample(draws.pattern()));
    let accepted = pattern.is_singlet();
    CoincidenceRecord {
        pattern,
        photons_a: n,
        photons_b: m,
        accepted,
        error: accepted && a.bit == b.bit,
    }
}

/// One simulated Bell-state measurement.
///
/// Consumes exactly eight `u64` draws from `rng`.
pub fn mc_bsm_trial<R: Rng + ?Sized>(
    params: &ChannelParams,
    state_a: &PulseState,
    state_b: &PulseState,
    rng: &mut R,
) -> CoincidenceRecord {
    let draws = TrialDraws::from_rng(rng);
    run_trial(params, state_a, state_b, &draws, |sa, sb, n, m| {
        click_distribution(
            params,
            mode_amplitudes(state_a.basis, sa),
            mode_amplitudes(state_b.basis, sb),
            n,
            m,
        )
    })
}

/// Distributions for all photon numbers up to the cutoffs, per sent-bit pair.
struct DistributionCache {
    basis: Basis,
    max_a: u32,
    max_b: u32,
    table: Vec<ClickDistribution>,
}

impl DistributionCache {
    fn new(params: &ChannelParams, basis: Basis, max_a: u32, max_b: u32) -> Self {
        let mut table = Vec::with_capacity(4 * (max_a as usize + 1) * (max_b as usize + 1));
        for sa in 0..2u8 {
            for sb in 0..2u8 {
                for n in 0..=max_a {
                    for m in 0..=max_b {
                        table.push(click_distribution(
                            params,
                            mode_amplitudes(basis, sa),
                            mode_amplitudes(basis, sb),
                            n,
                            m,
                        ));
                    }
                }
            }
        }
        Self {
            basis,
            max_a,
            max_b,
            table,
        }
    }

    fn get(&self, params: &ChannelParams, sa: u8, sb: u8, n: u32, m: u32) -> ClickDistribution {
        if n <= self.max_a && m <= self.max_b {
            let per_bits = (self.max_a as usize + 1) * (self.max_b as usize + 1);
            let idx = (sa as usize * 2 + sb as usize) * per_bits
                + n as usize * (self.max_b as usize + 1)
                + m as usize;
            self.table[idx]
        } else {
            click_distribution(
                params,
                mode_amplitudes(self.basis, sa),
                mode_amplitudes(self.basis, sb),
                n,
                m,
            )
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Counts {
    accepted: u64,
    errors: u64,
    tagged: u64,
    tagged_accepted: u64,
    tagged_errors: u64,
}

impl std::ops::Add for Counts {
    type Output = Counts;
    fn add(self, o: Counts) -> Counts {
        Counts {
            accepted: self.accepted + o.accepted,
            errors: self.errors + o.errors,
            tagged: self.tagged + o.tagged,
            tagged_accepted: self.tagged_accepted + o.tagged_accepted,
            tagged_errors: self.tagged_errors + o.tagged_errors,
        }
    }
}

/// Statistics of trials in which both parties emitted exactly one photon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrueSinglePhotonStats {
    pub basis: Basis,
    pub tagged_trials: u64,
    pub tagged_accepted: u64,
    pub tagged_errors: u64,
    /// `None` without tagged trials.
    pub y11_true: Option<f64>,
    pub y11_std: Option<f64>,
    /// `None` without tagged accepted trials.
    pub e11_true: Option<f64>,
    pub e11_std: Option<f64>,
}

impl TrueSinglePhotonStats {
    fn from_counts(basis: Basis, c: Counts) -> Self {
        let y11_true = (c.tagged > 0).then(|| c.tagged_accepted as f64 / c.tagged as f64);
        let e11_true =
            (c.tagged_accepted > 0).then(|| c.tagged_errors as f64 / c.tagged_accepted as f64);
        Self {
            basis,
            tagged_trials: c.tagged,
            tagged_accepted: c.tagged_accepted,
            tagged_errors: c.tagged_errors,
            y11_true,
            y11_std: qber_std(c.tagged_accepted, c.tagged).ok(),
            e11_true,
            e11_std: qber_std(c.tagged_errors, c.tagged_accepted).ok(),
        }
    }

    /// `k`-sigma confidence radius of the yield estimate.
    pub fn y11_radius(&self, k: f64) -> Option<f64> {
        self.y11_std.map(|s| k * s)
    }

    pub fn e11_radius(&self, k: f64) -> Option<f64> {
        self.e11_std.map(|s| k * s)
    }
}

fn stream_id(basis: Basis, cell: usize) -> u64 {
    let b = match basis {
        Basis::Z => 0,
        Basis::X => 1,
    };
    16 * b + cell as u64
}

/// Simulate `trials_per_pair` trials for each of the nine intensity pairs.
///
/// Bits are uniform per trial. Cells without accepted events get gain 0,
/// QBER 0, `accepted = Some(0)` and no standard deviation (undefined QBER).
pub fn mc_tables(
    params: &ChannelParams,
    intensities: &IntensitySet,
    basis: Basis,
    trials_per_pair: u64,
    seed: u64,
) -> Result<(MeasuredTables, TrueSinglePhotonStats), ChannelError> {
    params.validate()?;
    if trials_per_pair == 0 {
        return Err(ChannelError::InvalidParameter {
            name: "trials_per_pair",
            reason: "must be at least 1".into(),
        });
    }
    let max_a = poisson_cutoff(intensities.alice().mu, 1e-9);
    let max_b = poisson_cutoff(intensities.bob().mu, 1e-9);
    let cache = DistributionCache::new(params, basis, max_a, max_b);
    let cells: Vec<_> = pairs().collect();
    let chunks = trials_per_pair.div_ceil(CHUNK);

    let jobs: Vec<(usize, u64)> = (0..cells.len())
        .flat_map(|c| (0..chunks).map(move |k| (c, k)))
        .collect();
    let partial: Vec<(usize, Counts)> = jobs
        .into_par_iter()
        .map(|(cell, chunk)| {
            let (la, lb) = cells[cell];
            let (mu_a, mu_b) = intensities.pair(la, lb);
            let start = chunk * CHUNK;
            let end = (start + CHUNK).min(trials_per_pair);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(stream_id(basis, cell));
            rng.set_word_pos(start as u128 * WORDS_PER_TRIAL);
            let mut counts = Counts::default();
            for _ in start..end {
                let draws = TrialDraws::from_rng(&mut rng);
                let a = PulseState { basis, bit: draws.bit_a(), intensity: mu_a };
                let b = PulseState { basis, bit: draws.bit_b(), intensity: mu_b };
                let rec = run_trial(params, &a, &b, &draws, |sa, sb, n, m| {
                    cache.get(params, sa, sb, n, m)
                });
                counts.accepted += rec.accepted as u64;
                counts.errors += rec.error as u64;
                if rec.photons_a == 1 && rec.photons_b == 1 {
                    counts.tagged += 1;
                    counts.tagged_accepted += rec.accepted as u64;
                    counts.tagged_errors += rec.error as u64;
                }
            }
            (cell, counts)
        })
        .collect();

    let mut per_cell = [Counts::default(); 9];
    for (cell, c) in partial {
        per_cell[cell] = per_cell[cell] + c;
    }
    let mut tables = MeasuredTables::zeros(basis);
    let mut tagged = Counts::default();
    for (cell, (la, lb)) in cells.iter().enumerate() {
        let c = per_cell[cell];
        let (i, j) = (la.index(), lb.index());
        tables.gain[i][j] = c.accepted as f64 / trials_per_pair as f64;
        tables.qber[i][j] = if c.accepted > 0 {
            c.errors as f64 / c.accepted as f64
        } else {
            0.0
        };
        tables.qber_std[i][j] = qber_std(c.errors, c.accepted).ok();
        tables.accepted[i][j] = Some(c.accepted);
        tagged = tagged + c;
    }
    Ok((tables, TrueSinglePhotonStats::from_counts(basis, tagged)))
}

/// One bound compared with the simulated truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    /// Unclamped bound computed from the simulated tables.
    pub bound: Option<f64>,
    /// Standard deviation of the bound from the tables' binomial noise.
    pub bound_std: f64,
    pub true_value: Option<f64>,
    pub true_std: f64,
    /// `sqrt(bound_std² + true_std²)`.
    pub sigma: f64,
    /// Lower bound: `bound <= true + 3σ`; upper bound: `bound >= true - 3σ`.
    /// Vacuously true when either side is undefined.
    pub bracketed: bool,
}

impl BoundCheck {
    fn new(lower: bool, bound: Option<f64>, bound_std: f64, true_value: Option<f64>, true_std: f64) -> Self {
        let sigma = bound_std.hypot(true_std);
        let bracketed = match (bound, true_value) {
            (Some(b), Some(t)) if lower => b <= t + 3.0 * sigma,
            (Some(b), Some(t)) => b >= t - 3.0 * sigma,
            _ => true,
        };
        Self {
            bound,
            bound_std,
            true_value,
            true_std,
            sigma,
            bracketed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BracketingAudit {
    pub trials_per_pair: u64,
    pub seed: u64,
    pub y11_z: BoundCheck,
    pub y11_x: BoundCheck,
    pub e11_x: BoundCheck,
}

impl BracketingAudit {
    pub fn all_bracketed(&self) -> bool {
        self.y11_z.bracketed && self.y11_x.bracketed && self.e11_x.bracketed
    }
}

/// Standard deviation of the unclamped `Y11` bound. The bound is linear in
/// the nine gains, each a binomial fraction over `trials` pulses.
fn y11_bound_std(tables: &MeasuredTables, intensities: &IntensitySet, trials: f64) -> f64 {
    let mut var = 0.0;
    for (a, b) in pairs() {
        let mut unit = MeasuredTables::zeros(tables.basis);
        unit.gain[a.index()][b.index()] = 1.0;
        let (q1, q2) = qm_pair(&unit, intensities);
        let coef = y11_lower_unclamped(q1, q2, intensities).unwrap_or(0.0);
        let g = tables.gain(a, b);
        var += coef * coef * g * (1.0 - g) / trials;
    }
    var.sqrt()
}

/// Delta-method standard deviation of the unclamped `e11` bound, treating the
/// error-gain sum and the yield bound as independent.
fn e11_bound_std(tables: &MeasuredTables, intensities: &IntensitySet, y11: f64, e11: f64, trials: f64) -> f64 {
    let mut numerator_var = 0.0;
    for (a, b) in pairs() {
        let mut unit = MeasuredTables::zeros(Basis::X);
        unit.gain[a.index()][b.index()] = 1.0;
        unit.qber[a.index()][b.index()] = 1.0;
        let coef = e11_upper_unclamped(&unit, intensities, 1.0).unwrap_or(0.0);
        let eg = tables.gain(a, b) * tables.qber(a, b);
        numerator_var += coef * coef * eg * (1.0 - eg) / trials;
    }
    let y_std = y11_bound_std(tables, intensities, trials);
    let rel_numerator = numerator_var.sqrt() / y11;
    (rel_numerator.powi(2) + (e11 * y_std / y11).powi(2)).sqrt()
}

/// Compare decoy bounds from Monte Carlo tables against the tagged truth.
pub fn bracketing_audit(
    intensities: &IntensitySet,
    tables_z: &MeasuredTables,
    tables_x: &MeasuredTables,
    stats_z: &TrueSinglePhotonStats,
    stats_x: &TrueSinglePhotonStats,
    trials_per_pair: u64,
    seed: u64,
) -> BracketingAudit {
    let trials = trials_per_pair as f64;
    let y11 = |tables: &MeasuredTables| {
        let (q1, q2) = qm_pair(tables, intensities);
        y11_lower_unclamped(q1, q2, intensities).ok()
    };
    let y11_z = y11(tables_z);
    let y11_x = y11(tables_x);
    let e11 = y11_x
        .filter(|&y| y > 0.0)
        .and_then(|y| e11_upper_unclamped(tables_x, intensities, y).ok());
    let e11_std = match (y11_x, e11) {
        (Some(y), Some(e)) => e11_bound_std(tables_x, intensities, y, e, trials),
        _ => 0.0,
    };
    BracketingAudit {
        trials_per_pair,
        seed,
        y11_z: BoundCheck::new(
            true,
            y11_z,
            y11_bound_std(tables_z, intensities, trials),
            stats_z.y11_true,
            stats_z.y11_std.unwrap_or(0.0),
        ),
        y11_x: BoundCheck::new(
            true,
            y11_x,
            y11_bound_std(tables_x, intensities, trials),
            stats_x.y11_true,
            stats_x.y11_std.unwrap_or(0.0),
        ),
        e11_x: BoundCheck::new(false, e11, e11_std, stats_x.e11_true, stats_x.e11_std.unwrap_or(0.0)),
    }
}
