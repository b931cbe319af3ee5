//! Photon-number-resolved click statistics.
//!
//! Alice's `n` photons all occupy one input mode and Bob's `m` photons
//! another. Loss, detector efficiency and the beam splitter map these two
//! modes linearly onto the output gates, so for any set `S` of gates the
//! probability that no photon reaches `S` is `<n,m| Γ(I - M_S) |n,m>` with
//! `M_S` the 2×2 Gram matrix of the rows of `S`. For the product Fock input
//! this expectation is the sum
//!
//! ```text
//! Σ_j C(n,j) C(m,n-j) T_aa^j (T_ab T_ba)^(n-j) T_bb^(m-n+j)
//! ```
//!
//! whose terms are all non-negative (`T` is symmetric). Dark counts multiply
//! by `(1-p)^|S|`, and exact click patterns follow by inclusion–exclusion.
//! The inclusion–exclusion subtracts numbers close to 1, so pattern
//! probabilities carry an absolute error of order 1e-14.

use crate::channel::{
    bit_mixture, mode_amplitudes, slot_index, ChannelParams, YieldPair, SINGLET_MASKS, SLOT_COUNT,
};
use crate::tables::{pairs, Basis, IntensitySet, MeasuredTables};

/// Probability of each of the 16 click patterns over the four gates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClickDistribution(pub [f64; 16]);

impl ClickDistribution {
    pub fn probability(&self, mask: u8) -> f64 {
        self.0[mask as usize & 15]
    }

    /// Probability of an accepted (singlet) pattern.
    pub fn accepted(&self) -> f64 {
        SINGLET_MASKS.iter().map(|&m| self.probability(m)).sum()
    }

    /// Pattern for a uniform draw `u ∈ [0, 1)`.
    pub fn sample(&self, u: f64) -> u8 {
        let mut acc = 0.0;
        for (mask, &p) in self.0.iter().enumerate() {
            acc += p;
            if u < acc {
                return mask as u8;
            }
        }
        // Rounding left `u` above the cumulative total: take the last pattern
        // with non-zero probability.
        self.0.iter().rposition(|&p| p > 0.0).unwrap_or(0) as u8
    }
}

/// Per-gate `(alice, bob)` coefficients for the shared and the orthogonal mode.
fn gate_rows(params: &ChannelParams, mode_a: [f64; 2], mode_b: [f64; 2]) -> [[[f64; 2]; 2]; 4] {
    let ea = (params.transmittance_a() * params.detector_efficiency).sqrt();
    let eb = (params.transmittance_b() * params.detector_efficiency).sqrt();
    let overlap = (1.0 - params.misalignment).sqrt();
    let orthogonal = params.misalignment.sqrt();
    let half = std::f64::consts::FRAC_1_SQRT_2;
    let mut rows = [[[0.0; 2]; 2]; 4];
    for detector_d in [false, true] {
        let sign = if detector_d { -1.0 } else { 1.0 };
        for late in [false, true] {
            let t = late as usize;
            let a = half * ea * mode_a[t];
            let b = sign * half * eb * mode_b[t];
            rows[slot_index(detector_d, late)] = [[a, b * overlap], [0.0, b * orthogonal]];
        }
    }
    rows
}

fn binomial(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `<n,m| Γ(T) |n,m>` for symmetric `T`.
fn fock_expectation(t: [[f64; 2]; 2], n: u32, m: u32) -> f64 {
    let cross = t[0][1] * t[1][0];
    let lo = n.saturating_sub(m);
    (lo..=n)
        .map(|j| {
            binomial(n, j)
                * binomial(m, n - j)
                * t[0][0].powi(j as i32)
                * cross.powi((n - j) as i32)
                * t[1][1].powi((m + j - n) as i32)
        })
        .sum()
}

/// Exact click-pattern distribution for `n` photons from Alice in `mode_a` and
/// `m` from Bob in `mode_b` (real early/late amplitudes).
pub fn click_distribution(
    params: &ChannelParams,
    mode_a: [f64; 2],
    mode_b: [f64; 2],
    n: u32,
    m: u32,
) -> ClickDistribution {
    let rows = gate_rows(params, mode_a, mode_b);
    let keep = 1.0 - params.noise_prob();
    let mut no_click = [0.0; 16];
    for (set, slot) in no_click.iter_mut().enumerate() {
        let mut gram = [[0.0; 2]; 2];
        let mut size = 0;
        for (gate, gate_rows) in rows.iter().enumerate() {
            if set >> gate & 1 == 0 {
                continue;
            }
            size += 1;
            for r in gate_rows {
                for i in 0..2 {
                    for j in 0..2 {
                        gram[i][j] += r[i] * r[j];
                    }
                }
            }
        }
        let t = [
            [1.0 - gram[0][0], -gram[0][1]],
            [-gram[1][0], 1.0 - gram[1][1]],
        ];
        *slot = keep.powi(size) * fock_expectation(t, n, m);
    }

    let full = (1u8 << SLOT_COUNT) - 1;
    let mut probs = [0.0; 16];
    for (clicks, p) in probs.iter_mut().enumerate() {
        let clicks = clicks as u8;
        let silent = full & !clicks;
        // Sum over subsets `sub` of the clicking gates.
        let mut total = 0.0;
        let mut sub = clicks;
        loop {
            let sign = if sub.count_ones().is_multiple_of(2) { 1.0 } else { -1.0 };
            total += sign * no_click[(silent | sub) as usize];
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & clicks;
        }
        *p = total.max(0.0);
    }
    ClickDistribution(probs)
}

/// Accepted and erroneous-accepted probability given exactly `n` photons from
/// Alice and `m` from Bob, averaged over uniformly random bits (and Z-basis
/// extinction flips).
pub fn photon_yield(params: &ChannelParams, basis: Basis, n: u32, m: u32) -> YieldPair {
    let mut out = YieldPair::default();
    for (bit_a, bit_b, sent_a, sent_b, w) in bit_mixture(params, basis) {
        let dist = click_distribution(
            params,
            mode_amplitudes(basis, sent_a),
            mode_amplitudes(basis, sent_b),
            n,
            m,
        );
        let accepted = dist.accepted();
        out.gain += w * accepted;
        if bit_a == bit_b {
            out.error_gain += w * accepted;
        }
    }
    out
}

/// Smallest `N` with Poisson(`mean`) tail mass `P(X > N)` below `tail`.
pub fn poisson_cutoff(mean: f64, tail: f64) -> u32 {
    let mut p = (-mean).exp();
    let mut cdf = p;
    let mut k = 0u32;
    while 1.0 - cdf >= tail && k < 10_000 {
        k += 1;
        p *= mean / k as f64;
        cdf += p;
        if p == 0.0 && k as f64 > mean {
            break;
        }
    }
    k
}

/// Tail mass below which photon-number sums are truncated.
pub const POISSON_TAIL: f64 = 1e-12;

fn poisson_weights(mean: f64, cutoff: u32) -> Vec<f64> {
    let mut w = Vec::with_capacity(cutoff as usize + 1);
    let mut p = (-mean).exp();
    for k in 0..=cutoff {
        if k > 0 {
            p *= mean / k as f64;
        }
        w.push(p);
    }
    w
}

/// Tables built by Poisson-mixing the photon-number yields,
/// `Q = Σ P(n) P(m) Y_nm`, truncated where the tail mass drops below
/// [`POISSON_TAIL`] for each party.
pub fn photon_number_tables(
    params: &ChannelParams,
    intensities: &IntensitySet,
    basis: Basis,
) -> MeasuredTables {
    let max_a = poisson_cutoff(intensities.alice().mu, POISSON_TAIL);
    let max_b = poisson_cutoff(intensities.bob().mu, POISSON_TAIL);
    let yields: Vec<Vec<YieldPair>> = (0..=max_a)
        .map(|n| (0..=max_b).map(|m| photon_yield(params, basis, n, m)).collect())
        .collect();

    let mut tables = MeasuredTables::zeros(basis);
    for (a, b) in pairs() {
        let (mu_a, mu_b) = intensities.pair(a, b);
        let wa = poisson_weights(mu_a, poisson_cutoff(mu_a, POISSON_TAIL));
        let wb = poisson_weights(mu_b, poisson_cutoff(mu_b, POISSON_TAIL));
        let mut total = YieldPair::default();
        for (n, pa) in wa.iter().enumerate() {
            for (m, pb) in wb.iter().enumerate() {
                let y = yields[n][m];
                total.gain += pa * pb * y.gain;
                total.error_gain += pa * pb * y.error_gain;
            }
        }
        let (i, j) = (a.index(), b.index());
        tables.gain[i][j] = total.gain;
        tables.qber[i][j] = total.qber().unwrap_or(0.0);
    }
    tables
}
