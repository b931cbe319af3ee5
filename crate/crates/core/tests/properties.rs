use pnp_mdiqkd::channel::{analytic_tables, mc_tables, photon_number_tables, photon_yield, ChannelParams};
use pnp_mdiqkd::data_io::{parse_tables, write_tables};
use pnp_mdiqkd::decoy::{
    binary_entropy, e11_upper_unclamped, estimate_bounds, key_rate, qm_pair, y11_lower_unclamped, KeyRateInput,
};
use pnp_mdiqkd::fixtures::{published_tables, EC_EFFICIENCY, SIGNAL_PAIR_PROBABILITY};
use pnp_mdiqkd::{Basis, IntensitySet, Level, MeasuredTables};
use proptest::prelude::*;

fn channel() -> impl Strategy<Value = ChannelParams> {
    (
        0.0f64..60.0,
        0.0f64..60.0,
        0.15f64..0.25,
        0.05f64..0.6,
        0.0f64..1e-4,
        0.0f64..1e-4,
        0.0f64..0.1,
        0.0f64..0.02,
    )
        .prop_map(|(la, lb, att, eta, dark, bg, mis, ext)| ChannelParams {
            length_a: la,
            length_b: lb,
            attenuation: att,
            detector_efficiency: eta,
            dark_count_prob: dark,
            background_prob: bg,
            misalignment: mis,
            extinction_error: ext,
        })
}

fn intensities() -> impl Strategy<Value = IntensitySet> {
    (0.2f64..0.8, 0.03f64..0.15, 0.0f64..0.02)
        .prop_map(|(mu, nu, omega)| IntensitySet::symmetric(mu, nu, omega).unwrap())
}

fn field_input() -> KeyRateInput {
    let (tables_z, tables_x) = published_tables();
    KeyRateInput {
        intensities: IntensitySet::symmetric(0.4, 0.1, 0.01).unwrap(),
        tables_z,
        tables_x,
        q: SIGNAL_PAIR_PROBABILITY,
        f: EC_EFFICIENCY,
        n_pulses: None,
        e11_x_upper: None,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn entropy_symmetric(p in 0.0f64..=1.0) {
        let (a, b) = (binary_entropy(p).unwrap(), binary_entropy(1.0 - p).unwrap());
        prop_assert!((a - b).abs() <= 1e-15);
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn entropy_increasing_below_half(p in 0.0f64..0.5, d in 0.0f64..0.5) {
        let q = (p + d).min(0.5);
        prop_assert!(binary_entropy(q).unwrap() >= binary_entropy(p).unwrap());
    }

    #[test]
    fn bounds_scale_linearly_with_gains(c in 1e-3f64..1e3) {
        let input = field_input();
        let is = &input.intensities;
        for tables in [&input.tables_z, &input.tables_x] {
            let scaled = tables.scaled_gains(c);
            let (q1, q2) = qm_pair(tables, is);
            let (s1, s2) = qm_pair(&scaled, is);
            prop_assert!((s1 - c * q1).abs() <= 1e-12 * (c * q1).abs());
            prop_assert!((s2 - c * q2).abs() <= 1e-12 * (c * q2).abs());
            let y = y11_lower_unclamped(q1, q2, is).unwrap();
            let ys = y11_lower_unclamped(s1, s2, is).unwrap();
            prop_assert!((ys - c * y).abs() <= 1e-12 * (c * y).abs());
        }
    }

    #[test]
    fn rate_non_increasing_in_errors(e1 in 0.0f64..0.5, e2 in 0.0f64..0.5, q1 in 0.0f64..0.2, q2 in 0.0f64..0.2) {
        let mut input = field_input();
        let bounds = estimate_bounds(&input).unwrap();
        let rate = |e11: f64, qber: f64, input: &mut KeyRateInput| {
            input.tables_z.qber[0][0] = qber;
            let mut b = bounds.clone();
            b.e11_x_upper = e11;
            key_rate(input, &b).unwrap()
        };
        let (lo_e, hi_e) = (e1.min(e2), e1.max(e2));
        let (lo_q, hi_q) = (q1.min(q2), q1.max(q2));
        let base = rate(lo_e, lo_q, &mut input);
        prop_assert!(rate(hi_e, lo_q, &mut input).rate_per_pulse <= base.rate_per_pulse);
        prop_assert!(rate(lo_e, hi_q, &mut input).rate_per_pulse <= base.rate_per_pulse);
        prop_assert!(rate(hi_e, lo_q, &mut input).rate_raw <= base.rate_raw);
        prop_assert!(rate(lo_e, hi_q, &mut input).rate_raw <= base.rate_raw);
    }

    #[test]
    fn rate_is_clamped_and_within_sifted_budget(e11 in 0.0f64..=0.5, qber in 0.0f64..=1.0, frac in 0.0f64..=1.0) {
        let mut input = field_input();
        input.tables_z.qber[0][0] = qber;
        let mut bounds = estimate_bounds(&input).unwrap();
        bounds.e11_x_upper = e11;
        // Any yield at or below the bound the tables support.
        bounds.y11_z_lower *= frac;
        let r = key_rate(&input, &bounds).unwrap();
        prop_assert!(r.rate_per_pulse >= 0.0);
        prop_assert_eq!(r.rate_per_pulse, r.rate_raw.max(0.0));
        prop_assert!(r.rate_per_pulse <= input.q * input.tables_z.gain(Level::Mu, Level::Mu));
    }

    #[test]
    fn table_file_round_trips(gains in prop::array::uniform9(0.0f64..=1.0), qbers in prop::array::uniform9(0.0f64..=1.0)) {
        let mut z = MeasuredTables::zeros(Basis::Z);
        let mut x = MeasuredTables::zeros(Basis::X);
        for k in 0..9 {
            z.gain[k / 3][k % 3] = gains[k];
            z.qber[k / 3][k % 3] = qbers[k];
            x.gain[k % 3][k / 3] = gains[k] * 0.5;
            x.qber[k % 3][k / 3] = qbers[k] * 0.5;
        }
        let (z2, x2) = parse_tables(&write_tables(&z, &x)).unwrap();
        prop_assert_eq!(z2, z);
        prop_assert_eq!(x2, x);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// On tables that are exact Poisson mixtures of the model's photon-number
    /// yields, the decoy bounds hold without statistical slack.
    #[test]
    fn exact_poisson_tables_are_bracketed(params in channel(), is in intensities()) {
        for basis in Basis::ALL {
            let tables = photon_number_tables(&params, &is, basis);
            let truth = photon_yield(&params, basis, 1, 1);
            let (q1, q2) = qm_pair(&tables, &is);
            let y = y11_lower_unclamped(q1, q2, &is).unwrap();
            prop_assert!(y <= truth.gain * (1.0 + 1e-12), "{basis}: {y} > {}", truth.gain);
            if basis == Basis::X && y > 0.0 {
                let e = e11_upper_unclamped(&tables, &is, y).unwrap();
                let e_true = truth.qber().unwrap();
                prop_assert!(e >= e_true * (1.0 - 1e-12), "{e} < {e_true}");
            }
        }
    }

    #[test]
    fn analytic_gain_grows_with_intensity(params in channel(), is in intensities()) {
        // Below detector saturation every gain rises with either intensity.
        for basis in Basis::ALL {
            let t = analytic_tables(&params, &is, basis);
            for fixed in 0..3 {
                for lower in 0..2 {
                    // Level order is mu > nu > omega, so a larger index is dimmer.
                    prop_assert!(t.gain[lower][fixed] >= t.gain[lower + 1][fixed]);
                    prop_assert!(t.gain[fixed][lower] >= t.gain[fixed][lower + 1]);
                }
            }
        }
    }

    #[test]
    fn monte_carlo_is_deterministic(params in channel(), seed in any::<u64>()) {
        let is = IntensitySet::symmetric(0.4, 0.1, 0.01).unwrap();
        let a = mc_tables(&params, &is, Basis::X, 2_000, seed).unwrap();
        let b = mc_tables(&params, &is, Basis::X, 2_000, seed).unwrap();
        prop_assert_eq!(a, b);
    }
}
