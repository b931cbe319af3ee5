use std::path::Path;
use std::process::{Command, Output};

use pnp_mdiqkd::data_io::{parse_report, parse_tables, six_sig};
use pnp_mdiqkd::decoy::estimate_all;
use pnp_mdiqkd::fixtures::BUNDLED_TABLES_CSV;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pnp-mdiqkd"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn zero_tables() -> String {
    let mut s = String::from("basis,ia,ib,gain,qber,qber_std,accepted\n");
    for basis in ["Z", "X"] {
        for a in ["mu", "nu", "omega"] {
            for b in ["mu", "nu", "omega"] {
                s.push_str(&format!("{basis},{a},{b},0,0,,\n"));
            }
        }
    }
    s
}

fn entries(dir: &Path) -> usize {
    std::fs::read_dir(dir).unwrap().count()
}

#[test]
fn bare_estimate_reproduces_published_rate() {
    let out = run(&["estimate"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = json(&out)["key_rate"]["rate_per_pulse"].as_f64().unwrap();
    assert!((r - 4.7e-6).abs() <= 0.02 * 4.7e-6, "{r}");
}

#[test]
fn estimate_flags_x_basis_deviation() {
    let out = run(&["estimate"]);
    let report = json(&out);
    let checks = report["flags"]["reference_checks"].as_array().unwrap();
    let find = |q: &str| checks.iter().find(|c| c["quantity"] == q).unwrap();
    assert_eq!(find("qm1_z")["within_tolerance"], true);
    assert_eq!(find("y11_z_lower")["within_tolerance"], true);
    assert_eq!(find("qm1_x")["within_tolerance"], false);
    let qm1_x = report["bounds"]["qm1_x"].as_f64().unwrap();
    assert!((qm1_x - 0.420e-4).abs() <= 0.01 * 0.420e-4);
}

#[test]
fn estimate_file_without_comparison_has_no_checks() {
    let dir = tempfile::tempdir().unwrap();
    let tables = dir.path().join("t.csv");
    std::fs::write(&tables, BUNDLED_TABLES_CSV).unwrap();
    let out = run(&["estimate", "--tables", tables.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let report = json(&out);
    assert!(report["flags"]["reference_checks"].as_array().unwrap().is_empty());
    assert_eq!(report["flags"]["e11_source"], "estimated");
    let out = run(&["estimate", "--tables", tables.to_str().unwrap(), "--compare-published"]);
    assert_eq!(json(&out)["flags"]["reference_checks"].as_array().unwrap().len(), 7);
}

#[test]
fn estimate_report_file_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    let out = run(&["estimate", "--n-pulses", "6.14e10", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(&path).unwrap();
    let report = parse_report(&text).unwrap();
    let input = report.inputs.to_key_rate_input().unwrap();
    let again = estimate_all(&input).unwrap();
    assert_eq!(six_sig(again.rate_per_pulse), report.key_rate.rate_per_pulse);
    assert_eq!(six_sig(again.bounds.y11_z_lower), report.bounds.y11_z_lower);
    assert_eq!(again.total_key_bits.map(six_sig), report.key_rate.total_key_bits);
    // Rerunning gives the same bytes.
    let path2 = dir.path().join("report2.json");
    run(&["estimate", "--n-pulses", "6.14e10", "--out", path2.to_str().unwrap()]);
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
}

#[test]
fn missing_file_fails_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("r.json");
    let out = run(&[
        "estimate",
        "--tables",
        dir.path().join("nope.csv").to_str().unwrap(),
        "--out",
        report.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
    assert_eq!(entries(dir.path()), 0);
}

#[test]
fn zero_tables_are_degenerate() {
    let dir = tempfile::tempdir().unwrap();
    let tables = dir.path().join("zero.csv");
    std::fs::write(&tables, zero_tables()).unwrap();
    let report = dir.path().join("r.json");
    let out = run(&["estimate", "--tables", tables.to_str().unwrap(), "--out", report.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!report.exists());
    assert_eq!(entries(dir.path()), 1);
}

#[test]
fn flag_errors_map_to_exit_codes() {
    assert_eq!(run(&["estimate", "--q", "abc"]).status.code(), Some(2));
    assert_eq!(run(&["bogus"]).status.code(), Some(2));
    assert_eq!(run(&["estimate", "--q", "0"]).status.code(), Some(3));
    assert_eq!(run(&["estimate", "--f", "0.5"]).status.code(), Some(3));
    assert_eq!(run(&["estimate", "--nu", "0.5"]).status.code(), Some(3));
    assert_eq!(run(&["estimate", "--nu", "0.4"]).status.code(), Some(4));
    assert_eq!(run(&["simulate", "--det-eff", "0"]).status.code(), Some(3));
    assert_eq!(run(&["simulate", "--mode", "quantum"]).status.code(), Some(2));
    assert_eq!(run(&["timing", "--resolution", "0"]).status.code(), Some(3));
    assert_eq!(run(&["sweep", "--axis", "colour", "--from", "0", "--to", "1"]).status.code(), Some(2));
    assert_eq!(run(&["sweep", "--axis", "dark", "--from", "0", "--to", "1", "--steps", "0"]).status.code(), Some(3));
}

#[test]
fn ideal_analytic_simulation_has_error_free_z() {
    let dir = tempfile::tempdir().unwrap();
    let tables = dir.path().join("t.csv");
    let out = run(&[
        "simulate", "--len-a", "0", "--len-b", "0", "--attenuation", "0", "--det-eff", "1", "--dark", "0",
        "--background", "0", "--misalign", "0", "--extinction", "0", "--tables-out", tables.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(&out);
    assert_eq!(report["inputs"]["provenance"], "simulated-analytic");
    assert!(report["key_rate"]["rate_per_pulse"].as_f64().unwrap() > 0.0);
    let (z, _) = parse_tables(&std::fs::read_to_string(&tables).unwrap()).unwrap();
    assert!(z.qber.iter().flatten().all(|&e| e == 0.0));
}

#[test]
fn monte_carlo_simulation_is_reproducible_and_audited() {
    let dir = tempfile::tempdir().unwrap();
    let paths: Vec<_> = (0..2).map(|k| dir.path().join(format!("t{k}.csv"))).collect();
    let mut reports = Vec::new();
    for p in &paths {
        let out = run(&[
            "simulate", "--mode", "mc", "--trials", "20000", "--seed", "11", "--det-eff", "0.3",
            "--tables-out", p.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        reports.push(out.stdout);
    }
    assert_eq!(std::fs::read(&paths[0]).unwrap(), std::fs::read(&paths[1]).unwrap());
    assert_eq!(reports[0], reports[1]);
    let report: serde_json::Value = serde_json::from_slice(&reports[0]).unwrap();
    assert_eq!(report["inputs"]["provenance"], "simulated-monte-carlo");
    let audit = &report["audit"];
    assert_eq!(audit["trials_per_pair"], 20000);
    for key in ["y11_z", "y11_x", "e11_x"] {
        assert_eq!(audit[key]["bracketed"], true, "{key}: {}", audit[key]);
    }
    // A different seed changes the draws.
    let other = run(&["simulate", "--mode", "mc", "--trials", "20000", "--seed", "12", "--det-eff", "0.3"]);
    assert_ne!(other.stdout, reports[0]);
}

#[test]
fn timing_examples() {
    let out = run(&["timing"]);
    assert_eq!(out.status.code(), Some(0));
    let t = json(&out);
    let thermal = t["arrival"]["thermal_term"].as_f64().unwrap();
    assert!((thermal - 0.14).abs() <= 0.3 * 0.14, "{thermal}");
    assert!(t["delay"]["residual"].as_f64().unwrap().abs() <= 5.0);
    assert_eq!(t["overlap"]["pass"], true);

    let t = json(&run(&["timing", "--len-a", "22", "--len-b", "22"]));
    assert_eq!(t["arrival"]["delta_t0"], 0.0);
    assert_eq!(t["arrival"]["thermal_term"], 0.0);
    assert_eq!(t["delay"]["steps"], 0);
    assert_eq!(t["delay"]["residual"], 0.0);

    let out = run(&["timing", "--forced-residual-ps", "1000"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["overlap"]["pass"], false);
}

#[test]
fn single_point_sweep_matches_simulate() {
    let sweep = run(&["sweep", "--axis", "misalign", "--from", "0.05", "--to", "0.05", "--steps", "1"]);
    assert_eq!(sweep.status.code(), Some(0), "{}", String::from_utf8_lossy(&sweep.stderr));
    let csv = String::from_utf8(sweep.stdout).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    let sim = json(&run(&["simulate", "--misalign", "0.05"]));
    let rate: f64 = row[1].parse().unwrap();
    assert_eq!(rate, sim["key_rate"]["rate_per_pulse"].as_f64().unwrap());
}

#[test]
fn sweep_writes_curve_file() {
    let dir = tempfile::tempdir().unwrap();
    let curve = dir.path().join("curve.csv");
    let out = run(&[
        "sweep", "--axis", "mu", "--from", "0.1", "--to", "0.8", "--steps", "8", "--out",
        curve.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(curve).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 9);
    assert!(lines[0].starts_with("mu,rate_per_pulse"));
    // mu = nu is recorded as a flagged zero-rate point.
    assert!(lines[1].ends_with(",true"));
}
