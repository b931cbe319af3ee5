//! Table files and analysis reports.
//!
//! Table file format (UTF-8, comma separated, one record per line):
//!
//! ```text
//! basis,ia,ib,gain,qber,qber_std,accepted
//! Z,mu,mu,1.819e-4,0.0188,0.001,
//! ```
//!
//! The header is mandatory, `#` lines and blank lines are skipped, and the two
//! trailing fields may be empty. Each basis needs exactly the nine
//! `(ia, ib)` pairs over `{mu, nu, omega}`. Gains are absolute probabilities.
//!
//! Reports are JSON documents with a fixed key order. Echoed inputs keep full
//! precision so a report can be re-run; derived numbers are rounded to six
//! significant digits.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::BracketingAudit;
use crate::decoy::{DecoyError, E11Source, KeyRateInput, KeyRateResult};
use crate::fixtures::ReferenceValue;
use crate::tables::{pairs, Basis, IntensitySet, Level, MeasuredTables};

pub const TABLE_HEADER: &str = "basis,ia,ib,gain,qber,qber_std,accepted";
pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: {message}")]
    Validation { line: usize, message: String },
    #[error("incomplete {basis}-basis table, missing: {}", missing.join(" "))]
    Incomplete { basis: Basis, missing: Vec<String> },
    #[error("standard deviation undefined: {0}")]
    UndefinedStd(String),
    #[error("malformed report: {0}")]
    Report(String),
    #[error("report inputs invalid: {0}")]
    ReportInputs(#[from] DecoyError),
}

impl DataError {
    /// Malformed text as opposed to well-formed but invalid content.
    pub fn is_syntax(&self) -> bool {
        matches!(self, DataError::Syntax { .. } | DataError::Report(_))
    }
}

/// One row of a table file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRecord {
    pub basis: Basis,
    pub ia: Level,
    pub ib: Level,
    pub gain: f64,
    pub qber: f64,
    pub qber_std: Option<f64>,
    pub accepted: Option<u64>,
}

fn syntax(line: usize, message: impl Into<String>) -> DataError {
    DataError::Syntax {
        line,
        message: message.into(),
    }
}

fn invalid(line: usize, message: impl Into<String>) -> DataError {
    DataError::Validation {
        line,
        message: message.into(),
    }
}

fn parse_number(line: usize, name: &str, field: &str) -> Result<f64, DataError> {
    let value: f64 = field
        .parse()
        .map_err(|_| syntax(line, format!("{name}: `{field}` is not a number")))?;
    if !value.is_finite() {
        return Err(invalid(line, format!("{name} must be finite, got `{field}`")));
    }
    if value < 0.0 {
        return Err(invalid(line, format!("{name} must be non-negative, got {value}")));
    }
    Ok(value)
}

fn parse_probability(line: usize, name: &str, field: &str) -> Result<f64, DataError> {
    let value = parse_number(line, name, field)?;
    if value > 1.0 {
        return Err(invalid(line, format!("{name} must not exceed 1, got {value}")));
    }
    Ok(value)
}

fn parse_record(line: usize, text: &str) -> Result<TableRecord, DataError> {
    let fields: Vec<&str> = text.split(',').map(str::trim).collect();
    if fields.len() != 7 {
        return Err(syntax(line, format!("expected 7 fields, found {}", fields.len())));
    }
    let basis: Basis = fields[0].parse().map_err(|e: String| syntax(line, e))?;
    let ia: Level = fields[1].parse().map_err(|e: String| syntax(line, e))?;
    let ib: Level = fields[2].parse().map_err(|e: String| syntax(line, e))?;
    let gain = parse_probability(line, "gain", fields[3])?;
    let qber = parse_probability(line, "qber", fields[4])?;
    let qber_std = match fields[5] {
        "" => None,
        f => Some(parse_number(line, "qber_std", f)?),
    };
    let accepted = match fields[6] {
        "" => None,
        f => Some(
            f.parse::<u64>()
                .map_err(|_| syntax(line, format!("accepted: `{f}` is not a count")))?,
        ),
    };
    Ok(TableRecord {
        basis,
        ia,
        ib,
        gain,
        qber,
        qber_std,
        accepted,
    })
}

/// Parse a table file into `(Z, X)` tables.
pub fn parse_tables(content: &str) -> Result<(MeasuredTables, MeasuredTables), DataError> {
    let content = content.strip_prefix('\u{feff}').unwrap_or(content);
    let mut header_seen = false;
    let mut records = Vec::new();
    for (idx, raw) in content.lines().enumerate() {
        let line = idx + 1;
        let text = raw.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        if !header_seen {
            let header: Vec<&str> = text.split(',').map(str::trim).collect();
            if header.join(",") != TABLE_HEADER {
                return Err(syntax(line, format!("expected header `{TABLE_HEADER}`")));
            }
            header_seen = true;
            continue;
        }
        records.push((line, parse_record(line, text)?));
    }
    tables_from_records(records)
}

fn tables_from_records(
    records: Vec<(usize, TableRecord)>,
) -> Result<(MeasuredTables, MeasuredTables), DataError> {
    let mut z = MeasuredTables::zeros(Basis::Z);
    let mut x = MeasuredTables::zeros(Basis::X);
    let mut seen = [[[false; 3]; 3]; 2];
    for (line, r) in records {
        let (tables, slot) = match r.basis {
            Basis::Z => (&mut z, &mut seen[0]),
            Basis::X => (&mut x, &mut seen[1]),
        };
        let (i, j) = (r.ia.index(), r.ib.index());
        if slot[i][j] {
            return Err(invalid(
                line,
                format!("duplicate entry {},{},{}", r.basis, r.ia.label(), r.ib.label()),
            ));
        }
        slot[i][j] = true;
        tables.gain[i][j] = r.gain;
        tables.qber[i][j] = r.qber;
        tables.qber_std[i][j] = r.qber_std;
        tables.accepted[i][j] = r.accepted;
    }
    for (basis, slot) in [(Basis::Z, &seen[0]), (Basis::X, &seen[1])] {
        let missing: Vec<String> = pairs()
            .filter(|(a, b)| !slot[a.index()][b.index()])
            .map(|(a, b)| format!("{},{}", a.label(), b.label()))
            .collect();
        if !missing.is_empty() {
            return Err(DataError::Incomplete { basis, missing });
        }
    }
    Ok((z, x))
}

/// Rows of one basis in row-major order.
pub fn table_records(tables: &MeasuredTables) -> Vec<TableRecord> {
    pairs()
        .map(|(a, b)| {
            let (i, j) = (a.index(), b.index());
            TableRecord {
                basis: tables.basis,
                ia: a,
                ib: b,
                gain: tables.gain[i][j],
                qber: tables.qber[i][j],
                qber_std: tables.qber_std[i][j],
                accepted: tables.accepted[i][j],
            }
        })
        .collect()
}

/// Serialize both bases in the table file format. Floats use the shortest
/// representation that parses back to the same value.
pub fn write_tables(z: &MeasuredTables, x: &MeasuredTables) -> String {
    let mut out = String::with_capacity(1024);
    out.push_str(TABLE_HEADER);
    out.push('\n');
    for r in table_records(z).into_iter().chain(table_records(x)) {
        let std = r.qber_std.map(|s| s.to_string()).unwrap_or_default();
        let acc = r.accepted.map(|a| a.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{:e},{},{},{}\n",
            r.basis,
            r.ia.label(),
            r.ib.label(),
            r.gain,
            r.qber,
            std,
            acc
        ));
    }
    out
}

/// Binomial standard error `sqrt(p(1-p)/n)` of an error fraction.
pub fn qber_std(error_count: u64, accepted_count: u64) -> Result<f64, DataError> {
    if accepted_count == 0 {
        return Err(DataError::UndefinedStd("no accepted events".into()));
    }
    if error_count > accepted_count {
        return Err(DataError::UndefinedStd(format!(
            "{error_count} errors exceed {accepted_count} accepted events"
        )));
    }
    let n = accepted_count as f64;
    let p = error_count as f64 / n;
    Ok((p * (1.0 - p) / n).sqrt())
}

/// Round to six significant digits.
pub fn six_sig(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.5e}").parse().unwrap_or(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Measured,
    SimulatedAnalytic,
    SimulatedMonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportInputs {
    pub provenance: Provenance,
    pub intensities: IntensitySet,
    pub q: f64,
    pub f: f64,
    pub n_pulses: Option<f64>,
    pub e11_x_upper: Option<f64>,
    pub tables: Vec<TableRecord>,
}

impl ReportInputs {
    pub fn from_input(input: &KeyRateInput, provenance: Provenance) -> Self {
        let mut tables = table_records(&input.tables_z);
        tables.extend(table_records(&input.tables_x));
        Self {
            provenance,
            intensities: input.intensities,
            q: input.q,
            f: input.f,
            n_pulses: input.n_pulses,
            e11_x_upper: input.e11_x_upper,
            tables,
        }
    }

    /// Rebuild the pipeline input these fields echo.
    pub fn to_key_rate_input(&self) -> Result<KeyRateInput, DataError> {
        let records = self.tables.iter().cloned().map(|r| (0, r)).collect();
        let (tables_z, tables_x) = tables_from_records(records)?;
        let input = KeyRateInput {
            intensities: self.intensities,
            tables_z,
            tables_x,
            q: self.q,
            f: self.f,
            n_pulses: self.n_pulses,
            e11_x_upper: self.e11_x_upper,
        };
        input.validate()?;
        Ok(input)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsSection {
    pub qm1_z: f64,
    pub qm2_z: f64,
    pub qm1_x: f64,
    pub qm2_x: f64,
    pub y11_z_lower: f64,
    pub y11_x_lower: f64,
    pub e11_x_upper: f64,
    pub y11_z_unclamped: f64,
    pub y11_x_unclamped: f64,
    pub e11_x_unclamped: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyRateSection {
    pub rate_per_pulse: f64,
    pub rate_raw: f64,
    pub q11_z_lower: f64,
    pub entropy_e11: f64,
    pub entropy_qber: f64,
    pub total_key_bits: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceCheck {
    pub quantity: String,
    pub published: f64,
    pub computed: f64,
    pub relative_deviation: f64,
    pub tolerance: f64,
    pub within_tolerance: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFlags {
    pub e11_source: E11Source,
    pub y11_z_clamped: bool,
    pub y11_x_clamped: bool,
    pub e11_x_clamped: bool,
    pub rate_clamped: bool,
    pub undefined_qber_cells: Vec<String>,
    pub reference_checks: Vec<ReferenceCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub schema_version: u32,
    pub inputs: ReportInputs,
    pub bounds: BoundsSection,
    pub key_rate: KeyRateSection,
    pub flags: ReportFlags,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audit: Option<BracketingAudit>,
}

fn reference_check(reference: &ReferenceValue, result: &KeyRateResult) -> ReferenceCheck {
    let b = &result.bounds;
    let computed = match reference.quantity {
        "qm1_z" => b.qm1_z,
        "qm2_z" => b.qm2_z,
        "qm1_x" => b.qm1_x,
        "qm2_x" => b.qm2_x,
        "y11_z_lower" => b.y11_z_lower,
        "y11_x_lower" => b.y11_x_lower,
        // Compare the estimate, not a supplied value.
        "e11_x_upper" => b.e11_x_unclamped.map_or(f64::NAN, |e| e.clamp(0.0, 0.5)),
        "rate_per_pulse" => result.rate_per_pulse,
        _ => f64::NAN,
    };
    let deviation = (computed - reference.published) / reference.published;
    ReferenceCheck {
        quantity: reference.quantity.to_string(),
        published: reference.published,
        computed: six_sig(computed),
        relative_deviation: six_sig(deviation),
        tolerance: reference.tolerance,
        within_tolerance: deviation.abs() <= reference.tolerance,
    }
}

impl AnalysisReport {
    pub fn new(
        input: &KeyRateInput,
        result: &KeyRateResult,
        provenance: Provenance,
        references: &[ReferenceValue],
    ) -> Self {
        let b = &result.bounds;
        let mut undefined = Vec::new();
        for tables in [&input.tables_z, &input.tables_x] {
            for (a, c) in tables.undefined_qber_cells() {
                undefined.push(format!("{}:{},{}", tables.basis, a.label(), c.label()));
            }
        }
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            inputs: ReportInputs::from_input(input, provenance),
            bounds: BoundsSection {
                qm1_z: six_sig(b.qm1_z),
                qm2_z: six_sig(b.qm2_z),
                qm1_x: six_sig(b.qm1_x),
                qm2_x: six_sig(b.qm2_x),
                y11_z_lower: six_sig(b.y11_z_lower),
                y11_x_lower: six_sig(b.y11_x_lower),
                e11_x_upper: six_sig(b.e11_x_upper),
                y11_z_unclamped: six_sig(b.y11_z_unclamped),
                y11_x_unclamped: six_sig(b.y11_x_unclamped),
                e11_x_unclamped: b.e11_x_unclamped.map(six_sig),
            },
            key_rate: KeyRateSection {
                rate_per_pulse: six_sig(result.rate_per_pulse),
                rate_raw: six_sig(result.rate_raw),
                q11_z_lower: six_sig(result.q11_z_lower),
                entropy_e11: six_sig(result.entropy_e11),
                entropy_qber: six_sig(result.entropy_qber),
                total_key_bits: result.total_key_bits.map(six_sig),
            },
            flags: ReportFlags {
                e11_source: b.e11_source,
                y11_z_clamped: b.y11_z_clamped(),
                y11_x_clamped: b.y11_x_clamped(),
                e11_x_clamped: b.e11_x_clamped(),
                rate_clamped: result.rate_raw < 0.0,
                undefined_qber_cells: undefined,
                reference_checks: references
                    .iter()
                    .map(|r| reference_check(r, result))
                    .collect(),
            },
            audit: None,
        }
    }

    pub fn with_audit(mut self, audit: BracketingAudit) -> Self {
        self.audit = Some(audit);
        self
    }
}

/// Render a report as pretty JSON with a trailing newline.
pub fn emit_report(report: &AnalysisReport) -> String {
    let mut text = serde_json::to_string_pretty(report).expect("report fields are serializable");
    text.push('\n');
    text
}

pub fn parse_report(text: &str) -> Result<AnalysisReport, DataError> {
    serde_json::from_str(text).map_err(|e| DataError::Report(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoy::estimate_all;
    use crate::fixtures::{self, BUNDLED_TABLES_CSV, PUBLISHED_REFERENCE};

    const GOOD_ROW: &str = "Z,mu,mu,1.819e-4,0.0188,0.001,";

    fn with_rows(rows: &[&str]) -> String {
        let mut s = String::from(TABLE_HEADER);
        for r in rows {
            s.push('\n');
            s.push_str(r);
        }
        s
    }

    #[test]
    fn parses_bundled_fixture() {
        let (z, x) = parse_tables(BUNDLED_TABLES_CSV).unwrap();
        assert_eq!(z.gain(Level::Mu, Level::Mu), 1.819e-4);
        assert_eq!(z.qber(Level::Mu, Level::Mu), 0.0188);
        assert_eq!(x.gain(Level::Omega, Level::Mu), 5.207e-4);
        assert_eq!(x.qber_std[2][2], Some(0.052));
    }

    #[test]
    fn empty_input_is_incomplete() {
        assert!(matches!(parse_tables(""), Err(DataError::Incomplete { basis: Basis::Z, .. })));
        assert!(matches!(
            parse_tables("# only a comment\n"),
            Err(DataError::Incomplete { .. })
        ));
    }

    #[test]
    fn header_only_is_incomplete() {
        let err = parse_tables(TABLE_HEADER).unwrap_err();
        match err {
            DataError::Incomplete { basis, missing } => {
                assert_eq!(basis, Basis::Z);
                assert_eq!(missing.len(), 9);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_header_is_syntax_error() {
        let err = parse_tables(GOOD_ROW).unwrap_err();
        assert!(err.is_syntax());
        assert!(matches!(err, DataError::Syntax { line: 1, .. }));
    }

    #[test]
    fn negative_gain_is_validation_error() {
        let err = parse_tables(&with_rows(&["Z,mu,mu,-1,0.0188,,"])).unwrap_err();
        assert!(matches!(err, DataError::Validation { line: 2, .. }), "{err:?}");
    }

    #[test]
    fn malformed_rows_report_line_numbers() {
        let text = format!("# c\n{TABLE_HEADER}\n{GOOD_ROW}\nZ,mu,nu,abc,0.1,,\n");
        match parse_tables(&text).unwrap_err() {
            DataError::Syntax { line, .. } => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
        let err = parse_tables(&with_rows(&["Z,mu,mu,1e-4,0.1"])).unwrap_err();
        assert!(err.is_syntax());
        let err = parse_tables(&with_rows(&["Z,mu,sigma,1e-4,0.1,,"])).unwrap_err();
        assert!(err.is_syntax());
        let err = parse_tables(&with_rows(&["Z,mu,mu,1e-4,0.1,,2.5"])).unwrap_err();
        assert!(err.is_syntax());
    }

    #[test]
    fn rejects_duplicates_and_out_of_range() {
        let err = parse_tables(&with_rows(&[GOOD_ROW, GOOD_ROW])).unwrap_err();
        assert!(matches!(err, DataError::Validation { line: 3, .. }));
        let err = parse_tables(&with_rows(&["X,mu,mu,1.5,0.1,,"])).unwrap_err();
        assert!(matches!(err, DataError::Validation { .. }));
        let err = parse_tables(&with_rows(&["X,mu,mu,1e-3,NaN,,"])).unwrap_err();
        assert!(matches!(err, DataError::Validation { .. }));
    }

    #[test]
    fn write_then_parse_is_exact() {
        let (z, x) = fixtures::published_tables();
        let text = write_tables(&z, &x);
        let (z2, x2) = parse_tables(&text).unwrap();
        assert_eq!(z, z2);
        assert_eq!(x, x2);
    }

    #[test]
    fn qber_std_examples() {
        // n = p(1-p)/0.001^2 with p = 0.0188 gives 18446.56; round to a count.
        let n = 18_447u64;
        let errors = (0.0188 * n as f64).round() as u64;
        let s = qber_std(errors, n).unwrap();
        assert!((s - 0.001).abs() < 2e-6, "{s}");
        assert_eq!(qber_std(0, 100).unwrap(), 0.0);
        assert_eq!(qber_std(100, 100).unwrap(), 0.0);
        assert!(qber_std(0, 0).is_err());
        assert!(qber_std(5, 4).is_err());
    }

    #[test]
    fn six_sig_rounding() {
        assert_eq!(six_sig(4.763_939_804_873_875e-6), 4.76394e-6);
        assert_eq!(six_sig(0.0), 0.0);
        assert_eq!(six_sig(-1.234_567_89), -1.23457);
    }

    fn published_report() -> (KeyRateInput, AnalysisReport) {
        let (z, x) = fixtures::published_tables();
        let input = KeyRateInput {
            intensities: IntensitySet::symmetric(0.4, 0.1, 0.01).unwrap(),
            tables_z: z,
            tables_x: x,
            q: 1.0 / 18.0,
            f: 1.16,
            n_pulses: Some(6.14e10),
            e11_x_upper: Some(0.0507),
        };
        let result = estimate_all(&input).unwrap();
        let report = AnalysisReport::new(&input, &result, Provenance::Measured, &PUBLISHED_REFERENCE);
        (input, report)
    }

    #[test]
    fn report_emission_is_deterministic_and_ordered() {
        let (_, report) = published_report();
        let a = emit_report(&report);
        let b = emit_report(&report);
        assert_eq!(a, b);
        let order: Vec<usize> = ["\"schema_version\"", "\"inputs\"", "\"bounds\"", "\"key_rate\"", "\"flags\""]
            .iter()
            .map(|k| a.find(k).unwrap())
            .collect();
        assert!(order.windows(2).all(|w| w[0] < w[1]));
        assert!(!a.contains("\"audit\""));
    }

    #[test]
    fn report_round_trip_reproduces_result() {
        let (input, report) = published_report();
        let parsed = parse_report(&emit_report(&report)).unwrap();
        assert_eq!(parsed, report);
        let rebuilt = parsed.inputs.to_key_rate_input().unwrap();
        assert_eq!(rebuilt, input);
        assert_eq!(estimate_all(&rebuilt).unwrap(), estimate_all(&input).unwrap());
    }

    #[test]
    fn reference_checks_flag_x_basis() {
        let (_, report) = published_report();
        let check = |q: &str| {
            report
                .flags
                .reference_checks
                .iter()
                .find(|c| c.quantity == q)
                .unwrap()
                .clone()
        };
        assert!(check("qm1_z").within_tolerance);
        assert!(check("qm2_z").within_tolerance);
        assert!(check("y11_z_lower").within_tolerance);
        assert!(!check("qm1_x").within_tolerance);
        assert!(!check("e11_x_upper").within_tolerance);
        assert_eq!(report.flags.e11_source, E11Source::Supplied);
    }

    #[test]
    fn malformed_report_is_rejected() {
        assert!(parse_report("{").unwrap_err().is_syntax());
    }
}
