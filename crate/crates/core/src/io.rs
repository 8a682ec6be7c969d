//! CSV ingestion, TSV curve output and versioned JSON reports.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::claims::{ClaimReport, ClaimVerdict};
use crate::error::{Error, ParseIssue, Result};
use crate::forensics::{ForensicsReport, SensitivityEntry};
use crate::regression::{
    fit_polynomial, fraction_from_counts, predict_flagged, RegressionFit, ScatterData, XKind,
};
use crate::simulation::PowerTable;
use crate::stats::SummaryStats;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositivityRecord {
    pub p_count: f64,
    pub n_count: f64,
    pub outcome: f64,
}

impl PositivityRecord {
    pub fn new(p_count: f64, n_count: f64, outcome: f64) -> Result<Self> {
        let r = Self { p_count, n_count, outcome };
        r.validate().map(|_| r).map_err(|m| Error::InvalidParameter {
            name: "record",
            reason: m,
        })
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if !self.p_count.is_finite() || !self.n_count.is_finite() || !self.outcome.is_finite() {
            return Err("all values must be finite".into());
        }
        if self.p_count < 0.0 || self.n_count < 0.0 {
            return Err("p and n must be nonnegative".into());
        }
        if self.p_count + self.n_count == 0.0 {
            return Err("p and n are both zero; ratio and fraction are undefined".into());
        }
        Ok(())
    }

    /// P/N, absent when N = 0.
    pub fn ratio(&self) -> Option<f64> {
        (self.n_count > 0.0).then(|| self.p_count / self.n_count)
    }

    pub fn fraction(&self) -> f64 {
        fraction_from_counts(self.p_count, self.n_count).expect("validated record has p + n > 0")
    }
}

/// Contents of an input file, by schema.
#[derive(Debug, Clone, PartialEq)]
pub enum Loaded {
    Records(Vec<PositivityRecord>),
    Scatter(ScatterData),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Schema {
    Counts { p: usize, n: usize, outcome: usize },
    Xy { x: usize, y: usize },
}

fn detect_schema(headers: &csv::StringRecord) -> std::result::Result<Schema, String> {
    let find = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    if let (Some(p), Some(n), Some(outcome)) = (find("p"), find("n"), find("outcome")) {
        return Ok(Schema::Counts { p, n, outcome });
    }
    if let (Some(x), Some(y)) = (find("x"), find("y")) {
        return Ok(Schema::Xy { x, y });
    }
    Err(format!(
        "header must contain columns (p,n,outcome) or (x,y); found ({})",
        headers.iter().collect::<Vec<_>>().join(",")
    ))
}

fn cell(record: &csv::StringRecord, idx: usize, name: &str) -> std::result::Result<f64, String> {
    let raw = record.get(idx).ok_or_else(|| format!("missing column '{name}'"))?;
    let v: f64 = raw.parse().map_err(|_| format!("column '{name}': '{raw}' is not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("column '{name}': value must be finite"))
    }
}

/// Parses CSV text. `x_kind` tags the predictor of an (x,y) file and is
/// ignored for count files. Every bad row is reported, not just the first.
pub fn parse_records(text: &str, x_kind: XKind) -> Result<Loaded> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse(vec![ParseIssue { line: 1, message: e.to_string() }]))?
        .clone();
    let schema = detect_schema(&headers)
        .map_err(|message| Error::Parse(vec![ParseIssue { line: 1, message }]))?;

    let mut issues = Vec::new();
    let mut records = Vec::new();
    let mut points = Vec::new();
    for row in reader.records() {
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line() as usize);
                issues.push(ParseIssue { line, message: e.to_string() });
                continue;
            }
        };
        let line = row.position().map_or(0, |p| p.line() as usize);
        if row.iter().all(str::is_empty) {
            continue;
        }
        let parsed = match schema {
            Schema::Counts { p, n, outcome } => (|| {
                let rec = PositivityRecord {
                    p_count: cell(&row, p, "p")?,
                    n_count: cell(&row, n, "n")?,
                    outcome: cell(&row, outcome, "outcome")?,
                };
                rec.validate()?;
                records.push(rec);
                Ok(())
            })(),
            Schema::Xy { x, y } => (|| {
                let xv = cell(&row, x, "x")?;
                let yv = cell(&row, y, "y")?;
                if x_kind == XKind::Fraction && !(0.0..=1.0).contains(&xv) {
                    return Err(format!("fraction x = {xv} outside [0, 1]"));
                }
                if x_kind == XKind::Ratio && xv < 0.0 {
                    return Err(format!("ratio x = {xv} is negative"));
                }
                points.push((xv, yv));
                Ok(())
            })(),
        };
        if let Err(message) = parsed {
            issues.push(ParseIssue { line, message });
        }
    }
    if !issues.is_empty() {
        return Err(Error::Parse(issues));
    }
    Ok(match schema {
        Schema::Counts { .. } => Loaded::Records(records),
        Schema::Xy { .. } => Loaded::Scatter(ScatterData { points, x_kind }),
    })
}

pub fn load_records(path: &Path, x_kind: XKind) -> Result<Loaded> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_records(&text, x_kind)
}

/// Scatter of outcome against ratio or fraction. Ratio drops rows with
/// N = 0 and returns how many were dropped.
pub fn records_to_scatter(records: &[PositivityRecord], x_kind: XKind) -> Result<(ScatterData, usize)> {
    let mut points = Vec::with_capacity(records.len());
    let mut dropped = 0;
    for r in records {
        let x = match x_kind {
            XKind::Fraction => Some(r.fraction()),
            XKind::Ratio => r.ratio(),
            XKind::Raw => Some(r.p_count),
        };
        match x {
            Some(x) => points.push((x, r.outcome)),
            None => dropped += 1,
        }
    }
    Ok((ScatterData::new(points, x_kind)?, dropped))
}

/// A published two-group comparison with a display label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSummary {
    pub label: String,
    #[serde(flatten)]
    pub stats: SummaryStats,
}

/// Parses `label,n1,n2,mean1,mean2,t` rows.
pub fn parse_summaries(text: &str) -> Result<Vec<LabeledSummary>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse(vec![ParseIssue { line: 1, message: e.to_string() }]))?
        .clone();
    let names = ["label", "n1", "n2", "mean1", "mean2", "t"];
    let mut cols = [0usize; 6];
    let mut missing = Vec::new();
    for (slot, name) in cols.iter_mut().zip(names) {
        match headers.iter().position(|h| h.eq_ignore_ascii_case(name)) {
            Some(i) => *slot = i,
            None => missing.push(name),
        }
    }
    if !missing.is_empty() {
        return Err(Error::Parse(vec![ParseIssue {
            line: 1,
            message: format!("missing columns: {}", missing.join(", ")),
        }]));
    }

    let mut issues = Vec::new();
    let mut out = Vec::new();
    for row in reader.records() {
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line() as usize);
                issues.push(ParseIssue { line, message: e.to_string() });
                continue;
            }
        };
        let line = row.position().map_or(0, |p| p.line() as usize);
        let parsed = (|| -> std::result::Result<LabeledSummary, String> {
            let label = row.get(cols[0]).ok_or("missing column 'label'")?.to_string();
            let count = |i: usize, name: &str| -> std::result::Result<u32, String> {
                let raw = row.get(cols[i]).ok_or_else(|| format!("missing column '{name}'"))?;
                raw.parse().map_err(|_| format!("column '{name}': '{raw}' is not a count"))
            };
            let stats = SummaryStats::new(
                count(1, "n1")?,
                count(2, "n2")?,
                cell(&row, cols[3], "mean1")?,
                cell(&row, cols[4], "mean2")?,
                cell(&row, cols[5], "t")?,
            )
            .map_err(|e| e.to_string())?;
            Ok(LabeledSummary { label, stats })
        })();
        match parsed {
            Ok(s) => out.push(s),
            Err(message) => issues.push(ParseIssue { line, message }),
        }
    }
    if !issues.is_empty() {
        return Err(Error::Parse(issues));
    }
    Ok(out)
}

/// Shortest decimal that reads back to the same f64.
fn exact(v: f64) -> String {
    format!("{v:?}")
}

pub fn records_to_csv(records: &[PositivityRecord]) -> String {
    let mut out = String::from("p,n,outcome\n");
    for r in records {
        let _ = writeln!(out, "{},{},{}", exact(r.p_count), exact(r.n_count), exact(r.outcome));
    }
    out
}

/// Input rows with derived ratio and fraction columns. The ratio cell is
/// empty when N = 0.
pub fn transform_csv(records: &[PositivityRecord]) -> String {
    let mut out = String::from("p,n,outcome,ratio,fraction\n");
    for r in records {
        let ratio = r.ratio().map(format_sig).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            format_sig(r.p_count),
            format_sig(r.n_count),
            format_sig(r.outcome),
            ratio,
            format_sig(r.fraction())
        );
    }
    out
}

/// Formats like C's `%.6g`.
pub fn format_sig(v: f64) -> String {
    const DIGITS: i32 = 6;
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..DIGITS).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (DIGITS - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{v:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledForensics {
    pub label: String,
    pub report: ForensicsReport,
    pub sensitivity: Vec<SensitivityEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterizationFits {
    pub x_kind: XKind,
    pub n_used: usize,
    /// Rows left out because the predictor is undefined (N = 0 for ratio).
    pub n_excluded: usize,
    pub linear: RegressionFit,
    pub quadratic: RegressionFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResults {
    pub fits: Vec<ParameterizationFits>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimsResults {
    pub primary: ClaimReport,
    pub upper: ClaimReport,
    /// Quadratic-term test repeated in the other parameterization, when the
    /// input carries counts.
    pub alternate_nonlinearity: Option<AlternateVerdict>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlternateVerdict {
    pub x_kind: XKind,
    pub verdict: ClaimVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "data", rename_all = "snake_case")]
pub enum ReportResults {
    Forensics(Vec<LabeledForensics>),
    Fit(FitResults),
    Claims(Box<ClaimsResults>),
    Power(PowerTable),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub schema_version: u32,
    pub tool_version: String,
    /// SHA-256 of the input bytes.
    pub input_digest: String,
    pub parameters: serde_json::Value,
    pub results: ReportResults,
}

impl AnalysisReport {
    pub fn new(input: &[u8], parameters: serde_json::Value, results: ReportResults) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            input_digest: sha256_hex(input),
            parameters,
            results,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Io(e.to_string()))
    }
}

/// Linear and quadratic fits against both ratio and fraction.
pub fn fit_both_parameterizations(records: &[PositivityRecord]) -> Result<FitResults> {
    let mut fits = Vec::new();
    for kind in [XKind::Ratio, XKind::Fraction] {
        let (data, n_excluded) = records_to_scatter(records, kind)?;
        fits.push(fit_scatter(&data, n_excluded)?);
    }
    Ok(FitResults { fits })
}

pub fn fit_scatter(data: &ScatterData, n_excluded: usize) -> Result<ParameterizationFits> {
    Ok(ParameterizationFits {
        x_kind: data.x_kind,
        n_used: data.len(),
        n_excluded,
        linear: fit_polynomial(data, 1)?,
        quadratic: fit_polynomial(data, 2)?,
    })
}

/// Evenly spaced curve samples over exactly the observed predictor range,
/// one row per x with both fitted curves.
pub fn curves_tsv(results: &FitResults, samples: usize) -> Result<String> {
    let samples = samples.max(2);
    let mut out = String::from("x_kind\tx\tlinear\tquadratic\textrapolated\n");
    for f in &results.fits {
        let (lo, hi) = (f.linear.x_min, f.linear.x_max);
        for i in 0..samples {
            let x = if i + 1 == samples {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (samples - 1) as f64
            };
            let lin = predict_flagged(&f.linear, x)?;
            let quad = predict_flagged(&f.quadratic, x)?;
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                f.x_kind,
                format_sig(x),
                format_sig(lin.y),
                format_sig(quad.y),
                lin.extrapolated || quad.extrapolated
            );
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn single_record() {
        let Loaded::Records(r) = parse_records("p,n,outcome\n3,1,4.2\n", XKind::Ratio).unwrap() else {
            panic!("expected records");
        };
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].ratio(), Some(3.0));
        assert_eq!(r[0].fraction(), 0.75);
    }

    #[test]
    fn zero_total_rejected_with_line() {
        match parse_records("p,n,outcome\n0,0,4.2\n", XKind::Ratio) {
            Err(Error::Parse(issues)) => {
                assert_eq!(issues.len(), 1);
                assert_eq!(issues[0].line, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn all_bad_rows_itemized() {
        let text = "p,n,outcome\n1,1,2\nfoo,1,2\n1,-1,2\n2,2\n";
        match parse_records(text, XKind::Ratio) {
            Err(Error::Parse(issues)) => {
                let lines: Vec<usize> = issues.iter().map(|i| i.line).collect();
                assert_eq!(lines, vec![3, 4, 5]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_columns_rejected() {
        assert!(matches!(parse_records("a,b\n1,2\n", XKind::Ratio), Err(Error::Parse(_))));
    }

    #[test]
    fn xy_schema_and_fraction_bounds() {
        let Loaded::Scatter(s) = parse_records("x,y\n0.2,1\n0.5,2\n", XKind::Fraction).unwrap() else {
            panic!("expected scatter");
        };
        assert_eq!(s.points, vec![(0.2, 1.0), (0.5, 2.0)]);
        assert!(parse_records("x,y\n1.5,1\n", XKind::Fraction).is_err());
    }

    #[test]
    fn zero_negative_row_kept_for_fraction_only() {
        let recs = vec![
            PositivityRecord::new(5.0, 0.0, 3.0).unwrap(),
            PositivityRecord::new(3.0, 1.0, 2.0).unwrap(),
        ];
        let (ratio, dropped) = records_to_scatter(&recs, XKind::Ratio).unwrap();
        assert_eq!((ratio.len(), dropped), (1, 1));
        let (frac, dropped) = records_to_scatter(&recs, XKind::Fraction).unwrap();
        assert_eq!((frac.len(), dropped), (2, 0));
        assert_eq!(frac.points[0].0, 1.0);
    }

    #[test]
    fn csv_round_trip() {
        let mut rng = crate::rng::seeded(11);
        let recs: Vec<_> = (0..100)
            .map(|_| {
                PositivityRecord::new(
                    rng.random_range(0.0..50.0),
                    rng.random_range(0.01..20.0),
                    rng.random_range(-3.0..7.0),
                )
                .unwrap()
            })
            .collect();
        let Loaded::Records(back) = parse_records(&records_to_csv(&recs), XKind::Ratio).unwrap() else {
            panic!("expected records");
        };
        for (a, b) in recs.iter().zip(&back) {
            assert!((a.p_count - b.p_count).abs() <= 1e-12);
            assert!((a.n_count - b.n_count).abs() <= 1e-12);
            assert!((a.outcome - b.outcome).abs() <= 1e-12);
        }
    }

    #[test]
    fn summaries_parse() {
        let text = "label,n1,n2,mean1,mean2,t\nA,36,51,3.2,2.3,2.32\nB,1,92,3.4,2.1,1.62\n";
        match parse_summaries(text) {
            Err(Error::Parse(issues)) => assert_eq!(issues[0].line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let ok = parse_summaries("label,n1,n2,mean1,mean2,t\nA,36,51,3.2,2.3,2.32\n").unwrap();
        assert_eq!(ok[0].label, "A");
        assert_eq!(ok[0].stats.n2, 51);
    }

    #[test]
    fn significant_digit_formatting() {
        assert_eq!(format_sig(0.0), "0");
        assert_eq!(format_sig(2.9013), "2.9013");
        assert_eq!(format_sig(1.0 / 3.0), "0.333333");
        assert_eq!(format_sig(123456.7), "123457");
        assert_eq!(format_sig(1234567.0), "1.23457e+06");
        assert_eq!(format_sig(0.0000123456), "1.23456e-05");
        assert_eq!(format_sig(-2.5), "-2.5");
        assert_eq!(format_sig(999999.5), "1e+06");
    }

    #[test]
    fn curves_span_observed_range() {
        let recs: Vec<_> = (1..=30)
            .map(|i| PositivityRecord::new(i as f64, 2.0, 1.0 + 0.1 * i as f64).unwrap())
            .collect();
        let fits = fit_both_parameterizations(&recs).unwrap();
        let tsv = curves_tsv(&fits, 200).unwrap();
        let rows: Vec<&str> = tsv.lines().skip(1).collect();
        assert_eq!(rows.len(), 400);
        let ratio_rows: Vec<&str> = rows.iter().copied().filter(|r| r.starts_with("ratio")).collect();
        assert_eq!(ratio_rows.first().unwrap().split('\t').nth(1), Some("0.5"));
        assert_eq!(ratio_rows.last().unwrap().split('\t').nth(1), Some("15"));
        assert!(rows.iter().all(|r| r.ends_with("false")));
    }

    #[test]
    fn report_round_trip() {
        let recs: Vec<_> = (1..=12)
            .map(|i| PositivityRecord::new(i as f64, 3.0, (i as f64).sqrt()).unwrap())
            .collect();
        let results = ReportResults::Fit(fit_both_parameterizations(&recs).unwrap());
        let report = AnalysisReport::new(b"abc", serde_json::json!({"alpha": 0.05}), results);
        let json = report.to_json().unwrap();
        let back = AnalysisReport::from_json(&json).unwrap();
        assert_eq!(back, report);
        assert_eq!(back.to_json().unwrap(), json);
        assert_eq!(
            report.input_digest,
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
