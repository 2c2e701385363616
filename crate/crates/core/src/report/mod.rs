//! Simulation output: sampled time series, CSV serialization and the
//! power-balance audit. Table reproduction lives in [`tables`].

use std::collections::BTreeMap;
use std::io::{Read, Write};

use thiserror::Error;

pub mod tables;

pub use tables::{table_report, TableAssertion, TableReport, TABLE_NAMES};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("row has {got} values, expected {expected}")]
    Arity { expected: usize, got: usize },
    #[error("time column must be strictly increasing (t = {0})")]
    NotIncreasing(f64),
    #[error("unknown table `{0}` (expected one of t3_13, t3_16, t4_3, t4_4, t4_5, t5_9)")]
    UnknownTable(String),
    #[error("{0}")]
    Scenario(String),
}

/// Column-named samples with the time in column 0.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TimeSeries {
    columns: Vec<String>,
    rows: Vec<Vec<f64>>,
    /// Scenario hash and integrator settings of the run.
    pub metadata: BTreeMap<String, String>,
}

impl TimeSeries {
    pub fn new(columns: Vec<String>) -> Self {
        Self { columns, rows: Vec::new(), metadata: BTreeMap::new() }
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn push(&mut self, row: Vec<f64>) -> Result<(), ReportError> {
        if row.len() != self.columns.len() {
            return Err(ReportError::Arity { expected: self.columns.len(), got: row.len() });
        }
        if let (Some(last), Some(&t)) = (self.rows.last(), row.first()) {
            if !(t > last[0]) {
                return Err(ReportError::NotIncreasing(t));
            }
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r[0]).collect()
    }

    /// Mean of every column over the final 10% of samples (at least one).
    pub fn steady_state(&self) -> Vec<f64> {
        let n = self.rows.len();
        if n == 0 {
            return vec![f64::NAN; self.columns.len()];
        }
        let take = (n / 10).max(1);
        self.mean_rows(&self.rows[n - take..])
    }

    pub fn steady(&self, name: &str) -> Option<f64> {
        let k = self.column_index(name)?;
        Some(self.steady_state()[k])
    }

    /// Mean of a column over samples with `t0 <= t <= t1`.
    pub fn mean_between(&self, name: &str, t0: f64, t1: f64) -> Option<f64> {
        let k = self.column_index(name)?;
        let sel: Vec<f64> = self.rows.iter().filter(|r| r[0] >= t0 && r[0] <= t1).map(|r| r[k]).collect();
        if sel.is_empty() {
            return None;
        }
        Some(sel.iter().sum::<f64>() / sel.len() as f64)
    }

    /// Value of a column at the last sample with `t <= at`.
    pub fn value_at(&self, name: &str, at: f64) -> Option<f64> {
        let k = self.column_index(name)?;
        self.rows.iter().take_while(|r| r[0] <= at + 1e-12).last().map(|r| r[k])
    }

    fn mean_rows(&self, rows: &[Vec<f64>]) -> Vec<f64> {
        let mut acc = vec![0.0; self.columns.len()];
        for r in rows {
            for (a, v) in acc.iter_mut().zip(r) {
                *a += v;
            }
        }
        acc.iter().map(|a| a / rows.len() as f64).collect()
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// C `printf("%.*g", precision, x)`.
pub fn format_g(x: f64, precision: usize) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.into();
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0" } else { "0" }.into();
    }
    let p = precision.max(1);
    let sci = format!("{:.*e}", p - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= p as i32 {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{}{:02}", trim_fraction(mantissa), sign, exp.abs())
    } else {
        trim_fraction(&format!("{:.*}", (p as i32 - 1 - exp) as usize, x)).to_string()
    }
}

/// Significant digits used for CSV output.
pub const CSV_DIGITS: usize = 12;

/// Writes the header and one line per record. Returns the bytes written.
pub fn write_csv<W: Write>(ts: &TimeSeries, mut out: W) -> Result<usize, ReportError> {
    let mut text = ts.columns.join(",");
    text.push('\n');
    for row in &ts.rows {
        let cells: Vec<String> = row.iter().map(|v| format_g(*v, CSV_DIGITS)).collect();
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(text.len())
}

pub fn read_csv<R: Read>(input: R) -> Result<TimeSeries, ReportError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let parse_err = |line: usize, message: String| ReportError::Parse { line, message };
    let columns: Vec<String> =
        rdr.headers().map_err(|e| parse_err(1, e.to_string()))?.iter().map(str::to_string).collect();
    let mut ts = TimeSeries::new(columns);
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| parse_err(line, e.to_string()))?;
        let row = rec
            .iter()
            .map(|cell| cell.parse::<f64>().map_err(|_| parse_err(line, format!("`{cell}` is not a number"))))
            .collect::<Result<Vec<_>, _>>()?;
        ts.push(row).map_err(|e| parse_err(line, e.to_string()))?;
    }
    Ok(ts)
}

/// Writes the metadata as `key=value` lines.
pub fn write_metadata<W: Write>(ts: &TimeSeries, mut out: W) -> std::io::Result<()> {
    for (k, v) in &ts.metadata {
        writeln!(out, "{k}={v}")?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BalanceRow {
    pub t: f64,
    pub p_source: f64,
    pub p_load: f64,
    pub q_source: f64,
    pub q_load: f64,
    pub p_residual: f64,
    pub q_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BalanceReport {
    pub after: f64,
    pub rows: Vec<BalanceRow>,
    pub max_p_residual: f64,
    pub max_q_residual: f64,
}

/// Mismatch relative to the power flowing through the bus; the 1 W/var floor
/// keeps an idle bus from dividing by zero.
fn relative_mismatch(src: f64, load: f64, gross: f64) -> f64 {
    (src - load).abs() / gross.max(1.0)
}

/// Columns named `<kind>.<id>.p` / `.q` are classed by kind: `load` is a
/// sink, `grid`, `machine` and `wind` are sources.
pub fn balance_report(ts: &TimeSeries, after: f64) -> BalanceReport {
    #[derive(Clone, Copy)]
    enum Role {
        SourceP,
        SourceQ,
        LoadP,
        LoadQ,
    }
    let roles: Vec<(usize, Role)> = ts
        .columns
        .iter()
        .enumerate()
        .filter_map(|(k, c)| {
            let kind = c.split('.').next()?;
            let load = kind == "load";
            if !(load || matches!(kind, "grid" | "machine" | "wind")) {
                return None;
            }
            let role = match (c.rsplit('.').next()?, load) {
                ("p", false) => Role::SourceP,
                ("q", false) => Role::SourceQ,
                ("p", true) => Role::LoadP,
                ("q", true) => Role::LoadQ,
                _ => return None,
            };
            Some((k, role))
        })
        .collect();
    let mut report = BalanceReport { after, ..Default::default() };
    for r in ts.rows.iter().filter(|r| r[0] > after) {
        let mut row = BalanceRow { t: r[0], p_source: 0.0, p_load: 0.0, q_source: 0.0, q_load: 0.0, p_residual: 0.0, q_residual: 0.0 };
        let (mut gp, mut gq) = (0.0, 0.0);
        for &(k, role) in &roles {
            let v = r[k];
            match role {
                Role::SourceP => row.p_source += v,
                Role::SourceQ => row.q_source += v,
                Role::LoadP => row.p_load += v,
                Role::LoadQ => row.q_load += v,
            }
            match role {
                Role::SourceP | Role::LoadP => gp += v.abs() / 2.0,
                Role::SourceQ | Role::LoadQ => gq += v.abs() / 2.0,
            }
        }
        row.p_residual = relative_mismatch(row.p_source, row.p_load, gp);
        row.q_residual = relative_mismatch(row.q_source, row.q_load, gq);
        report.max_p_residual = report.max_p_residual.max(row.p_residual);
        report.max_q_residual = report.max_q_residual.max(row.q_residual);
        report.rows.push(row);
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn format_g_matches_printf() {
        let cases = [
            (0.0, "0"),
            (1.0, "1"),
            (-2.5, "-2.5"),
            (1e-5, "1e-05"),
            (0.0001, "0.0001"),
            (123456789012.0, "123456789012"),
            (1234567890123.0, "1.23456789012e+12"),
            (1.0 / 3.0, "0.333333333333"),
            (157.07963267948966, "157.079632679"),
            (9.9999999999995, "10"),
            (6.02214076e23, "6.02214076e+23"),
            (-1.5e-300, "-1.5e-300"),
        ];
        for (x, want) in cases {
            assert_eq!(format_g(x, 12), want, "{x}");
        }
        assert_eq!(format_g(f64::NAN, 12), "nan");
        assert_eq!(format_g(f64::NEG_INFINITY, 12), "-inf");
        assert_eq!(format_g(0.5, 1), "0.5");
    }

    fn series() -> TimeSeries {
        let mut ts = TimeSeries::new(vec!["t".into(), "grid.p".into(), "load.l.p".into()]);
        ts.push(vec![0.0, 1.0, 1.0]).unwrap();
        ts.push(vec![0.5, 2.0 / 3.0, 0.1]).unwrap();
        ts
    }

    #[test]
    fn empty_series_writes_header_only() {
        let ts = TimeSeries::new(vec!["t".into(), "f_hz".into()]);
        let mut buf = Vec::new();
        let n = write_csv(&ts, &mut buf).unwrap();
        assert_eq!(buf, b"t,f_hz\n");
        assert_eq!(n, 7);
    }

    #[test]
    fn one_record_is_two_lines() {
        let mut ts = TimeSeries::new(vec!["t".into(), "x".into()]);
        ts.push(vec![0.0, 1.5]).unwrap();
        let mut buf = Vec::new();
        write_csv(&ts, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,x\n0,1.5\n");
    }

    #[test]
    fn rewrite_is_byte_identical() {
        let mut first = Vec::new();
        write_csv(&series(), &mut first).unwrap();
        let back = read_csv(first.as_slice()).unwrap();
        let mut second = Vec::new();
        write_csv(&back, &mut second).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn push_rejects_bad_rows() {
        let mut ts = series();
        assert!(matches!(ts.push(vec![1.0]), Err(ReportError::Arity { .. })));
        assert!(matches!(ts.push(vec![0.5, 0.0, 0.0]), Err(ReportError::NotIncreasing(_))));
    }

    #[test]
    fn read_reports_line_of_bad_cell() {
        let err = read_csv("t,x\n0,1\n1,abc\n".as_bytes()).unwrap_err();
        assert!(matches!(err, ReportError::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn steady_state_is_tail_mean() {
        let mut ts = TimeSeries::new(vec!["t".into(), "x".into()]);
        for k in 0..20 {
            ts.push(vec![k as f64, if k >= 18 { 4.0 + (k - 18) as f64 } else { 0.0 }]).unwrap();
        }
        assert_eq!(ts.steady("x"), Some(4.5));
        assert_eq!(ts.value_at("x", 18.5), Some(4.0));
        assert_eq!(ts.mean_between("x", 17.0, 18.0), Some(2.0));
    }

    #[test]
    fn balance_classifies_columns() {
        let mut ts = TimeSeries::new(
            ["t", "f_hz", "grid.p", "grid.q", "machine.sg1.p", "machine.sg1.q", "machine.sg1.flux", "load.l.p", "load.l.q"]
                .map(String::from)
                .to_vec(),
        );
        ts.push(vec![0.0, 50.0, 0.0, 0.0, 0.0, 0.0, 28.0, 5.0, 0.0]).unwrap();
        ts.push(vec![4.0, 50.0, 0.5e6, -3e4, 0.5e6, 3e4, 28.0, 1e6, 0.0]).unwrap();
        let b = balance_report(&ts, 3.0);
        assert_eq!(b.rows.len(), 1);
        assert_eq!(b.rows[0].p_source, 1e6);
        assert_eq!(b.max_p_residual, 0.0);
        assert_eq!(b.max_q_residual, 0.0);
        assert!(b.rows[0].q_source.abs() < 1e-9);
    }
}
