//! One-parameter sweeps over steady operating points.

use std::io::Write;

use rayon::prelude::*;

use super::sim::{steady_state, SimError, SteadyMethod};
use super::{Scenario, ScenarioErrors};
use crate::report::{format_g, CSV_DIGITS};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub method: &'static str,
    pub values: Vec<f64>,
}

/// Steady-state results keyed by the swept value, in input order.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub param: String,
    pub columns: Vec<String>,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn get(&self, row: usize, column: &str) -> Option<f64> {
        let k = self.columns.iter().position(|c| c == column)?;
        self.rows.get(row).map(|r| r.values[k])
    }

    pub fn column(&self, column: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == column)?;
        Some(self.rows.iter().map(|r| r.values[k]).collect())
    }

    /// CSV with the swept value as the first column; the time column is dropped.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let cols: Vec<&str> = self.columns.iter().skip(1).map(String::as_str).collect();
        writeln!(out, "{},{}", self.param, cols.join(","))?;
        for r in &self.rows {
            let cells: Vec<String> = std::iter::once(r.value).chain(r.values.iter().skip(1).copied()).map(|v| format_g(v, CSV_DIGITS)).collect();
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

/// Evaluates the steady state for each value of the parameter at `path`.
/// Points run in parallel; rows keep the order of `values`.
pub fn sweep(base: &Scenario, path: &str, values: &[f64], method: SteadyMethod) -> Result<SweepTable, SimError> {
    let probe = values.first().copied().unwrap_or(0.0);
    base.clone().set_param(path, probe).map_err(SimError::Parameter)?;
    let rows = values
        .par_iter()
        .map(|&v| {
            let mut sc = base.clone();
            sc.set_param(path, v).map_err(SimError::Parameter)?;
            let errs = sc.validate();
            if !errs.is_empty() {
                return Err(SimError::Invalid(ScenarioErrors(errs)));
            }
            let s = steady_state(&sc, method)?;
            Ok((s.columns, SweepRow { value: v, method: s.method, values: s.values }))
        })
        .collect::<Result<Vec<_>, SimError>>()?;
    let columns = rows.first().map(|(c, _)| c.clone()).unwrap_or_else(|| super::output_columns(base));
    Ok(SweepTable { param: path.to_string(), columns, rows: rows.into_iter().map(|(_, r)| r).collect() })
}
