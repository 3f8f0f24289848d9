//! Text formats: density matrices and CSV tables.
//!
//! Density matrix files look like
//!
//! ```text
//! # optional comments
//! dim 4
//! 9.00000000000e-1 0.00000000000e0  0.00000000000e0 0.00000000000e0 ...
//! ```
//!
//! with one row per line and each entry written as `re im` using 12 significant
//! digits.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::experiments::Trace;
use crate::linalg::{CMatrix, Operator, C64};
use crate::readout::ShotResult;
use crate::state::DensityMatrix;
use crate::tomography::FidelityReport;

pub fn format_density_matrix(rho: &DensityMatrix) -> String {
    let n = rho.dim();
    let mut out = format!("dim {n}\n");
    for r in 0..n {
        let row: Vec<String> = (0..n)
            .map(|c| {
                let z = rho.get(r, c);
                format!("{:.11e} {:.11e}", z.re, z.im)
            })
            .collect();
        out.push_str(&row.join("  "));
        out.push('\n');
    }
    out
}

/// Parses the density-matrix format and checks the state invariants.
pub fn parse_density_matrix(text: &str) -> Result<DensityMatrix> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(k, l)| (k + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (line, header) = lines
        .next()
        .ok_or_else(|| Error::Config("empty density matrix file".into()))?;
    let dim = header
        .strip_prefix("dim")
        .and_then(|d| d.trim().parse::<usize>().ok())
        .filter(|d| *d > 0)
        .ok_or_else(|| Error::Config(format!("line {line}: expected `dim <n>`")))?;
    let mut m = CMatrix::zeros(dim, dim);
    for r in 0..dim {
        let (line, text) = lines
            .next()
            .ok_or_else(|| Error::Config(format!("missing row {} of {dim}", r + 1)))?;
        let values = text
            .split_whitespace()
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Config(format!("line {line}: {e}")))?;
        if values.len() != 2 * dim {
            return Err(Error::Config(format!(
                "line {line}: expected {} numbers, found {}",
                2 * dim,
                values.len()
            )));
        }
        for c in 0..dim {
            m[(r, c)] = C64::new(values[2 * c], values[2 * c + 1]);
        }
    }
    if let Some((line, _)) = lines.next() {
        return Err(Error::Config(format!("line {line}: trailing data")));
    }
    DensityMatrix::new(Operator::new(m)?)
}

fn csv_number(v: f64) -> String {
    format!("{v}")
}

pub fn trace_csv(trace: &Trace) -> String {
    let mut out = trace.columns.join(",");
    out.push('\n');
    for row in &trace.rows {
        let cells: Vec<String> = row.iter().map(|v| csv_number(*v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// `input,fidelity` with six decimals.
pub fn fidelity_csv(report: &FidelityReport) -> String {
    let mut out = String::from("input,fidelity\n");
    for row in &report.rows {
        let _ = writeln!(out, "{},{:.6}", row.input.number(), row.fidelity.value);
    }
    out
}

pub fn shots_csv(shots: &[ShotResult]) -> String {
    let mut out = String::from("shot,count,decision,truth\n");
    for (k, s) in shots.iter().enumerate() {
        let _ = writeln!(out, "{k},{},{},{}", s.count, s.decision.label(), s.truth.label());
    }
    out
}
