//! Input-curve files for forecasting.
//!
//! The first non-comment line lists the delays (ps) of the curves. Each following
//! line holds one τ point: the lag in seconds, then one g² value per curve.
//! Lines starting with `#` are ignored.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CurveFile {
    /// ps, one per curve
    pub t: Vec<f64>,
    /// s
    pub tau: Vec<f64>,
    /// `values[k][i]`: curve `k` at τ point `i`
    pub values: Vec<Vec<f64>>,
}

impl CurveFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (row, header) = lines.next().context("input file is empty")?;
        let t = parse_numbers(header, row)?;
        if t.is_empty() {
            bail!("row {row}: no delays in the header line");
        }
        let mut tau = Vec::new();
        let mut values = vec![Vec::new(); t.len()];
        for (row, line) in lines {
            let v = parse_numbers(line, row)?;
            if v.len() != t.len() + 1 {
                bail!("row {row}: expected {} columns (tau and {} curve values), found {}", t.len() + 1, t.len(), v.len());
            }
            tau.push(v[0]);
            for (curve, &x) in values.iter_mut().zip(&v[1..]) {
                curve.push(x);
            }
        }
        if tau.is_empty() {
            bail!("input file has a header but no tau rows");
        }
        Ok(Self { t, tau, values })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# delays (ps), then one row per tau: tau (s) and g2 per curve\n");
        s.push_str(&self.t.iter().map(f64::to_string).collect::<Vec<_>>().join(" "));
        s.push('\n');
        for (i, tau) in self.tau.iter().enumerate() {
            s.push_str(&tau.to_string());
            for curve in &self.values {
                s.push(' ');
                s.push_str(&curve[i].to_string());
            }
            s.push('\n');
        }
        s
    }
}

fn parse_numbers(line: &str, row: usize) -> Result<Vec<f64>> {
    line.split_whitespace()
        .enumerate()
        .map(|(col, tok)| {
            tok.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .with_context(|| format!("row {row}, column {}: `{tok}` is not a finite number", col + 1))
        })
        .collect()
}
