//! The per-run metrics table.

use std::io::{BufRead, Write};

use crate::CliError;

pub const HEADER: &str = "seed,variant,epochs,warmup,K,lambda,tau,acc,eo,tpr_gap,fpr_gap";

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub seed: u64,
    pub variant: String,
    pub epochs: usize,
    pub warmup: usize,
    pub k: usize,
    pub lambda: f64,
    pub tau: f64,
    pub acc: f64,
    pub eo: f64,
    pub tpr_gap: f64,
    pub fpr_gap: f64,
}

pub fn write_metrics(rows: &[MetricsRow], mut w: impl Write) -> std::io::Result<()> {
    write!(w, "{HEADER}\n")?;
    for r in rows {
        write!(
            w,
            "{},{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
            r.seed, r.variant, r.epochs, r.warmup, r.k, r.lambda, r.tau, r.acc, r.eo, r.tpr_gap, r.fpr_gap
        )?;
    }
    Ok(())
}

pub fn read_metrics(r: impl BufRead) -> Result<Vec<MetricsRow>, CliError> {
    let bad = |line: usize, what: &str| CliError::Metrics(format!("line {line}: {what}"));
    let mut lines = r.lines();
    match lines.next() {
        Some(Ok(h)) if h == HEADER => {}
        _ => return Err(bad(1, "missing or unexpected header")),
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| bad(i + 2, &e.to_string()))?;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 11 {
            return Err(bad(i + 2, "expected 11 fields"));
        }
        let int = |s: &str| s.parse::<u64>().map_err(|_| bad(i + 2, "bad integer"));
        let float = |s: &str| s.parse::<f64>().map_err(|_| bad(i + 2, "bad number"));
        rows.push(MetricsRow {
            seed: int(f[0])?,
            variant: f[1].to_string(),
            epochs: int(f[2])? as usize,
            warmup: int(f[3])? as usize,
            k: int(f[4])? as usize,
            lambda: float(f[5])?,
            tau: float(f[6])?,
            acc: float(f[7])?,
            eo: float(f[8])?,
            tpr_gap: float(f[9])?,
            fpr_gap: float(f[10])?,
        });
    }
    Ok(rows)
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}
