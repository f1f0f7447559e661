//! Experiment reports and their byte-stable serialization.

use crate::error::{Error, Result};
use crate::params::RegularizationSchedule;
use crate::spectral::format_f64;
use serde::Serialize;
use std::path::Path;

#[derive(Debug, Clone, Serialize)]
pub struct ReportRow {
    /// Product of the grid counts (the sample size of the cell).
    pub n: u64,
    pub eps: f64,
    pub replicate: u64,
    pub t: f64,
    /// Squared L2 error of the reconstruction at t.
    pub l2_err: f64,
    /// Squared H1 error (L2 part plus first-order seminorm part).
    pub h1_err: f64,
    pub rate_l2: f64,
    pub rate_h1: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SummaryRow {
    pub n: u64,
    pub eps: f64,
    pub t: f64,
    pub mean_l2: f64,
    pub se_l2: f64,
    pub mean_h1: f64,
    pub se_h1: f64,
    pub rate_l2: f64,
    pub rate_h1: f64,
    pub schedule: RegularizationSchedule,
}

/// Full study output; wall time is deliberately not part of the report so
/// that identical (config, seed) pairs serialize byte-identically.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub seed: u64,
    pub version: String,
    pub rows: Vec<ReportRow>,
    pub summary: Vec<SummaryRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

/// Arithmetic mean by pairwise summation: associative grouping fixed by the
/// recursion, so the result does not depend on accumulation order choices.
pub fn pairwise_mean(values: &[f64]) -> f64 {
    fn sum(v: &[f64]) -> f64 {
        match v.len() {
            0 => 0.0,
            1 => v[0],
            n => sum(&v[..n / 2]) + sum(&v[n / 2..]),
        }
    }
    if values.is_empty() {
        f64::NAN
    } else {
        sum(values) / values.len() as f64
    }
}

/// Standard error of the mean; 0 for a single replicate.
pub fn standard_error(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = pairwise_mean(values);
    let sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    (pairwise_mean(&sq) * n as f64 / (n as f64 - 1.0) / n as f64).sqrt()
}

pub const CSV_HEADER: &str = "n,eps,replicate,t,l2_err,h1_err,rate_l2,rate_h1,seed";

const SUMMARY_HEADER: &str = "n,eps,t,mean_l2,se_l2,mean_h1,se_h1,rate_l2,rate_h1,\
beta_n,rho_n,q_n,nu_n,alpha0,delta0,m0,m1,e_big,e0_big,gamma,horizon,a0,a1,mode";

pub fn rows_to_csv(report: &ExperimentReport) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.n,
            format_f64(r.eps),
            r.replicate,
            format_f64(r.t),
            format_f64(r.l2_err),
            format_f64(r.h1_err),
            format_f64(r.rate_l2),
            format_f64(r.rate_h1),
            r.seed
        ));
    }
    out
}

pub fn summary_to_csv(report: &ExperimentReport) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for s in &report.summary {
        let sc = &s.schedule;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{:?}\n",
            s.n,
            format_f64(s.eps),
            format_f64(s.t),
            format_f64(s.mean_l2),
            format_f64(s.se_l2),
            format_f64(s.mean_h1),
            format_f64(s.se_h1),
            format_f64(s.rate_l2),
            format_f64(s.rate_h1),
            format_f64(sc.beta_n),
            format_f64(sc.rho_n),
            format_f64(sc.q_n),
            format_f64(sc.nu_n),
            format_f64(sc.alpha0),
            format_f64(sc.delta0),
            format_f64(sc.m0),
            format_f64(sc.m1),
            format_f64(sc.e_big),
            format_f64(sc.e0_big),
            format_f64(sc.gamma),
            format_f64(sc.horizon),
            format_f64(sc.a0),
            format_f64(sc.a1),
            sc.mode
        ));
    }
    out
}

/// CSV emits two files (per-replicate rows at `path`, summary with the full
/// schedule echo beside it); JSON emits everything into one file.
pub fn emit_report(report: &ExperimentReport, format: ReportFormat, path: &Path) -> Result<()> {
    match format {
        ReportFormat::Csv => {
            std::fs::write(path, rows_to_csv(report))?;
            std::fs::write(summary_path(path), summary_to_csv(report))?;
        }
        ReportFormat::Json => {
            let text = serde_json::to_string_pretty(report)
                .map_err(|e| Error::invalid(format!("report serialization: {e}")))?;
            std::fs::write(path, text + "\n")?;
        }
    }
    Ok(())
}

/// `report.csv` -> `report.summary.csv`; extensionless paths get the suffix
/// appended.
pub fn summary_path(path: &Path) -> std::path::PathBuf {
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) => path.with_extension(format!("summary.{ext}")),
        None => {
            let mut p = path.as_os_str().to_owned();
            p.push(".summary");
            std::path::PathBuf::from(p)
        }
    }
}
