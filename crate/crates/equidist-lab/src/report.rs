//! Experiment configuration and report emission.
//!
//! CSV columns, in order:
//! `experiment,case,empirical_count,total,frequency,main_term,quadrature_error,error,rate,constant,bound,pass`.
//! JSON reports are a [`Suite`] carrying [`SCHEMA_VERSION`].

use serde::{Deserialize, Serialize};
use std::io::Write;
use std::time::Duration;

pub const SCHEMA_VERSION: u32 = 1;

/// Absolute slack for floating-point noise in pass/fail comparisons.
pub const FLOAT_SLACK: f64 = 1e-12;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub primes: Vec<u64>,
    /// One weight tuple per case.
    pub weights: Vec<Vec<u32>>,
    pub n: usize,
    pub f_expr: Option<String>,
    pub j: Option<(f64, f64)>,
    pub lambdas: Vec<f64>,
    /// Cells per axis for the cover of the region.
    pub boxes: Option<usize>,
    /// Degree per axis for Weyl sums.
    pub degree: Option<usize>,
    pub resolution: Option<usize>,
    pub targets: Vec<f64>,
    pub r_max: Option<u32>,
    pub k_max: Option<u32>,
    /// Frozen constant; fitted on the first case when absent.
    pub constant: Option<f64>,
    /// Exact-sum level for hit-rate rows.
    pub level: Option<f64>,
    /// Random boxes per sequence.
    pub samples: Option<usize>,
    pub seed: u64,
    /// Excluded from reports so output does not depend on it.
    #[serde(skip)]
    pub workers: usize,
}

impl ExperimentConfig {
    pub fn new(experiment: &str) -> Self {
        ExperimentConfig { experiment: experiment.to_string(), ..Default::default() }
    }
}

/// One measured case.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub case: String,
    pub empirical_count: f64,
    pub total: f64,
    pub frequency: f64,
    pub main_term: f64,
    pub quadrature_error: f64,
    /// |frequency − main_term|.
    pub error: f64,
    pub rate: f64,
    pub constant: f64,
    /// constant · rate.
    pub bound: f64,
    pub pass: bool,
    #[serde(skip)]
    pub runtime: Duration,
}

pub struct Measurement {
    pub case: String,
    pub empirical_count: f64,
    pub total: f64,
    pub frequency: f64,
    pub main_term: f64,
    pub quadrature_error: f64,
    pub rate: f64,
    pub runtime: Duration,
}

impl ExperimentReport {
    /// pass iff error ≤ bound + quadrature error (up to float slack).
    pub fn judge(experiment: &str, m: Measurement, constant: f64) -> Self {
        let error = (m.frequency - m.main_term).abs();
        let bound = constant * m.rate;
        ExperimentReport {
            experiment: experiment.to_string(),
            case: m.case,
            empirical_count: m.empirical_count,
            total: m.total,
            frequency: m.frequency,
            main_term: m.main_term,
            quadrature_error: m.quadrature_error,
            error,
            rate: m.rate,
            constant,
            bound,
            pass: error <= bound + m.quadrature_error + FLOAT_SLACK,
            runtime: m.runtime,
        }
    }
}

/// How the constant of a sweep was obtained.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    pub name: String,
    pub constant: f64,
    /// Case the constant was fitted on, or "supplied".
    pub fitted_on: String,
    /// Least-squares slope of log error against log of the sweep variable.
    pub exponent: Option<f64>,
}

/// A named yes/no property of a whole sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateRow {
    pub case: String,
    pub gap: f64,
    pub vstar_bound: f64,
    pub discrepancy_bound: f64,
    /// Additional allowance beyond V*·D (boundary cells and quadrature), zero for exact integrands.
    pub extra_bound: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Suite {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub rows: Vec<ExperimentReport>,
    pub fits: Vec<Fit>,
    pub certificates: Vec<CertificateRow>,
    pub checks: Vec<Check>,
    pub all_pass: bool,
    #[serde(skip)]
    pub runtime: Duration,
}

impl Suite {
    pub fn new(config: ExperimentConfig, rows: Vec<ExperimentReport>, fits: Vec<Fit>, certificates: Vec<CertificateRow>, checks: Vec<Check>) -> Self {
        let all_pass = rows.iter().all(|r| r.pass) && certificates.iter().all(|c| c.pass) && checks.iter().all(|c| c.pass);
        let runtime = rows.iter().map(|r| r.runtime).sum();
        Suite { schema_version: SCHEMA_VERSION, config, rows, fits, certificates, checks, all_pass, runtime }
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for row in &self.rows {
            out.serialize(row)?;
        }
        if self.rows.is_empty() {
            out.write_record(CSV_COLUMNS)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn failures(&self) -> Vec<String> {
        let mut out: Vec<String> = self.rows.iter().filter(|r| !r.pass).map(|r| format!("row {}", r.case)).collect();
        out.extend(self.certificates.iter().filter(|c| !c.pass).map(|c| format!("certificate {}", c.case)));
        out.extend(self.checks.iter().filter(|c| !c.pass).map(|c| format!("check {}", c.name)));
        out
    }
}

pub const CSV_COLUMNS: [&str; 12] =
    ["experiment", "case", "empirical_count", "total", "frequency", "main_term", "quadrature_error", "error", "rate", "constant", "bound", "pass"];
