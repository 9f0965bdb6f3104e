//! Experiment orchestration: configuration, trial scheduling, aggregation
//! and result files.
//!
//! Trials are independent and run on a thread pool of `workers` threads.
//! Results are collected in job order, so every output file is identical
//! for any worker count.

mod config;
mod experiments;
mod output;

use std::time::Instant;

pub use config::{ExperimentConfig, ExperimentName};
pub use output::{read_config_hash, write_outputs, OUTPUT_FILES};

use crate::error::{Error, Result};
use crate::metrics::{CurvePoint, TrialRecord};

/// One pass/fail assertion carried by a result.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// One point of an aggregated curve.
#[derive(Clone, Debug, PartialEq)]
pub struct CurveRow {
    pub quantity: String,
    pub t: f64,
    pub point: CurvePoint,
}

/// A straight-line fit. `axis` is `log_n` for log-log rate fits (slope
/// is the power of N) and `t` for log-linear decay fits (slope is minus
/// the decay rate).
#[derive(Clone, Debug, PartialEq)]
pub struct FitRow {
    pub quantity: String,
    pub t: f64,
    pub axis: &'static str,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n_points: usize,
    pub n_trials: usize,
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub records: Vec<TrialRecord>,
    pub curves: Vec<CurveRow>,
    pub fits: Vec<FitRow>,
    pub checks: Vec<Check>,
    /// `key = value` metadata for `constants.txt`.
    pub constants: Vec<(String, String)>,
    pub wall_time_s: f64,
}

impl ExperimentResult {
    /// True iff every check passed.
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn curve(&self, quantity: &str, t: f64) -> Vec<&CurvePoint> {
        self.curves
            .iter()
            .filter(|c| c.quantity == quantity && same_time(c.t, t))
            .map(|c| &c.point)
            .collect()
    }

    pub fn fit(&self, quantity: &str, t: f64) -> Option<&FitRow> {
        self.fits
            .iter()
            .find(|f| f.quantity == quantity && same_time(f.t, t))
    }

    pub fn constant(&self, key: &str) -> Option<&str> {
        self.constants
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

pub(crate) fn same_time(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// What an experiment runner hands back before bookkeeping is attached.
#[derive(Default)]
pub(crate) struct Body {
    records: Vec<TrialRecord>,
    curves: Vec<CurveRow>,
    fits: Vec<FitRow>,
    checks: Vec<Check>,
    constants: Vec<(String, String)>,
}

impl Body {
    fn check(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        });
    }

    fn constant(&mut self, key: impl Into<String>, value: impl ToString) {
        self.constants.push((key.into(), value.to_string()));
    }
}

/// Validate `cfg` and run the experiment it names.
pub fn run(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let body = pool.install(|| match cfg.name {
        ExperimentName::RiccatiValidation => experiments::riccati_validation(cfg),
        ExperimentName::Exactness => experiments::exactness(cfg),
        ExperimentName::Stability => experiments::stability(cfg),
        ExperimentName::Convergence => experiments::convergence(cfg),
        ExperimentName::Chaos => experiments::chaos(cfg),
    })?;
    let mut constants = vec![
        ("experiment".to_string(), cfg.name.to_string()),
        ("version".to_string(), env!("CARGO_PKG_VERSION").to_string()),
    ];
    constants.extend(body.constants);
    Ok(ExperimentResult {
        config: cfg.clone(),
        config_hash: cfg.config_hash()?,
        records: body.records,
        curves: body.curves,
        fits: body.fits,
        checks: body.checks,
        constants,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}
