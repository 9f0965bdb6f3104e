use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ensemble::VariantParams;
use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::linmodel::{validate_assumptions, ModelConfig, ModelParams, TimeGrid};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentName {
    RiccatiValidation,
    Exactness,
    Stability,
    Convergence,
    Chaos,
}

impl ExperimentName {
    pub const ALL: [ExperimentName; 5] = [
        ExperimentName::RiccatiValidation,
        ExperimentName::Exactness,
        ExperimentName::Stability,
        ExperimentName::Convergence,
        ExperimentName::Chaos,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentName::RiccatiValidation => "riccati_validation",
            ExperimentName::Exactness => "exactness",
            ExperimentName::Stability => "stability",
            ExperimentName::Convergence => "convergence",
            ExperimentName::Chaos => "chaos",
        }
    }

    fn is_rate_experiment(self) -> bool {
        matches!(self, ExperimentName::Convergence | ExperimentName::Chaos)
    }
}

impl fmt::Display for ExperimentName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ExperimentName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment `{s}`")))
    }
}

/// Everything that determines an experiment's output.
///
/// `workers` and `output_dir` are execution details: they are excluded
/// from [`config_hash`](Self::config_hash), so changing them never changes
/// what a result directory is considered to contain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: ExperimentName,
    pub master_seed: u64,
    pub t_end: f64,
    pub dt: f64,
    /// Times at which per-trial quantities are recorded.
    pub checkpoints: Vec<f64>,
    pub n_list: Vec<usize>,
    pub n_trials: usize,
    /// Moment order of the covariance error.
    pub p: u32,
    pub variant: VariantParams,
    /// Population size for the mean-field experiments.
    pub copies: usize,
    /// Mean of the second initial law in the stability experiment.
    pub alt_mean: Vec<f64>,
    /// Row-major covariance of the second initial law.
    pub alt_cov: Vec<f64>,
    /// Repeat the largest N at `dt/2` with coupled increments.
    pub dt_check: bool,
    /// Side of the `(s, t)` grid for the transition-matrix envelope.
    pub psi_grid: usize,
    /// Replace every simulated error by `c / N` (pipeline check).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub workers: usize,
    pub model: ModelConfig,
}

impl ExperimentConfig {
    /// Desk-scale defaults on the scalar model `A = −1, H = 1, σ_B = 1`.
    pub fn default_for(name: ExperimentName) -> Self {
        let base = Self {
            name,
            master_seed: 20_190_101,
            t_end: 5.0,
            dt: 1e-3,
            checkpoints: vec![1.0, 2.0, 5.0],
            n_list: vec![50, 100, 200, 400, 800],
            n_trials: 200,
            p: 1,
            variant: VariantParams::STOCHASTIC_FPF,
            copies: 100_000,
            alt_mean: vec![5.0],
            alt_cov: vec![3.0],
            dt_check: false,
            psi_grid: 20,
            synthetic: None,
            output_dir: None,
            workers: 1,
            model: ModelConfig::default(),
        };
        match name {
            ExperimentName::RiccatiValidation => Self {
                dt: 1e-4,
                checkpoints: Vec::new(),
                n_list: Vec::new(),
                n_trials: 0,
                ..base
            },
            ExperimentName::Exactness => Self {
                n_list: Vec::new(),
                n_trials: 1,
                ..base
            },
            ExperimentName::Stability => Self {
                checkpoints: (1..=50).map(|k| k as f64 / 10.0).collect(),
                n_list: Vec::new(),
                n_trials: 5,
                copies: 10_000,
                ..base
            },
            ExperimentName::Convergence => Self {
                dt_check: true,
                ..base
            },
            ExperimentName::Chaos => Self {
                t_end: 2.0,
                checkpoints: vec![2.0],
                n_list: vec![100, 200, 400, 800, 1600],
                ..base
            },
        }
    }

    /// Parse a TOML file; keys that are absent keep the defaults of the
    /// experiment named by the required `name` key.
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let user: toml::Table = s.parse().map_err(|e| Error::Config(format!("{e}")))?;
        let name: ExperimentName = user
            .get("name")
            .and_then(|v| v.as_str())
            .ok_or_else(|| Error::Config("missing `name`".into()))?
            .parse()?;
        let mut merged = toml::Table::try_from(Self::default_for(name))
            .map_err(|e| Error::Config(format!("{e}")))?;
        for (k, v) in user {
            match (merged.get_mut(&k), v) {
                (Some(toml::Value::Table(base)), toml::Value::Table(over)) => {
                    base.extend(over);
                }
                (_, v) => {
                    merged.insert(k, v);
                }
            }
        }
        let cfg: Self = merged
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// SHA-256 over the canonical TOML echo with execution details removed.
    pub fn config_hash(&self) -> Result<String> {
        let canonical = Self {
            output_dir: None,
            workers: 1,
            ..self.clone()
        };
        let digest = Sha256::digest(canonical.to_toml_string()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn params(&self) -> Result<ModelParams> {
        ModelParams::from_config(&self.model)
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.t_end, self.dt)
    }

    /// Second initial law of the stability experiment.
    pub fn alt_law(&self, d: usize) -> Result<(Vector, Mat)> {
        if self.alt_mean.len() != d || self.alt_cov.len() != d * d {
            return Err(Error::Config(format!(
                "alt_mean/alt_cov must have {d} and {} entries",
                d * d
            )));
        }
        Ok((
            Vector::from_column_slice(&self.alt_mean),
            Mat::from_row_slice(d, d, &self.alt_cov),
        ))
    }

    /// Structural checks plus the preconditions of the rate experiments.
    pub fn validate(&self) -> Result<()> {
        let params = self.params()?;
        let grid = self.grid()?;
        self.variant.validate()?;
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if i64::try_from(self.master_seed).is_err() {
            return Err(Error::Config(format!(
                "master_seed {} does not fit a signed 64-bit TOML integer",
                self.master_seed
            )));
        }
        for &t in &self.checkpoints {
            grid.index_of(t)?;
        }
        match self.name {
            ExperimentName::Exactness | ExperimentName::Stability if self.copies < 2 => {
                return Err(Error::Config("copies must be at least 2".into()));
            }
            ExperimentName::Stability => {
                self.alt_law(params.d())?;
            }
            ExperimentName::RiccatiValidation if self.psi_grid < 2 => {
                return Err(Error::Config("psi_grid must be at least 2".into()));
            }
            _ => {}
        }
        if self.name.is_rate_experiment() {
            if self.n_list.is_empty() || self.n_trials == 0 || self.checkpoints.is_empty() {
                return Err(Error::Config(
                    "rate experiments need n_list, n_trials and checkpoints".into(),
                ));
            }
            if !params.is_scalar() {
                return Err(Error::Assumption(format!(
                    "{} needs a scalar model",
                    self.name
                )));
            }
            let report = validate_assumptions(&params);
            if !report.all() {
                return Err(Error::Assumption(format!(
                    "{} needs A1-A3, got {report:?}",
                    self.name
                )));
            }
            if let Some(&n) = self.n_list.iter().find(|&&n| n <= 4 * self.p as usize) {
                return Err(Error::Assumption(format!(
                    "N = {n} must exceed 4p = {}",
                    4 * self.p
                )));
            }
        }
        Ok(())
    }
}
