use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::FilterKind;
use crate::gaussian::{cholesky_factor, Gaussian};
use crate::optim::VariationalSettings;
use crate::testbeds::{BistableSpec, ForcedTransition, Lorenz63Spec, TurnModelSpec};

/// Bistable well plus an optional forced well-to-well transition of the truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BistableTestbed {
    #[serde(flatten)]
    pub spec: BistableSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forced_transition: Option<ForcedTransition>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TestbedConfig {
    Bistable(BistableTestbed),
    Lorenz63(Lorenz63Spec),
    Tracking(TurnModelSpec),
}

impl TestbedConfig {
    pub fn state_dim(&self) -> usize {
        match self {
            Self::Bistable(_) => 1,
            Self::Lorenz63(_) => 3,
            Self::Tracking(_) => 5,
        }
    }

    /// Time between consecutive observations.
    pub fn obs_interval(&self) -> f64 {
        match self {
            Self::Bistable(b) => b.spec.dt * b.spec.substeps as f64,
            Self::Lorenz63(l) => l.dt * l.substeps as f64,
            Self::Tracking(t) => t.dt * t.substeps as f64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Bistable(b) => b.spec.validate(),
            Self::Lorenz63(l) => l.validate(),
            Self::Tracking(t) => t.validate(),
        }
    }
}

/// Prior as literal arrays; `cov` is a list of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
}

impl PriorConfig {
    pub fn to_gaussian(&self) -> Result<Gaussian> {
        let d = self.mean.len();
        if d == 0 {
            return Err(Error::Config("prior mean is empty".into()));
        }
        if self.cov.len() != d || self.cov.iter().any(|row| row.len() != d) {
            return Err(Error::Config(format!("prior covariance must be {d}x{d}")));
        }
        let values: Vec<f64> = self.cov.iter().flatten().copied().collect();
        if values.iter().chain(&self.mean).any(|v| !v.is_finite()) {
            return Err(Error::Config("prior contains non-finite values".into()));
        }
        let cov = DMatrix::from_row_slice(d, d, &values);
        cholesky_factor(&cov)
            .map_err(|e| Error::Config(format!("prior covariance is not usable: {e}")))?;
        Gaussian::new(DVector::from_column_slice(&self.mean), cov)
    }
}

/// A full experiment: one testbed, a list of filters, and a replicate grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub testbed: TestbedConfig,
    pub filters: Vec<FilterKind>,
    pub replicates: usize,
    pub steps: usize,
    pub seed: u64,
    pub prior: PriorConfig,
    /// Initial truth; drawn from the prior per replicate when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth_start: Option<Vec<f64>>,
    /// Inclusive step range for time-averaged RMSE. Defaults to every step,
    /// or `[50, steps]` for tracking.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub average_window: Option<(usize, usize)>,
    #[serde(default)]
    pub variational: VariationalSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("config serializes");
        text.push('\n');
        text
    }

    /// The averaging window with defaults applied.
    pub fn window(&self) -> (usize, usize) {
        self.average_window.unwrap_or(match self.testbed {
            TestbedConfig::Tracking(_) => (50.min(self.steps), self.steps),
            _ => (1, self.steps),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.filters.is_empty() {
            return Err(Error::Config("at least one filter is required".into()));
        }
        if self.replicates < 1 || self.steps < 1 {
            return Err(Error::Config(
                "replicates and steps must be at least 1".into(),
            ));
        }
        self.testbed.validate()?;
        self.variational.validate()?;
        let mut labels = Vec::with_capacity(self.filters.len());
        for f in &self.filters {
            f.validate()?;
            let label = f.label();
            if labels.contains(&label) {
                return Err(Error::Config(format!("filter {label} listed twice")));
            }
            labels.push(label);
        }
        let d = self.testbed.state_dim();
        let prior = self.prior.to_gaussian()?;
        if prior.dim() != d {
            return Err(Error::Config(format!(
                "prior has dimension {} but the testbed state has {d}",
                prior.dim()
            )));
        }
        if let Some(x0) = &self.truth_start {
            if x0.len() != d || x0.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config(format!(
                    "truth_start must hold {d} finite values"
                )));
            }
        }
        let (lo, hi) = self.window();
        if lo < 1 || lo > hi || hi > self.steps {
            return Err(Error::Config(format!(
                "average window [{lo}, {hi}] must lie inside [1, {}]",
                self.steps
            )));
        }
        if let TestbedConfig::Bistable(BistableTestbed {
            forced_transition: Some(f),
            spec,
        }) = &self.testbed
        {
            if self.truth_start.is_none() {
                return Err(Error::Config(
                    "a forced transition needs truth_start".into(),
                ));
            }
            let horizon = self.steps as f64 * spec.dt * spec.substeps as f64;
            if !(f.window.1 > f.window.0) || f.window.0 < 0.0 || f.window.1 > horizon {
                return Err(Error::Config(format!(
                    "transition window must be increasing and end before t = {horizon}"
                )));
            }
        }
        Ok(())
    }
}
