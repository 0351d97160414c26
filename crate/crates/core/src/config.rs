//! Pipeline configuration, read from JSON with every key optional and
//! unknown keys rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::ops::WindowSpec;
use crate::scalar::DType;
use crate::warping::{TpsLossWeights, DEFAULT_ALPHA, DEFAULT_GRID, DEFAULT_LAMBDA_K};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub alpha: f64,
    pub dense_window: WindowSpec,
    pub tps_window: WindowSpec,
    pub grid: usize,
    pub lambda_k: f64,
    pub lambda_r: f64,
    pub lambda_s: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub loss_weights: LossWeights,
    /// Per-level perceptual weights; `None` means `1/N` each.
    pub level_weights: Option<Vec<f64>>,
    pub precision: DType,
    pub workers: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let tps = TpsLossWeights::default();
        PipelineConfig {
            seed: 0,
            alpha: DEFAULT_ALPHA,
            dense_window: WindowSpec::new(3, 1, 1),
            tps_window: WindowSpec::new(4, 4, 0),
            grid: DEFAULT_GRID,
            lambda_k: DEFAULT_LAMBDA_K,
            lambda_r: tps.lambda_r,
            lambda_s: tps.lambda_s,
            lambda1: tps.lambda1,
            lambda2: tps.lambda2,
            loss_weights: LossWeights::default(),
            level_weights: None,
            precision: DType::F64,
            workers: 1,
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: format!("config:{}:{}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Parse { path: p, message } => Error::Parse { path: format!("{}:{p}", path.display()), message },
            other => other,
        })
    }

    pub fn tps_weights(&self) -> TpsLossWeights {
        TpsLossWeights { lambda1: self.lambda1, lambda2: self.lambda2, lambda_r: self.lambda_r, lambda_s: self.lambda_s }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid(format!("alpha must be a positive number, got {}", self.alpha)));
        }
        self.dense_window.validate()?;
        self.tps_window.validate()?;
        if self.grid < 2 {
            return Err(Error::invalid(format!("grid must be >= 2, got {}", self.grid)));
        }
        for (name, v) in [
            ("lambda_k", self.lambda_k),
            ("lambda_r", self.lambda_r),
            ("lambda_s", self.lambda_s),
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be a nonnegative number, got {v}")));
            }
        }
        self.loss_weights.validate()?;
        if let Some(w) = &self.level_weights {
            if w.is_empty() || w.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                return Err(Error::invalid("level_weights must be nonnegative numbers"));
            }
        }
        if self.workers == 0 {
            return Err(Error::invalid("workers must be >= 1"));
        }
        Ok(())
    }
}
