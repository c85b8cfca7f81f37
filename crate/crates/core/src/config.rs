//! Experiment configuration, stored as TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::MleConfig;
use crate::btg::{BoxSpec, BtgConfig, PredictiveTarget, QuadratureSpec, QuantileConfig};
use crate::data::{CovariateKind, Dataset, TrainingSet};
use crate::datasets::{Split, Synthetic};
use crate::error::{Error, Result};
use crate::linalg::DEFAULT_JITTER_RELATIVE;
use crate::models::ModelSpec;
use crate::transforms::TransformFamily;

/// Where training (and optionally test) data come from.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct DataSource {
    pub synthetic: Option<Synthetic>,
    pub train_size: Option<usize>,
    pub test_size: Option<usize>,
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub model: String,
    /// Model list for `compare`.
    pub models: Vec<String>,
    pub seed: u64,
    pub data: DataSource,
    pub covariates: CovariateKind,
    pub normalize: bool,
    pub bounds: BoxSpec,
    pub quadrature: QuadratureSpec,
    pub eps: f64,
    pub jacobian_exponent: Option<f64>,
    pub jitter: f64,
    pub quantile: QuantileConfig,
    pub levels: Vec<f64>,
    pub target: PredictiveTarget,
    pub mle_starts: usize,
    pub mle_max_iter: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let btg = BtgConfig::default();
        let mle = MleConfig::default();
        ExperimentConfig {
            model: "BTG-I".into(),
            models: vec!["GP".into(), "BTG-I".into()],
            seed: 0,
            data: DataSource::default(),
            covariates: btg.covariates,
            normalize: btg.normalize,
            bounds: btg.bounds,
            quadrature: btg.quadrature,
            eps: btg.eps,
            jacobian_exponent: btg.jacobian_exponent,
            jitter: DEFAULT_JITTER_RELATIVE,
            quantile: btg.quantile,
            levels: btg.levels,
            target: btg.target,
            mle_starts: mle.starts,
            mle_max_iter: mle.max_iter,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        ModelSpec::parse(&self.model)?;
        for m in &self.models {
            ModelSpec::parse(m)?;
        }
        if !(0.0..1.0).contains(&self.eps) {
            return Err(Error::EpsilonTooLarge(self.eps));
        }
        if let Some(&p) = self.levels.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
            return Err(Error::InvalidLevel(p));
        }
        if self.mle_starts == 0 {
            return Err(Error::Config("mle_starts must be at least 1".into()));
        }
        Ok(())
    }

    pub fn btg_config(&self, family: &TransformFamily) -> BtgConfig {
        BtgConfig {
            family: family.clone(),
            covariates: self.covariates,
            normalize: self.normalize,
            quadrature: self.quadrature.clone(),
            bounds: self.bounds.clone(),
            eps: self.eps,
            jacobian_exponent: self.jacobian_exponent,
            jitter: self.jitter,
            quantile: self.quantile.clone(),
            levels: self.levels.clone(),
            target: self.target,
        }
    }

    pub fn mle_config(&self, family: &TransformFamily) -> MleConfig {
        MleConfig {
            family: family.clone(),
            bounds: self.bounds.clone(),
            starts: self.mle_starts,
            seed: self.seed,
            jitter: self.jitter,
            max_iter: self.mle_max_iter,
        }
    }

    pub fn training_set(&self, data: &Dataset) -> Result<TrainingSet> {
        TrainingSet::new(data, self.covariates, self.normalize)
    }

    /// Loads or generates the train/test pair named by `data`.
    /// A missing test source yields an empty test set.
    pub fn load_split(&self) -> Result<Split> {
        if let Some(kind) = self.data.synthetic {
            let (n, m) = kind.default_sizes();
            return Ok(kind.generate_sized(self.data.train_size.unwrap_or(n), self.data.test_size.unwrap_or(m), self.seed));
        }
        let train = self.data.train.as_deref().ok_or_else(|| Error::Config("no training data: set data.train or data.synthetic".into()))?;
        let train = Dataset::read_csv_path(train)?;
        let test = match &self.data.test {
            Some(p) => Dataset::read_csv_path(p)?,
            None => Dataset::empty(train.dim()),
        };
        Ok(Split { train, test })
    }
}
