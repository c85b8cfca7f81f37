//! JSON request/response types shared by the HTTP service and its client.
//!
//! Floats that may be non-finite (log densities, far-tail quantiles) go through
//! [`num`], which writes them as `"NaN"`, `"inf"` or `"-inf"` and reads those
//! strings, plain numbers or `null` (as NaN).

use serde::{Deserialize, Serialize};

use crate::btg::{BtgModel, NodeSummary, Prediction};
use crate::config::ExperimentConfig;
use crate::data::Dataset;
use crate::datasets::{Split, Synthetic};
use crate::error::{Error, ErrorKind, Result};
use crate::experiments::{LoocvTiming, MetricsReport, QuantileBenchRow, RuleSweep, RuleSweepConfig};
use crate::quadrature::{QuadratureRule, RuleKind};

pub mod num {
    use serde::{Deserialize, Deserializer, Serializer};

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("NaN")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Option::<Raw>::deserialize(d)? {
            None => Ok(f64::NAN),
            Some(Raw::Num(v)) => Ok(v),
            Some(Raw::Text(t)) => match t.to_ascii_lowercase().as_str() {
                "nan" => Ok(f64::NAN),
                "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
                "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
                _ => Err(serde::de::Error::custom(format!("expected a number, got `{t}`"))),
            },
        }
    }

    /// Same encoding for `(level, value)` pairs.
    pub mod pairs {
        use serde::ser::SerializeSeq;
        use serde::{Deserialize, Deserializer, Serialize, Serializer};

        #[derive(Serialize, Deserialize)]
        struct Pair(#[serde(with = "super")] f64, #[serde(with = "super")] f64);

        pub fn serialize<S: Serializer>(v: &[(f64, f64)], s: S) -> Result<S::Ok, S::Error> {
            let mut seq = s.serialize_seq(Some(v.len()))?;
            for &(a, b) in v {
                seq.serialize_element(&Pair(a, b))?;
            }
            seq.end()
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<(f64, f64)>, D::Error> {
            Ok(Vec::<Pair>::deserialize(d)?.into_iter().map(|Pair(a, b)| (a, b)).collect())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetDto {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}

impl From<&Dataset> for DatasetDto {
    fn from(d: &Dataset) -> Self {
        DatasetDto { x: d.points(), y: d.y.clone() }
    }
}

impl DatasetDto {
    pub fn to_dataset(&self) -> Result<Dataset> {
        Dataset::from_rows(&self.x, self.y.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitDto {
    pub train: DatasetDto,
    pub test: DatasetDto,
}

impl From<&Split> for SplitDto {
    fn from(s: &Split) -> Self {
        SplitDto { train: (&s.train).into(), test: (&s.test).into() }
    }
}

impl SplitDto {
    pub fn to_split(&self) -> Result<Split> {
        let train = self.train.to_dataset()?;
        let test = if self.test.y.is_empty() { Dataset::empty(train.dim()) } else { self.test.to_dataset()? };
        Ok(Split { train, test })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateRequest {
    pub kind: Synthetic,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub train_size: Option<usize>,
    #[serde(default)]
    pub test_size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRequest {
    pub model: String,
    pub train: DatasetDto,
    #[serde(default)]
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub id: String,
    pub model: String,
    pub bayesian: bool,
    pub n_train: usize,
    pub dim: usize,
    /// Quadrature nodes before and after sparsification; zero for MLE fits.
    pub nodes: usize,
    pub kept: usize,
    pub dropped_mass: f64,
    pub fit_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictRequest {
    pub points: Vec<Vec<f64>>,
    /// Defaults to the levels of the fit configuration.
    #[serde(default)]
    pub levels: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictResponse {
    pub levels: Vec<f64>,
    pub predictions: Vec<Prediction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodesResponse {
    pub family: String,
    pub nodes: Vec<NodeSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleDto {
    pub kind: RuleKind,
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl RuleDto {
    /// The full (unsparsified) rule a model was fitted with.
    pub fn from_model(m: &BtgModel) -> Self {
        RuleDto {
            kind: m.rule_kind,
            nodes: m.summaries.iter().map(|s| s.coords.clone()).collect(),
            weights: m.summaries.iter().map(|s| s.quad_weight).collect(),
        }
    }

    pub fn to_rule(&self) -> Result<QuadratureRule> {
        let dim = self.nodes.first().map_or(0, |r| r.len());
        if self.nodes.len() != self.weights.len() || self.nodes.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidData("rule nodes and weights disagree in shape".into()));
        }
        let flat: Vec<f64> = self.nodes.iter().flatten().copied().collect();
        Ok(QuadratureRule {
            nodes: nalgebra::DMatrix::from_row_slice(self.nodes.len(), dim, &flat),
            weights: nalgebra::DVector::from_vec(self.weights.clone()),
            kind: self.kind,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoocvRequest {
    #[serde(default = "default_interval")]
    pub interval: f64,
}

fn default_interval() -> f64 {
    0.95
}

impl Default for LoocvRequest {
    fn default() -> Self {
        LoocvRequest { interval: default_interval() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRequest {
    pub models: Vec<String>,
    pub data: SplitDto,
    #[serde(default)]
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareResponse {
    pub reports: Vec<MetricsReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileBenchResponse {
    pub rows: Vec<QuantileBenchRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleSweepRequest {
    pub data: SplitDto,
    #[serde(default)]
    pub config: ExperimentConfig,
    #[serde(default)]
    pub sweep: RuleSweepConfig,
}

pub type RuleSweepResponse = RuleSweep;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoocvBenchRequest {
    pub sizes: Vec<usize>,
    #[serde(default)]
    pub naive: bool,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_reps() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoocvBenchResponse {
    pub rows: Vec<LoocvTiming>,
}

/// Error payload: `kind` is `config`, `numerical`, `io` or `not-found`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub kind: String,
}

pub fn kind_name(kind: ErrorKind) -> &'static str {
    match kind {
        ErrorKind::Config => "config",
        ErrorKind::Numerical => "numerical",
        ErrorKind::Io => "io",
    }
}
