//! Typed async client for the BTG HTTP service.

use reqwest::{Method, StatusCode};
use serde::de::DeserializeOwned;
use serde::Serialize;

use btg_core::btg::Prediction;
use btg_core::config::ExperimentConfig;
use btg_core::datasets::Synthetic;
use btg_core::experiments::{LoocvTiming, MetricsReport, QuantileBenchConfig, QuantileBenchRow, RuleSweepConfig};
use btg_core::loocv::LoocvReport;
use btg_core::wire::*;
use btg_core::ErrorKind;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    /// The service answered with an error body.
    #[error("{message} (HTTP {status})")]
    Api { status: u16, kind: String, message: String },
    #[error("transport error: {0}")]
    Transport(#[from] reqwest::Error),
}

impl ClientError {
    /// Maps service failures back onto the core error classes; transport
    /// problems count as I/O.
    pub fn kind(&self) -> ErrorKind {
        match self {
            ClientError::Api { kind, .. } => match kind.as_str() {
                "config" | "not-found" => ErrorKind::Config,
                "numerical" => ErrorKind::Numerical,
                _ => ErrorKind::Io,
            },
            ClientError::Transport(_) => ErrorKind::Io,
        }
    }
}

pub type Result<T> = std::result::Result<T, ClientError>;

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    /// `base` is the service root, e.g. `http://127.0.0.1:8080`.
    pub fn new(base: impl Into<String>) -> Self {
        Client { base: base.into().trim_end_matches('/').to_string(), http: reqwest::Client::new() }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    async fn send(&self, method: Method, path: &str, body: Option<&(impl Serialize + ?Sized)>) -> Result<reqwest::Response> {
        let mut req = self.http.request(method, format!("{}{path}", self.base));
        if let Some(b) = body {
            req = req.json(b);
        }
        let resp = req.send().await?;
        if resp.status().is_success() {
            return Ok(resp);
        }
        let status = resp.status().as_u16();
        let text = resp.text().await?;
        Err(match serde_json::from_str::<ErrorBody>(&text) {
            Ok(e) => ClientError::Api { status, kind: e.kind, message: e.error },
            Err(_) => ClientError::Api { status, kind: "io".into(), message: text },
        })
    }

    async fn json<T: DeserializeOwned>(&self, method: Method, path: &str, body: Option<&(impl Serialize + ?Sized)>) -> Result<T> {
        Ok(self.send(method, path, body).await?.json().await?)
    }

    pub async fn health(&self) -> Result<serde_json::Value> {
        self.json(Method::GET, "/health", None::<&()>).await
    }

    pub async fn generate(&self, kind: Synthetic, seed: u64, train_size: Option<usize>, test_size: Option<usize>) -> Result<SplitDto> {
        let req = GenerateRequest { kind, seed, train_size, test_size };
        self.json(Method::POST, "/v1/datasets/generate", Some(&req)).await
    }

    pub async fn fit(&self, model: &str, train: DatasetDto, config: &ExperimentConfig) -> Result<ModelInfo> {
        let req = FitRequest { model: model.into(), train, config: config.clone() };
        self.json(Method::POST, "/v1/models", Some(&req)).await
    }

    pub async fn models(&self) -> Result<Vec<ModelInfo>> {
        self.json(Method::GET, "/v1/models", None::<&()>).await
    }

    pub async fn model(&self, id: &str) -> Result<ModelInfo> {
        self.json(Method::GET, &format!("/v1/models/{id}"), None::<&()>).await
    }

    pub async fn delete(&self, id: &str) -> Result<()> {
        self.send(Method::DELETE, &format!("/v1/models/{id}"), None::<&()>).await?;
        Ok(())
    }

    pub async fn predict(&self, id: &str, points: Vec<Vec<f64>>, levels: Option<Vec<f64>>) -> Result<Vec<Prediction>> {
        let req = PredictRequest { points, levels };
        let resp: PredictResponse = self.json(Method::POST, &format!("/v1/models/{id}/predict"), Some(&req)).await?;
        Ok(resp.predictions)
    }

    pub async fn nodes(&self, id: &str) -> Result<NodesResponse> {
        self.json(Method::GET, &format!("/v1/models/{id}/nodes"), None::<&()>).await
    }

    /// Node table (BTG) or parameter table (MLE) as CSV text.
    pub async fn summary_csv(&self, id: &str) -> Result<String> {
        Ok(self.send(Method::GET, &format!("/v1/models/{id}/summary"), None::<&()>).await?.text().await?)
    }

    pub async fn rule(&self, id: &str) -> Result<RuleDto> {
        self.json(Method::GET, &format!("/v1/models/{id}/rule"), None::<&()>).await
    }

    pub async fn loocv(&self, id: &str, interval: f64) -> Result<LoocvReport> {
        self.json(Method::POST, &format!("/v1/models/{id}/loocv"), Some(&LoocvRequest { interval })).await
    }

    pub async fn compare(&self, models: &[String], data: SplitDto, config: &ExperimentConfig) -> Result<Vec<MetricsReport>> {
        let req = CompareRequest { models: models.to_vec(), data, config: config.clone() };
        let resp: CompareResponse = self.json(Method::POST, "/v1/compare", Some(&req)).await?;
        Ok(resp.reports)
    }

    pub async fn bench_quantile(&self, cfg: &QuantileBenchConfig) -> Result<Vec<QuantileBenchRow>> {
        let resp: QuantileBenchResponse = self.json(Method::POST, "/v1/benchmark/quantile", Some(cfg)).await?;
        Ok(resp.rows)
    }

    pub async fn bench_rules(&self, data: SplitDto, config: &ExperimentConfig, sweep: &RuleSweepConfig) -> Result<RuleSweepResponse> {
        let req = RuleSweepRequest { data, config: config.clone(), sweep: sweep.clone() };
        self.json(Method::POST, "/v1/benchmark/rules", Some(&req)).await
    }

    pub async fn bench_loocv(&self, sizes: &[usize], naive: bool, reps: usize, seed: u64) -> Result<Vec<LoocvTiming>> {
        let req = LoocvBenchRequest { sizes: sizes.to_vec(), naive, reps, seed };
        let resp: LoocvBenchResponse = self.json(Method::POST, "/v1/benchmark/loocv", Some(&req)).await?;
        Ok(resp.rows)
    }
}

/// `true` when the error is a 404 from the service.
pub fn is_not_found(e: &ClientError) -> bool {
    matches!(e, ClientError::Api { status, .. } if *status == StatusCode::NOT_FOUND.as_u16())
}
