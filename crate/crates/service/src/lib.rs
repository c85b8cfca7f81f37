//! HTTP/JSON front for BTG fitting, prediction, cross-validation and the
//! benchmark harnesses. Numerical work runs on tokio's blocking pool.

pub mod error;
pub mod registry;

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Instant;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::json;
use tokio::net::TcpListener;
use tokio::task::JoinHandle;

use btg_core::experiments::{compare, loocv_timing, quantile_benchmark, rule_sweep, QuantileBenchConfig};
use btg_core::loocv::{loocv_nodes, loocv_report};
use btg_core::models::{FittedModel, ModelSpec};
use btg_core::wire::*;
use btg_core::{Error, Result};

pub use error::ApiError;
use registry::{Entry, Registry};

pub type AppState = Arc<Registry>;
type ApiResult<T> = std::result::Result<T, ApiError>;

/// Runs `f` on the blocking pool.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T> + Send + 'static) -> ApiResult<T> {
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => r.map_err(ApiError::from),
        Err(e) => Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "io", format!("worker failed: {e}"))),
    }
}

fn body<T>(req: std::result::Result<Json<T>, JsonRejection>) -> ApiResult<T> {
    Ok(req?.0)
}

fn entry(state: &Registry, id: &str) -> ApiResult<Arc<Entry>> {
    state.get(id).ok_or_else(|| ApiError::not_found(id))
}

fn bayesian(e: &Entry) -> Result<&btg_core::btg::BtgModel> {
    e.model.as_btg().ok_or_else(|| Error::Config(format!("model {} is an MLE fit and has no quadrature nodes", e.info.model)))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/v1/datasets/generate", post(generate))
        .route("/v1/models", post(fit_model).get(list_models))
        .route("/v1/models/{id}", get(get_model).delete(delete_model))
        .route("/v1/models/{id}/predict", post(predict))
        .route("/v1/models/{id}/nodes", get(nodes))
        .route("/v1/models/{id}/summary", get(summary))
        .route("/v1/models/{id}/rule", get(rule))
        .route("/v1/models/{id}/loocv", post(loocv))
        .route("/v1/compare", post(compare_models))
        .route("/v1/benchmark/quantile", post(bench_quantile))
        .route("/v1/benchmark/rules", post(bench_rules))
        .route("/v1/benchmark/loocv", post(bench_loocv))
        .with_state(state)
}

/// Serves on `listener` until the future is dropped.
pub async fn serve(listener: TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

/// Binds `addr` and serves in a background task; returns the bound address.
pub async fn spawn(addr: &str) -> std::io::Result<(SocketAddr, JoinHandle<std::io::Result<()>>)> {
    let listener = TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    let handle = tokio::spawn(serve(listener, AppState::default()));
    Ok((local, handle))
}

async fn health(State(state): State<AppState>) -> impl IntoResponse {
    Json(json!({ "status": "ok", "models": state.len() }))
}

async fn generate(req: std::result::Result<Json<GenerateRequest>, JsonRejection>) -> ApiResult<Json<SplitDto>> {
    let r = body(req)?;
    let split = blocking(move || {
        let (n, m) = r.kind.default_sizes();
        Ok(r.kind.generate_sized(r.train_size.unwrap_or(n), r.test_size.unwrap_or(m), r.seed))
    })
    .await?;
    Ok(Json(SplitDto::from(&split)))
}

async fn fit_model(
    State(state): State<AppState>,
    req: std::result::Result<Json<FitRequest>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<ModelInfo>)> {
    let r = body(req)?;
    let info = blocking(move || {
        r.config.validate()?;
        let spec = ModelSpec::parse(&r.model)?;
        let data = r.config.training_set(&r.train.to_dataset()?)?;
        let t = Instant::now();
        let model = FittedModel::fit(&spec, &data, &r.config.btg_config(&spec.family), &r.config.mle_config(&spec.family))?;
        let fit_seconds = t.elapsed().as_secs_f64();
        let (nodes, kept, dropped_mass) = match &model {
            FittedModel::Btg(m) => (m.summaries.len(), m.kept_count(), m.sparsified.dropped_mass()),
            FittedModel::Mle(_) => (0, 0, 0.0),
        };
        let info = ModelInfo {
            id: String::new(),
            model: spec.to_string(),
            bayesian: spec.is_bayesian(),
            n_train: data.n(),
            dim: data.dim(),
            nodes,
            kept,
            dropped_mass,
            fit_seconds,
        };
        tracing::info!(model = %info.model, n = info.n_train, seconds = fit_seconds, "fitted");
        Ok(state.insert(info, model, r.config.levels))
    })
    .await?;
    Ok((StatusCode::CREATED, Json(info)))
}

async fn list_models(State(state): State<AppState>) -> Json<Vec<ModelInfo>> {
    Json(state.list())
}

async fn get_model(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<ModelInfo>> {
    Ok(Json(entry(&state, &id)?.info.clone()))
}

async fn delete_model(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<StatusCode> {
    if state.remove(&id) {
        Ok(StatusCode::NO_CONTENT)
    } else {
        Err(ApiError::not_found(&id))
    }
}

async fn predict(
    State(state): State<AppState>,
    Path(id): Path<String>,
    req: std::result::Result<Json<PredictRequest>, JsonRejection>,
) -> ApiResult<Json<PredictResponse>> {
    let e = entry(&state, &id)?;
    let r = body(req)?;
    let resp = blocking(move || {
        let levels = r.levels.unwrap_or_else(|| e.levels.clone());
        if let Some(&p) = levels.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
            return Err(Error::InvalidLevel(p));
        }
        let predictions = e.model.predict_many(&r.points, &levels)?;
        Ok(PredictResponse { levels, predictions })
    })
    .await?;
    Ok(Json(resp))
}

async fn nodes(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<NodesResponse>> {
    let e = entry(&state, &id)?;
    let m = bayesian(&e)?;
    Ok(Json(NodesResponse { family: m.config.family.to_string(), nodes: m.summaries.clone() }))
}

async fn summary(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    let e = entry(&state, &id)?;
    let mut buf = Vec::new();
    e.model.write_summary_csv(&mut buf)?;
    Ok(([(header::CONTENT_TYPE, "text/csv")], buf))
}

async fn rule(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<RuleDto>> {
    let e = entry(&state, &id)?;
    Ok(Json(RuleDto::from_model(bayesian(&e)?)))
}

async fn loocv(
    State(state): State<AppState>,
    Path(id): Path<String>,
    req: std::result::Result<Json<LoocvRequest>, JsonRejection>,
) -> ApiResult<Json<btg_core::loocv::LoocvReport>> {
    let e = entry(&state, &id)?;
    let r = body(req)?;
    let report = blocking(move || {
        if !(r.interval > 0.0 && r.interval < 1.0) {
            return Err(Error::InvalidLevel(r.interval));
        }
        let m = bayesian(&e)?;
        let per_node = loocv_nodes(m)?;
        loocv_report(m, &per_node, r.interval)
    })
    .await?;
    Ok(Json(report))
}

async fn compare_models(req: std::result::Result<Json<CompareRequest>, JsonRejection>) -> ApiResult<Json<CompareResponse>> {
    let r = body(req)?;
    let reports = blocking(move || {
        r.config.validate()?;
        compare(&r.models, &r.data.to_split()?, &r.config)
    })
    .await?;
    Ok(Json(CompareResponse { reports }))
}

async fn bench_quantile(req: std::result::Result<Json<QuantileBenchConfig>, JsonRejection>) -> ApiResult<Json<QuantileBenchResponse>> {
    let cfg = body(req)?;
    let rows = blocking(move || quantile_benchmark(&cfg)).await?;
    Ok(Json(QuantileBenchResponse { rows }))
}

async fn bench_rules(req: std::result::Result<Json<RuleSweepRequest>, JsonRejection>) -> ApiResult<Json<RuleSweepResponse>> {
    let r = body(req)?;
    let sweep = blocking(move || {
        r.config.validate()?;
        let base = r.config.btg_config(&r.sweep.family);
        rule_sweep(&r.data.to_split()?, &base, &r.sweep)
    })
    .await?;
    Ok(Json(sweep))
}

async fn bench_loocv(req: std::result::Result<Json<LoocvBenchRequest>, JsonRejection>) -> ApiResult<Json<LoocvBenchResponse>> {
    let r = body(req)?;
    if r.sizes.iter().any(|&n| n < 3) {
        return Err(Error::Config("LOOCV timing sizes must be at least 3".into()).into());
    }
    let rows = blocking(move || loocv_timing(&r.sizes, r.naive, r.reps, r.seed)).await?;
    Ok(Json(LoocvBenchResponse { rows }))
}
