//! The BTG model: per-node conditional Student-t parameters, marginal evidence,
//! weight combination over a quadrature rule, and median / interval prediction.
//!
//! Hyperparameter coordinates of a node are `(log θ₁, …, log θ_d, log σ², λ…)`.

use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{CovariateKind, Normalization, TrainingSet};
use crate::error::{Error, Result};
use crate::kernels::{cross_kernel, kernel_matrix, KernelParams};
use crate::linalg::{bordered_schur_variance_cached, cholesky, covariate_gram_factor, CholeskyFactor, DEFAULT_JITTER_RELATIVE};
use crate::quadrature::{
    mc_rule, qmc_rule, sparse_grid_capped, sparsify, sparsify_signed, HyperBox, QuadratureRule, RuleKind, SignedCut, SparsifiedRule,
    DEFAULT_NODE_CAP,
};
use crate::tmixture::{quantile, BoundMethod, PosteriorMixture, QuantileOptions, TMixtureComponent};
use crate::transforms::{Transform, TransformFamily};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadratureSpec {
    pub kind: RuleKind,
    /// Sparse-grid level.
    pub level: usize,
    /// Node count for QMC / MC rules.
    pub nodes: usize,
    pub seed: u64,
    pub node_cap: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec { kind: RuleKind::Qmc, level: 3, nodes: 64, seed: 0, node_cap: DEFAULT_NODE_CAP }
    }
}

impl QuadratureSpec {
    pub fn build(&self, bounds: &HyperBox) -> Result<QuadratureRule> {
        let d = bounds.dim();
        match self.kind {
            RuleKind::SparseGrid => sparse_grid_capped(d, self.level, bounds, self.node_cap),
            RuleKind::Qmc => qmc_rule(d, self.nodes, bounds),
            RuleKind::Mc => mc_rule(d, self.nodes, bounds, self.seed),
        }
    }
}

/// Prior box, on the natural scale for kernel parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoxSpec {
    pub lengthscale: (f64, f64),
    pub noise_variance: (f64, f64),
    /// Overrides the family's default parameter box.
    pub transform: Option<Vec<(f64, f64)>>,
}

impl Default for BoxSpec {
    fn default() -> Self {
        BoxSpec { lengthscale: (0.05, 5.0), noise_variance: (1e-6, 0.1), transform: None }
    }
}

impl BoxSpec {
    /// Box in node coordinates for `dim` inputs.
    pub fn hyper_box(&self, dim: usize, family: &TransformFamily) -> Result<HyperBox> {
        let (l0, l1) = self.lengthscale;
        let (s0, s1) = self.noise_variance;
        if !(l0 > 0.0 && s0 > 0.0) {
            return Err(Error::Config("lengthscale and noise bounds must be positive".into()));
        }
        let mut b = vec![(l0.ln(), l1.ln()); dim];
        b.push((s0.ln(), s1.ln()));
        let tb = self.transform.clone().unwrap_or_else(|| family.default_box());
        if tb.len() != family.param_count() {
            return Err(Error::Config(format!(
                "transform box has {} entries, family {family} has {} parameters",
                tb.len(),
                family.param_count()
            )));
        }
        b.extend(tb);
        HyperBox::new(&b).map_err(|e| Error::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuantileConfig {
    pub bound: BoundMethod,
    pub xtol: f64,
    /// Defaults to twice the dropped quadrature mass, or 1e-6 when nothing was dropped.
    pub ftol: Option<f64>,
    pub ftol_cap: f64,
}

impl Default for QuantileConfig {
    fn default() -> Self {
        QuantileConfig { bound: BoundMethod::ConvexHull, xtol: 1e-10, ftol: None, ftol_cap: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BtgConfig {
    pub family: TransformFamily,
    pub covariates: CovariateKind,
    pub normalize: bool,
    pub quadrature: QuadratureSpec,
    pub bounds: BoxSpec,
    /// Sparsification threshold ε.
    pub eps: f64,
    /// Power of the Jacobian in the evidence; `None` means `1 − p/n`.
    pub jacobian_exponent: Option<f64>,
    /// Jitter as a multiple of the mean kernel diagonal.
    pub jitter: f64,
    pub quantile: QuantileConfig,
    pub levels: Vec<f64>,
    pub target: PredictiveTarget,
}

/// What the predictive distribution describes at a test location.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PredictiveTarget {
    /// The noise-free latent value, `k(x, x) = 1`.
    Latent,
    /// A fresh observation, `k(x, x) = 1 + σ²` including the nugget.
    #[default]
    Observation,
}

impl PredictiveTarget {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "latent" => Ok(PredictiveTarget::Latent),
            "observation" | "observed" => Ok(PredictiveTarget::Observation),
            _ => Err(Error::Config(format!("unknown predictive target `{s}` (expected latent or observation)"))),
        }
    }

    pub fn k_xx(self, kernel: &KernelParams) -> f64 {
        match self {
            PredictiveTarget::Latent => 1.0,
            PredictiveTarget::Observation => 1.0 + kernel.noise_variance,
        }
    }
}

impl Default for BtgConfig {
    fn default() -> Self {
        BtgConfig {
            family: TransformFamily::identity(),
            covariates: CovariateKind::Constant,
            normalize: true,
            quadrature: QuadratureSpec::default(),
            bounds: BoxSpec::default(),
            eps: 0.1,
            jacobian_exponent: None,
            jitter: DEFAULT_JITTER_RELATIVE,
            quantile: QuantileConfig::default(),
            levels: vec![0.025, 0.5, 0.975],
            target: PredictiveTarget::default(),
        }
    }
}

/// Generalized least squares under the `K⁻¹` metric: `(β̂, q, R_X)`.
pub fn gls_solve(y: &DVector<f64>, covariates: &DMatrix<f64>, k_chol: &CholeskyFactor) -> Result<(DVector<f64>, f64, CholeskyFactor)> {
    let gram = covariate_gram_factor(k_chol, covariates)?;
    let rhs = covariates.transpose() * k_chol.solve(y);
    let beta = gram.solve(&rhs);
    let resid = y - covariates * &beta;
    let z = k_chol.solve_lower(&resid);
    Ok((beta, z.dot(&z), gram))
}

/// Everything a quadrature node needs for prediction and cross-validation.
#[derive(Debug, Clone)]
pub struct NodeCache {
    pub coords: Vec<f64>,
    pub kernel: KernelParams,
    pub transform: Arc<Transform>,
    pub k_chol: CholeskyFactor,
    pub gram_chol: CholeskyFactor,
    pub beta: DVector<f64>,
    pub q: f64,
    /// `K⁻¹(Y − M β̂)`.
    pub alpha: DVector<f64>,
    /// `Y = g(f_X)`.
    pub latent: DVector<f64>,
    pub log_jacobian: f64,
    pub jacobian_exponent: f64,
    pub log_evidence: f64,
}

/// Splits node coordinates into kernel parameters and a transform.
pub fn decode_node(coords: &[f64], dim: usize, family: &TransformFamily) -> Result<(KernelParams, Transform)> {
    if coords.len() != dim + 1 + family.param_count() {
        return Err(Error::InvalidParams(format!("node has {} coordinates, expected {}", coords.len(), dim + 1 + family.param_count())));
    }
    let kernel = KernelParams::new(coords[..dim].iter().map(|v| v.exp()).collect(), coords[dim].exp())?;
    let transform = family.build(&coords[dim + 1..])?;
    Ok((kernel, transform))
}

pub fn jittered_cholesky(k: &DMatrix<f64>, relative: f64) -> Result<CholeskyFactor> {
    let mean_diag = k.diagonal().mean();
    cholesky(k, relative * mean_diag)
}

impl NodeCache {
    pub fn build(data: &TrainingSet, coords: &[f64], family: &TransformFamily, config: &BtgConfig) -> Result<Self> {
        let (kernel, transform) = decode_node(coords, data.dim(), family)?;
        Self::with_params(data, coords.to_vec(), kernel, transform, config.jitter, config.jacobian_exponent)
    }

    pub fn with_params(
        data: &TrainingSet,
        coords: Vec<f64>,
        kernel: KernelParams,
        transform: Transform,
        jitter: f64,
        jacobian_exponent: Option<f64>,
    ) -> Result<Self> {
        let n = data.n();
        let p = data.p();
        let latent = data.y.iter().map(|v| transform.forward(*v)).collect::<Result<Vec<f64>>>()?;
        let latent = DVector::from_vec(latent);
        let log_jacobian = transform.log_jacobian(data.y.as_slice())?;
        let k = kernel_matrix(&data.x, &kernel)?;
        let k_chol = jittered_cholesky(&k, jitter)?;
        let (beta, q, gram_chol) = gls_solve(&latent, &data.covariates, &k_chol)?;
        if !(q > 0.0 && q.is_finite()) {
            return Err(Error::NonPositiveVariance(q));
        }
        let alpha = k_chol.solve(&(&latent - &data.covariates * &beta));
        let jacobian_exponent = jacobian_exponent.unwrap_or(1.0 - p as f64 / n as f64);
        let log_evidence = evidence(n, p, k_chol.log_det(), gram_chol.log_det(), q, log_jacobian, jacobian_exponent);
        Ok(NodeCache {
            coords,
            kernel,
            transform: Arc::new(transform),
            k_chol,
            gram_chol,
            beta,
            q,
            alpha,
            latent,
            log_jacobian,
            jacobian_exponent,
            log_evidence,
        })
    }

    pub fn dof(&self) -> f64 {
        (self.latent.len() - self.beta.len()) as f64
    }
}

/// `−½ log|K| − ½ log|MᵀK⁻¹M| − ((n−p)/2) log q + κ·log J`.
pub fn evidence(n: usize, p: usize, log_det_k: f64, log_det_gram: f64, q: f64, log_jacobian: f64, exponent: f64) -> f64 {
    -0.5 * log_det_k - 0.5 * log_det_gram - 0.5 * (n - p) as f64 * q.ln() + exponent * log_jacobian
}

pub fn log_evidence(cache: &NodeCache) -> f64 {
    cache.log_evidence
}

/// Student-t predictive of the latent value at `x_star` for one node.
pub fn conditional_tparams(cache: &NodeCache, data: &TrainingSet, x_star: &[f64]) -> Result<TMixtureComponent> {
    conditional_tparams_for(cache, data, x_star, PredictiveTarget::Latent)
}

pub fn conditional_tparams_for(
    cache: &NodeCache,
    data: &TrainingSet,
    x_star: &[f64],
    target: PredictiveTarget,
) -> Result<TMixtureComponent> {
    if x_star.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParams("prediction point has non-finite coordinates".into()));
    }
    let k = cross_kernel(&data.x, x_star, &cache.kernel)?;
    let m_x = data.covariate_row(x_star);
    let location = k.dot(&cache.alpha) + cache.beta.dot(&m_x);
    let c = bordered_schur_variance_cached(&cache.k_chol, &cache.gram_chol, &data.covariates, &m_x, &k, target.k_xx(&cache.kernel))?;
    let dof = cache.dof();
    let scale = (cache.q * c / dof).sqrt();
    TMixtureComponent::new(dof, location, scale, cache.transform.clone())
}

/// Per-node bookkeeping kept for inspection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSummary {
    pub coords: Vec<f64>,
    pub quad_weight: f64,
    /// `None` when the node was numerically invalid (zero weight).
    pub log_evidence: Option<f64>,
    pub weight: f64,
    pub kept: bool,
}

#[derive(Debug, Clone)]
pub struct BtgModel {
    pub data: TrainingSet,
    pub config: BtgConfig,
    pub rule_kind: RuleKind,
    pub summaries: Vec<NodeSummary>,
    pub kept: Vec<NodeCache>,
    pub kept_weights: Vec<f64>,
    pub sparsified: SparsifiedRule,
}

/// Predictive distribution at one location, on the original label scale.
#[derive(Debug, Clone)]
pub struct Predictive {
    pub mixture: PosteriorMixture,
    pub normalization: Normalization,
}

impl Predictive {
    pub fn cdf(&self, y: f64) -> f64 {
        self.mixture.cdf(self.normalization.forward(y))
    }

    /// Density; components whose transform is undefined at `y` contribute zero.
    pub fn pdf(&self, y: f64) -> f64 {
        let z = self.normalization.forward(y);
        let dens: f64 = self.mixture.weights.iter().zip(&self.mixture.components).map(|(w, c)| w * c.pdf(z).unwrap_or(0.0)).sum();
        dens * self.normalization.scale
    }

    pub fn quantile(&self, p: f64, opts: &QuantileOptions) -> Result<f64> {
        Ok(self.normalization.inverse(quantile(&self.mixture, p, opts)?.value))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    #[serde(with = "crate::wire::num")]
    pub median: f64,
    #[serde(with = "crate::wire::num")]
    pub lower: f64,
    #[serde(with = "crate::wire::num")]
    pub upper: f64,
    /// `(level, value)` for every requested level.
    #[serde(with = "crate::wire::num::pairs")]
    pub quantiles: Vec<(f64, f64)>,
}

/// Combines quadrature weights with evidences; invalid nodes get weight zero.
pub fn combine_weights(quad: &[f64], log_ev: &[Option<f64>], log_prior: &[f64]) -> Result<Vec<f64>> {
    let max = log_ev
        .iter()
        .zip(log_prior)
        .zip(quad)
        .filter_map(|((l, p), w)| l.filter(|_| *w != 0.0).map(|l| l + p))
        .filter(|v| v.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::AllWeightsDegenerate);
    }
    let terms: Vec<f64> = quad
        .iter()
        .zip(log_ev)
        .zip(log_prior)
        .map(|((w, l), p)| match l {
            Some(l) if (l + p).is_finite() => w * (l + p - max).exp(),
            _ => 0.0,
        })
        .collect();
    let total: f64 = terms.iter().sum();
    if total > 0.0 && total.is_finite() {
        return Ok(terms.into_iter().map(|t| t / total).collect());
    }
    // Signed rules can cancel to a non-positive total when the evidence is
    // peaked relative to the grid. Keep the positive part instead.
    let positive: f64 = terms.iter().filter(|t| **t > 0.0).sum();
    if !(positive > 0.0 && positive.is_finite()) {
        return Err(Error::AllWeightsDegenerate);
    }
    tracing::warn!(total, "signed weights cancel; clipping negative weights");
    Ok(terms.into_iter().map(|t| t.max(0.0) / positive).collect())
}

pub fn fit(data: &TrainingSet, config: &BtgConfig) -> Result<BtgModel> {
    let bounds = config.bounds.hyper_box(data.dim(), &config.family)?;
    let rule = config.quadrature.build(&bounds)?;
    fit_with_rule(data, config, &rule, &|_| 0.0)
}

/// Fits over an explicit rule with a log-prior on node coordinates.
pub fn fit_with_rule(
    data: &TrainingSet,
    config: &BtgConfig,
    rule: &QuadratureRule,
    log_prior: &(dyn Fn(&[f64]) -> f64 + Sync),
) -> Result<BtgModel> {
    if !(0.0..1.0).contains(&config.eps) {
        return Err(Error::EpsilonTooLarge(config.eps));
    }
    let expected = data.dim() + 1 + config.family.param_count();
    if rule.dim() != expected {
        return Err(Error::Config(format!("rule has dimension {}, model needs {expected}", rule.dim())));
    }
    let caches: Vec<Option<NodeCache>> = (0..rule.len())
        .into_par_iter()
        .map(|i| match NodeCache::build(data, &rule.node(i), &config.family, config) {
            Ok(c) => Some(c),
            Err(e) => {
                tracing::debug!(node = i, error = %e, "node skipped");
                None
            }
        })
        .collect();
    let log_ev: Vec<Option<f64>> = caches.iter().map(|c| c.as_ref().map(|c| c.log_evidence)).collect();
    let priors: Vec<f64> = (0..rule.len()).map(|i| log_prior(&rule.node(i))).collect();
    let quad: Vec<f64> = rule.weights.iter().copied().collect();
    let weights = combine_weights(&quad, &log_ev, &priors)?;

    let sparsified = if weights.iter().any(|w| *w < 0.0) {
        let cut = if config.eps > 0.0 {
            SignedCut::MassFraction(1.0 - config.eps)
        } else {
            SignedCut::Count(weights.iter().filter(|w| **w != 0.0).count())
        };
        sparsify_signed(&weights, cut)?
    } else {
        sparsify(&weights, config.eps)?
    };

    let mut is_kept = vec![false; rule.len()];
    let mut kept = Vec::new();
    let mut kept_raw = Vec::new();
    let mut caches = caches;
    for &i in &sparsified.kept_indices {
        if weights[i] == 0.0 {
            continue;
        }
        if let Some(c) = caches[i].take() {
            is_kept[i] = true;
            kept.push(c);
            kept_raw.push(weights[i]);
        }
    }
    let c: f64 = kept_raw.iter().sum();
    if !(c > 0.0) {
        return Err(Error::AllWeightsDegenerate);
    }
    let kept_weights = kept_raw.iter().map(|w| w / c).collect();
    let summaries = (0..rule.len())
        .map(|i| NodeSummary { coords: rule.node(i), quad_weight: quad[i], log_evidence: log_ev[i], weight: weights[i], kept: is_kept[i] })
        .collect();
    Ok(BtgModel { data: data.clone(), config: config.clone(), rule_kind: rule.kind, summaries, kept, kept_weights, sparsified })
}

impl BtgModel {
    pub fn kept_count(&self) -> usize {
        self.kept.len()
    }

    pub fn quantile_options(&self) -> QuantileOptions {
        let qc = &self.config.quantile;
        let dropped = self.sparsified.dropped_mass();
        let ftol = qc.ftol.unwrap_or(if dropped > 0.0 { (2.0 * dropped).min(qc.ftol_cap) } else { 1e-6 });
        QuantileOptions { bound: qc.bound, xtol: qc.xtol, ftol, max_iter: 200 }
    }

    pub fn posterior(&self, x_star: &[f64]) -> Result<Predictive> {
        let comps =
            self.kept.iter().map(|c| conditional_tparams_for(c, &self.data, x_star, self.config.target)).collect::<Result<Vec<_>>>()?;
        Ok(Predictive { mixture: PosteriorMixture::normalized(self.kept_weights.clone(), comps)?, normalization: self.data.normalization })
    }

    pub fn predict(&self, x_star: &[f64]) -> Result<Prediction> {
        self.predict_levels(x_star, &self.config.levels)
    }

    pub fn predict_levels(&self, x_star: &[f64], levels: &[f64]) -> Result<Prediction> {
        let post = self.posterior(x_star)?;
        let opts = self.quantile_options();
        let mut quantiles = Vec::with_capacity(levels.len());
        for &p in levels {
            quantiles.push((p, post.quantile(p, &opts)?));
        }
        let median = match quantiles.iter().find(|(p, _)| *p == 0.5) {
            Some(&(_, v)) => v,
            None => post.quantile(0.5, &opts)?,
        };
        let lower = quantiles.iter().map(|q| q.1).fold(median, f64::min);
        let upper = quantiles.iter().map(|q| q.1).fold(median, f64::max);
        Ok(Prediction { median, lower, upper, quantiles })
    }

    pub fn predict_many(&self, points: &[Vec<f64>]) -> Result<Vec<Prediction>> {
        points.par_iter().map(|x| self.predict(x)).collect()
    }

    /// One row per quadrature node.
    pub fn write_summary_csv<W: Write>(&self, out: W) -> Result<()> {
        let d = self.data.dim();
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["node".to_string()];
        header.extend((1..=d).map(|j| format!("log_lengthscale{j}")));
        header.push("log_noise_variance".into());
        header.extend((1..=self.config.family.param_count()).map(|j| format!("lambda{j}")));
        header.extend(["quad_weight", "log_evidence", "weight", "kept"].map(String::from));
        w.write_record(&header)?;
        for (i, s) in self.summaries.iter().enumerate() {
            let mut row = vec![i.to_string()];
            row.extend(s.coords.iter().map(|v| v.to_string()));
            row.push(s.quad_weight.to_string());
            row.push(s.log_evidence.map_or("nan".into(), |v| v.to_string()));
            row.push(s.weight.to_string());
            row.push(s.kept.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}
