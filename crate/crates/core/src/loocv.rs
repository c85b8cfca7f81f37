//! Leave-one-out cross-validation for BTG in O(n³) per node.
//!
//! With `b = (K⁻¹)ᵢᵢ`, `k = K⁻¹eᵢ` and `v = Mᵀk`, deleting point `i` gives
//!
//! * `(K⁽⁻ⁱ⁾)⁻¹ y⁽⁻ⁱ⁾` by an abridged update of `K⁻¹y`,
//! * `M⁽⁻ⁱ⁾ᵀ(K⁽⁻ⁱ⁾)⁻¹M⁽⁻ⁱ⁾ = MᵀK⁻¹M − vvᵀ/b`, a rank-one downdate of `R_X`,
//! * `log det K⁽⁻ⁱ⁾ = log det K + log b`,
//! * the variance factor at the held-out point `1 − Kᵢᵢ + 1/b + (v/b)ᵀA⁽⁻ⁱ⁾⁻¹(v/b)`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::btg::{evidence, gls_solve, jittered_cholesky, BtgModel, NodeCache};
use crate::data::TrainingSet;
use crate::error::{Error, Result};
use crate::kernels::kernel_matrix;
use crate::linalg::{
    abridged_solve, bordered_schur_variance_cached, chol_downdate, delete_entry, delete_row, delete_row_col, principal_minor_logdet,
};
use crate::tmixture::{PosteriorMixture, QuantileOptions, TMixtureComponent};

/// Submodel quantities for every left-out index at one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoocvNodeResult {
    pub location: Vec<f64>,
    pub q: Vec<f64>,
    pub c: Vec<f64>,
    pub log_det_k: Vec<f64>,
    pub log_det_gram: Vec<f64>,
    pub log_evidence: Vec<f64>,
    /// Degrees of freedom of every submodel, `n − 1 − p`.
    pub dof: f64,
    /// Indices that fell back to an explicit refit.
    pub fallbacks: usize,
}

impl LoocvNodeResult {
    fn with_capacity(n: usize, dof: f64) -> Self {
        LoocvNodeResult {
            location: Vec::with_capacity(n),
            q: Vec::with_capacity(n),
            c: Vec::with_capacity(n),
            log_det_k: Vec::with_capacity(n),
            log_det_gram: Vec::with_capacity(n),
            log_evidence: Vec::with_capacity(n),
            dof,
            fallbacks: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    /// `sqrt(q C / dof)` for submodel `i`.
    pub fn scale(&self, i: usize) -> f64 {
        (self.q[i] * self.c[i] / self.dof).sqrt()
    }

    /// Scale with `k(x, x)` raised by `extra` over the latent value.
    pub fn scale_with(&self, i: usize, extra: f64) -> f64 {
        (self.q[i] * (self.c[i] + extra) / self.dof).sqrt()
    }

    fn push(&mut self, s: Submodel) {
        self.location.push(s.location);
        self.q.push(s.q);
        self.c.push(s.c);
        self.log_det_k.push(s.log_det_k);
        self.log_det_gram.push(s.log_det_gram);
        self.log_evidence.push(s.log_evidence);
    }
}

struct Submodel {
    location: f64,
    q: f64,
    c: f64,
    log_det_k: f64,
    log_det_gram: f64,
    log_evidence: f64,
}

fn check_sizes(data: &TrainingSet) -> Result<()> {
    if data.n() < data.p() + 2 {
        return Err(Error::InvalidData(format!(
            "leave-one-out needs at least {} points for {} covariates, got {}",
            data.p() + 2,
            data.p(),
            data.n()
        )));
    }
    Ok(())
}

fn submodel_exponent(cache: &NodeCache, fixed: Option<f64>, n: usize, p: usize) -> f64 {
    let _ = cache;
    fixed.unwrap_or(1.0 - p as f64 / (n - 1) as f64)
}

fn log_jacobian_without(cache: &NodeCache, data: &TrainingSet, i: usize) -> Result<f64> {
    Ok(cache.log_jacobian - cache.transform.log_derivative(data.y[i])?)
}

/// Explicit refit of submodel `i` at the node's hyperparameters.
fn refit_one(
    cache: &NodeCache,
    data: &TrainingSet,
    k: &DMatrix<f64>,
    jitter: f64,
    fixed_exponent: Option<f64>,
    i: usize,
) -> Result<Submodel> {
    let n = data.n();
    let p = data.p();
    let k_sub = delete_row_col(k, i);
    let k_chol = jittered_cholesky(&k_sub, jitter)?;
    let m_sub = delete_row(&data.covariates, i);
    let y_sub = delete_entry(&cache.latent, i);
    let (beta, q, gram) = gls_solve(&y_sub, &m_sub, &k_chol)?;
    let alpha = k_chol.solve(&(&y_sub - &m_sub * &beta));
    let k_cross = DVector::from_iterator(n - 1, (0..n).filter(|&j| j != i).map(|j| k[(j, i)]));
    let m_x = data.covariates.row(i).transpose();
    let location = k_cross.dot(&alpha) + beta.dot(&m_x);
    let c = bordered_schur_variance_cached(&k_chol, &gram, &m_sub, &m_x, &k_cross, 1.0)?;
    let log_j = log_jacobian_without(cache, data, i)?;
    let exponent = submodel_exponent(cache, fixed_exponent, n, p);
    Ok(Submodel {
        location,
        q,
        c,
        log_det_k: k_chol.log_det(),
        log_det_gram: gram.log_det(),
        log_evidence: evidence(n - 1, p, k_chol.log_det(), gram.log_det(), q, log_j, exponent),
    })
}

/// Reference path: refit every submodel from scratch, O(n⁴) per node.
pub fn loocv_node_naive(cache: &NodeCache, data: &TrainingSet, jitter: f64, fixed_exponent: Option<f64>) -> Result<LoocvNodeResult> {
    check_sizes(data)?;
    let n = data.n();
    let k = kernel_matrix(&data.x, &cache.kernel)?;
    let mut out = LoocvNodeResult::with_capacity(n, (n - 1 - data.p()) as f64);
    for i in 0..n {
        out.push(refit_one(cache, data, &k, jitter, fixed_exponent, i)?);
    }
    Ok(out)
}

/// Fast path: one O(n³) inverse, then O(n p + p²) work per left-out index.
///
/// An index whose downdate loses positivity is refit explicitly and counted in `fallbacks`.
pub fn loocv_node(cache: &NodeCache, data: &TrainingSet, jitter: f64, fixed_exponent: Option<f64>) -> Result<LoocvNodeResult> {
    check_sizes(data)?;
    let n = data.n();
    let p = data.p();
    let m = &data.covariates;
    let k = kernel_matrix(&data.x, &cache.kernel)?;
    let kinv = cache.k_chol.inverse();
    let c_full = cache.k_chol.solve(&cache.latent);
    let g_full = &kinv * m;
    let mtc = m.transpose() * &c_full;
    let exponent = submodel_exponent(cache, fixed_exponent, n, p);
    let mut out = LoocvNodeResult::with_capacity(n, (n - 1 - p) as f64);

    for i in 0..n {
        let fast = (|| -> Result<Submodel> {
            let kcol = kinv.column(i).into_owned();
            let b = kcol[i];
            let log_det_k = principal_minor_logdet(cache.k_chol.log_det(), b)?;
            let v = m.transpose() * &kcol;
            let gram = chol_downdate(&cache.gram_chol, &(&v / b.sqrt()))?;
            let c_sub = abridged_solve(&c_full, &kcol, i)?;
            let mut g_sub = DMatrix::zeros(n - 1, p);
            for j in 0..p {
                g_sub.set_column(j, &abridged_solve(&g_full.column(j).into_owned(), &kcol, i)?);
            }
            let rhs = &mtc - &v * (c_full[i] / b);
            let beta = gram.solve(&rhs);
            let alpha = &c_sub - &g_sub * &beta;
            let y_sub = delete_entry(&cache.latent, i);
            let m_sub = delete_row(m, i);
            let q = (&y_sub - &m_sub * &beta).dot(&alpha);
            if !(q > 0.0) {
                return Err(Error::NonPositiveVariance(q));
            }
            let k_cross = DVector::from_iterator(n - 1, (0..n).filter(|&j| j != i).map(|j| k[(j, i)]));
            let m_x = m.row(i).transpose();
            let location = k_cross.dot(&alpha) + beta.dot(&m_x);
            let h = &v / b;
            let w = gram.solve_lower(&h);
            let kii = cache.k_chol.upper().column(i).norm_squared();
            let c = 1.0 - kii + 1.0 / b + w.dot(&w);
            if !(c > 0.0) {
                return Err(Error::NonPositiveVariance(c));
            }
            let log_j = log_jacobian_without(cache, data, i)?;
            Ok(Submodel {
                location,
                q,
                c,
                log_det_k,
                log_det_gram: gram.log_det(),
                log_evidence: evidence(n - 1, p, log_det_k, gram.log_det(), q, log_j, exponent),
            })
        })();
        match fast {
            Ok(s) => out.push(s),
            Err(e) => {
                tracing::debug!(index = i, error = %e, "leave-one-out fast path failed, refitting");
                out.fallbacks += 1;
                out.push(refit_one(cache, data, &k, jitter, fixed_exponent, i)?);
            }
        }
    }
    Ok(out)
}

/// `(log det K⁽⁻ⁱ⁾, log det M⁽⁻ⁱ⁾ᵀK⁽⁻ⁱ⁾⁻¹M⁽⁻ⁱ⁾)` for every `i`, without any downdates.
pub fn loocv_logdets(cache: &NodeCache, covariates: &DMatrix<f64>) -> Result<Vec<(f64, f64)>> {
    let kinv = cache.k_chol.inverse();
    let n = kinv.nrows();
    let ldk = cache.k_chol.log_det();
    let ldg = cache.gram_chol.log_det();
    (0..n)
        .map(|i| {
            let b = kinv[(i, i)];
            let v = covariates.transpose() * kinv.column(i);
            let z = cache.gram_chol.solve_lower(&v);
            let shrink = 1.0 - z.dot(&z) / b;
            if !(shrink > 0.0) {
                return Err(Error::NonPositiveDiagonal(shrink));
            }
            Ok((principal_minor_logdet(ldk, b)?, ldg + shrink.ln()))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoocvRow {
    pub index: usize,
    #[serde(with = "crate::wire::num")]
    pub truth: f64,
    #[serde(with = "crate::wire::num")]
    pub median: f64,
    #[serde(with = "crate::wire::num")]
    pub lower: f64,
    #[serde(with = "crate::wire::num")]
    pub upper: f64,
    #[serde(with = "crate::wire::num")]
    pub log_density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoocvReport {
    pub rows: Vec<LoocvRow>,
    #[serde(with = "crate::wire::num")]
    pub rmse: f64,
    #[serde(with = "crate::wire::num")]
    pub mae: f64,
    #[serde(with = "crate::wire::num")]
    pub mean_log_density: f64,
    pub fallbacks: usize,
}

impl LoocvReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["index", "truth", "median", "lo", "hi", "log_density"])?;
        for r in &self.rows {
            w.write_record([
                r.index.to_string(),
                r.truth.to_string(),
                r.median.to_string(),
                r.lower.to_string(),
                r.upper.to_string(),
                r.log_density.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Per-node submodel results for every kept node of a fitted model.
pub fn loocv_nodes(model: &BtgModel) -> Result<Vec<LoocvNodeResult>> {
    model.kept.par_iter().map(|c| loocv_node(c, &model.data, model.config.jitter, model.config.jacobian_exponent)).collect()
}

/// Assembles the held-out predictive at every training point from per-node results.
pub fn loocv_report(model: &BtgModel, nodes: &[LoocvNodeResult], interval: f64) -> Result<LoocvReport> {
    let data = &model.data;
    let n = data.n();
    let raw = data.raw_labels();
    let opts: QuantileOptions = model.quantile_options();
    let rows = (0..n)
        .into_par_iter()
        .map(|i| -> Result<LoocvRow> {
            // frozen nodes: reweight by the change in evidence
            let shifts: Vec<f64> = model.kept.iter().zip(nodes).map(|(c, r)| r.log_evidence[i] - c.log_evidence).collect();
            let top = shifts.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let weights: Vec<f64> = model.kept_weights.iter().zip(&shifts).map(|(w, s)| w * (s - top).exp()).collect();
            let comps = model
                .kept
                .iter()
                .zip(nodes)
                .map(|(c, r)| {
                    let extra = model.config.target.k_xx(&c.kernel) - 1.0;
                    TMixtureComponent::new(r.dof, r.location[i], r.scale_with(i, extra), c.transform.clone())
                })
                .collect::<Result<Vec<_>>>()?;
            let pred = crate::btg::Predictive { mixture: PosteriorMixture::normalized(weights, comps)?, normalization: data.normalization };
            let median = pred.quantile(0.5, &opts)?;
            let lower = pred.quantile(0.5 * (1.0 - interval), &opts)?;
            let upper = pred.quantile(0.5 * (1.0 + interval), &opts)?;
            Ok(LoocvRow { index: i, truth: raw[i], median, lower, upper, log_density: pred.pdf(raw[i]).ln() })
        })
        .collect::<Result<Vec<_>>>()?;
    let preds: Vec<f64> = rows.iter().map(|r| r.median).collect();
    let m = crate::metrics::metrics(&preds, &raw)?;
    let mean_log_density = rows.iter().map(|r| r.log_density).sum::<f64>() / n as f64;
    Ok(LoocvReport { rows, rmse: m.rmse, mae: m.mae, mean_log_density, fallbacks: nodes.iter().map(|r| r.fallbacks).sum() })
}

/// Leave-one-out medians, 95% intervals and log densities for a fitted model.
pub fn loocv_score(model: &BtgModel) -> Result<LoocvReport> {
    let nodes = loocv_nodes(model)?;
    loocv_report(model, &nodes, 0.95)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::btg::{fit_with_rule, BtgConfig};
    use crate::data::{CovariateKind, Dataset};
    use crate::quadrature::QuadratureRule;
    use crate::transforms::TransformFamily;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn problem(seed: u64, n: usize, d: usize) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect();
        let y = rows.iter().map(|r| (3.0 * r[0]).sin() + r.iter().sum::<f64>() + 0.1 * rng.random::<f64>()).collect();
        Dataset::from_rows(&rows, y).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    fn assert_close(fast: &LoocvNodeResult, slow: &LoocvNodeResult, tol: f64) {
        for i in 0..slow.len() {
            for (name, a, b) in [
                ("m", fast.location[i], slow.location[i]),
                ("q", fast.q[i], slow.q[i]),
                ("C", fast.c[i], slow.c[i]),
                ("logdetK", fast.log_det_k[i], slow.log_det_k[i]),
                ("logdetA", fast.log_det_gram[i], slow.log_det_gram[i]),
            ] {
                assert!(rel(a, b) <= tol, "{name}[{i}]: {a} vs {b}");
            }
        }
    }

    fn cache_for(data: &TrainingSet, family: &str, node: &[f64]) -> NodeCache {
        let c = BtgConfig { family: TransformFamily::parse(family).unwrap(), ..Default::default() };
        NodeCache::build(data, node, &c.family, &c).unwrap()
    }

    #[test]
    fn minimal_case_matches_refit() {
        let data = TrainingSet::new(&problem(1, 3, 1), CovariateKind::Constant, true).unwrap();
        let cache = cache_for(&data, "I", &[(0.05f64).ln(), (0.5f64).ln()]);
        let fast = loocv_node(&cache, &data, 1e-8, None).unwrap();
        let slow = loocv_node_naive(&cache, &data, 1e-8, None).unwrap();
        assert_eq!(fast.fallbacks, 0);
        assert_close(&fast, &slow, 1e-8);
    }

    #[test]
    fn random_problem_matches_refit() {
        let data = TrainingSet::new(&problem(2, 30, 2), CovariateKind::Linear, true).unwrap();
        let cache = cache_for(&data, "L-SA", &[-1.0, -0.5, (1e-3f64).ln(), 0.1, 1.2, -0.3, 0.9]);
        let fast = loocv_node(&cache, &data, 1e-8, None).unwrap();
        let slow = loocv_node_naive(&cache, &data, 1e-8, None).unwrap();
        assert_close(&fast, &slow, 1e-7);
        for i in 0..30 {
            assert!(rel(fast.log_evidence[i], slow.log_evidence[i]) < 1e-7);
        }
    }

    #[test]
    fn duplicated_point_is_redundant() {
        let mut ds = problem(3, 12, 1);
        let row = ds.point(4);
        let mut rows = ds.points();
        rows.push(row);
        ds.y.push(ds.y[4]);
        let ds = Dataset::from_rows(&rows, ds.y.clone()).unwrap();
        let data = TrainingSet::new(&ds, CovariateKind::Constant, true).unwrap();
        // well-conditioned apart from the duplicated pair
        let cache = cache_for(&data, "I", &[-3.0, (1e-10f64).ln()]);
        let fast = loocv_node(&cache, &data, 1e-8, None).unwrap();
        assert!((fast.q[4] - cache.q).abs() / cache.q <= 1e-6);
    }

    #[test]
    fn logdets_scalar_matrix() {
        // lengthscale tiny: K ≈ (1 + σ²) I
        let data = TrainingSet::new(&problem(4, 8, 1), CovariateKind::Constant, true).unwrap();
        let cache = cache_for(&data, "I", &[(1e-4f64).ln(), (0.5f64).ln()]);
        let diag = cache.k_chol.reconstruct()[(0, 0)];
        for (ldk, _) in loocv_logdets(&cache, &data.covariates).unwrap() {
            assert!((ldk - 7.0 * diag.ln()).abs() < 1e-10);
        }
    }

    #[test]
    fn logdets_match_explicit_minors() {
        let data = TrainingSet::new(&problem(5, 20, 2), CovariateKind::Constant, true).unwrap();
        let cache = cache_for(&data, "I", &[-0.5, -0.8, (1e-2f64).ln()]);
        let full = cache.k_chol.reconstruct();
        let dets = loocv_logdets(&cache, &data.covariates).unwrap();
        for (i, (ldk, ldg)) in dets.into_iter().enumerate() {
            let minor = delete_row_col(&full, i);
            assert!((ldk - minor.determinant().ln()).abs() < 1e-8);
            let m = delete_row(&data.covariates, i);
            let gram = m.transpose() * minor.try_inverse().unwrap() * &m;
            assert!((ldg - gram[(0, 0)].ln()).abs() < 1e-8);
        }
    }

    #[test]
    fn linear_truth_has_tiny_errors() {
        let rows: Vec<Vec<f64>> = (0..15).map(|i| vec![i as f64 / 14.0]).collect();
        let y = rows.iter().map(|r| 2.0 * r[0] - 1.0).collect();
        let ds = Dataset::from_rows(&rows, y).unwrap();
        let data = TrainingSet::new(&ds, CovariateKind::Linear, true).unwrap();
        let c = BtgConfig { covariates: CovariateKind::Linear, ..Default::default() };
        let model = fit_with_rule(&data, &c, &QuadratureRule::single(&[(0.3f64).ln(), (1e-6f64).ln()]), &|_| 0.0).unwrap();
        let report = loocv_score(&model).unwrap();
        for r in &report.rows {
            assert!((r.median - r.truth).abs() <= 1e-6, "{r:?}");
        }
    }

    #[test]
    fn score_matches_brute_force_refit() {
        let ds = problem(6, 14, 1);
        let data = TrainingSet::new(&ds, CovariateKind::Constant, true).unwrap();
        let c = BtgConfig { family: TransformFamily::parse("SA").unwrap(), eps: 0.0, ..Default::default() };
        let rule = QuadratureRule {
            nodes: DMatrix::from_row_slice(3, 4, &[-1.0, -4.0, 0.0, 1.0, -0.5, -6.0, 0.2, 1.4, -1.5, -3.0, -0.1, 0.8]),
            weights: DVector::from_vec(vec![0.3, 0.3, 0.4]),
            kind: crate::quadrature::RuleKind::Qmc,
        };
        let model = fit_with_rule(&data, &c, &rule, &|_| 0.0).unwrap();
        let report = loocv_score(&model).unwrap();
        // brute force: refit every submodel's BTG on the frozen rule
        let mut sq = 0.0;
        for i in 0..data.n() {
            let sub = data.without(i);
            let sub_model = fit_with_rule(&sub, &c, &rule, &|_| 0.0).unwrap();
            let pred = sub_model.predict_levels(&data.x.row(i).iter().copied().collect::<Vec<_>>(), &[0.5]).unwrap();
            sq += (pred.median - report.rows[i].truth).powi(2);
        }
        let rmse = (sq / data.n() as f64).sqrt();
        assert!((rmse - report.rmse).abs() < 1e-6, "{rmse} vs {}", report.rmse);
    }

    #[test]
    fn report_csv() {
        let data = TrainingSet::new(&problem(7, 10, 1), CovariateKind::Constant, true).unwrap();
        let model = fit_with_rule(&data, &BtgConfig::default(), &QuadratureRule::single(&[-1.0, -5.0]), &|_| 0.0).unwrap();
        let report = loocv_score(&model).unwrap();
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("index,truth,median,lo,hi,log_density\n"));
        assert_eq!(text.lines().count(), 11);
        assert!(report.rmse >= report.mae);
    }

    #[test]
    fn too_small_is_rejected() {
        let data = TrainingSet::new(&problem(8, 2, 1), CovariateKind::Constant, true).unwrap();
        let cache = cache_for(&data, "I", &[-1.0, -5.0]);
        assert!(loocv_node(&cache, &data, 1e-8, None).is_err());
    }
}
