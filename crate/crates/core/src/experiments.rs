//! Experiment drivers: model comparison tables, quantile-bound timing,
//! sparse-grid vs QMC sweeps and LOOCV scaling.

use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::btg::{conditional_tparams_for, fit_with_rule, BtgConfig, NodeCache};
use crate::config::ExperimentConfig;
use crate::data::{CovariateKind, Dataset, TrainingSet};
use crate::datasets::Split;
use crate::error::{Error, Result};
use crate::loocv::{loocv_node, loocv_node_naive};
use crate::metrics::metrics;
use crate::models::{FittedModel, ModelSpec};
use crate::quadrature::{qmc_rule, sparse_grid_capped, QuadratureRule, RuleKind};
use crate::tmixture::{quantile, BoundMethod, PosteriorMixture, QuantileOptions, TMixtureComponent};
use crate::transforms::TransformFamily;

/// Median of `reps` timed runs after one untimed warm-up.
pub fn time_median<T>(reps: usize, mut f: impl FnMut() -> T) -> (f64, T) {
    let mut out = f();
    let times: Vec<f64> = (0..reps.max(1))
        .map(|_| {
            let t = Instant::now();
            out = f();
            t.elapsed().as_secs_f64()
        })
        .collect();
    (median(times), out)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model: String,
    pub rmse: f64,
    pub mae: f64,
    pub fit_seconds: f64,
    pub predict_seconds: f64,
    pub n_train: usize,
    pub n_test: usize,
}

/// Fits every model on `split.train` and scores medians on `split.test`.
pub fn compare(models: &[String], split: &Split, cfg: &ExperimentConfig) -> Result<Vec<MetricsReport>> {
    if split.test.is_empty() {
        return Err(Error::Config("compare needs a labelled test set".into()));
    }
    let data = cfg.training_set(&split.train)?;
    let points = split.test.points();
    models
        .iter()
        .map(|name| {
            let spec = ModelSpec::parse(name)?;
            let t = Instant::now();
            let model = FittedModel::fit(&spec, &data, &cfg.btg_config(&spec.family), &cfg.mle_config(&spec.family))?;
            let fit_seconds = t.elapsed().as_secs_f64();
            let t = Instant::now();
            let preds = model.predict_many(&points, &[0.5])?;
            let predict_seconds = t.elapsed().as_secs_f64();
            let medians: Vec<f64> = preds.iter().map(|p| p.median).collect();
            let m = metrics(&medians, &split.test.y)?;
            tracing::info!(model = %spec, rmse = m.rmse, mae = m.mae, "scored");
            Ok(MetricsReport {
                model: spec.to_string(),
                rmse: m.rmse,
                mae: m.mae,
                fit_seconds,
                predict_seconds,
                n_train: split.train.len(),
                n_test: split.test.len(),
            })
        })
        .collect()
}

pub fn write_metrics_csv<W: Write>(out: W, reports: &[MetricsReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["model", "rmse", "mae", "fit_seconds", "predict_seconds", "n_train", "n_test"])?;
    for r in reports {
        w.write_record([
            r.model.clone(),
            r.rmse.to_string(),
            r.mae.to_string(),
            r.fit_seconds.to_string(),
            r.predict_seconds.to_string(),
            r.n_train.to_string(),
            r.n_test.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Random positive-weight mixture shaped like a predictive posterior:
/// nearby locations, varied scales and one shared degree of freedom.
pub fn random_posterior_mixture(rng: &mut ChaCha8Rng, nodes: usize) -> Result<PosteriorMixture> {
    let centre = rng.random_range(-2.0..2.0);
    let spread = rng.random_range(0.05..1.0);
    // every node of a posterior has dof n − p
    let dof = rng.random_range(3..60) as f64;
    let mut weights: Vec<f64> = (0..nodes).map(|_| rng.random::<f64>().powi(3) + 1e-6).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    let comps = (0..nodes)
        .map(|_| {
            let loc = centre + spread * rng.random_range(-1.0..1.0);
            let scale = spread * rng.random_range(0.05..0.6);
            TMixtureComponent::plain(dof, loc, scale)
        })
        .collect::<Result<Vec<_>>>()?;
    PosteriorMixture::new(weights, comps)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileBenchRow {
    pub bound: BoundMethod,
    /// Median wall time of one full pass over all mixtures and levels.
    pub median_seconds: f64,
    /// Mixture cdf evaluations in one pass.
    pub evaluations: usize,
    pub solves: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuantileBenchConfig {
    pub nodes: usize,
    pub mixtures: usize,
    pub levels: Vec<f64>,
    pub reps: usize,
    pub seed: u64,
    pub ftol: f64,
    pub xtol: f64,
}

impl Default for QuantileBenchConfig {
    fn default() -> Self {
        QuantileBenchConfig { nodes: 50, mixtures: 200, levels: vec![0.025, 0.5, 0.975], reps: 5, seed: 0, ftol: 1e-3, xtol: 1e-10 }
    }
}

/// Times quantile solving under each bound method on the same mixtures.
pub fn quantile_benchmark(cfg: &QuantileBenchConfig) -> Result<Vec<QuantileBenchRow>> {
    if cfg.nodes == 0 || cfg.mixtures == 0 {
        return Err(Error::Config("benchmark needs at least one node and one mixture".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mixes = (0..cfg.mixtures).map(|_| random_posterior_mixture(&mut rng, cfg.nodes)).collect::<Result<Vec<_>>>()?;
    [BoundMethod::None, BoundMethod::ConvexHull, BoundMethod::SingularWeight]
        .into_iter()
        .map(|bound| {
            let opts = QuantileOptions { bound, xtol: cfg.xtol, ftol: cfg.ftol, max_iter: 200 };
            let pass = || -> Result<usize> {
                let mut evals = 0;
                for m in &mixes {
                    for &p in &cfg.levels {
                        evals += quantile(m, p, &opts)?.evaluations;
                    }
                }
                Ok(evals)
            };
            let (secs, evals) = time_median(cfg.reps, pass);
            Ok(QuantileBenchRow { bound, median_seconds: secs, evaluations: evals?, solves: mixes.len() * cfg.levels.len() })
        })
        .collect()
}

pub fn write_quantile_bench_csv<W: Write>(out: W, rows: &[QuantileBenchRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["bound", "median_seconds", "evaluations", "solves"])?;
    for r in rows {
        w.write_record([r.bound.name().to_string(), r.median_seconds.to_string(), r.evaluations.to_string(), r.solves.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// One point of a kept-node sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub rule: RuleKind,
    pub kept: usize,
    /// `Σ_kept |w̃| / Σ |w̃|`.
    pub kept_mass: f64,
    pub mse: f64,
    /// Median seconds to predict all test medians with the kept nodes.
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RuleSweepConfig {
    pub family: TransformFamily,
    pub level: usize,
    /// Number of kept-node prefixes per rule.
    pub steps: usize,
    pub reps: usize,
    pub node_cap: usize,
}

impl Default for RuleSweepConfig {
    fn default() -> Self {
        RuleSweepConfig { family: TransformFamily::parse("L-SA").expect("known family"), level: 3, steps: 10, reps: 3, node_cap: 20_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleSweep {
    pub sparse_nodes: usize,
    pub qmc_nodes: usize,
    pub points: Vec<SweepPoint>,
}

impl RuleSweep {
    pub fn curve(&self, rule: RuleKind) -> Vec<&SweepPoint> {
        self.points.iter().filter(|p| p.rule == rule).collect()
    }
}

/// Grows the kept-node set from the heaviest weights to the whole grid, for a
/// sparse grid and a QMC rule of the same size, recording mass, test MSE and
/// prediction time at each prefix.
pub fn rule_sweep(split: &Split, base: &BtgConfig, cfg: &RuleSweepConfig) -> Result<RuleSweep> {
    if split.test.is_empty() {
        return Err(Error::Config("rule sweep needs a labelled test set".into()));
    }
    let data = TrainingSet::new(&split.train, base.covariates, base.normalize)?;
    let config = BtgConfig { family: cfg.family.clone(), eps: 0.0, ..base.clone() };
    let bounds = config.bounds.hyper_box(data.dim(), &cfg.family)?;
    let sparse = sparse_grid_capped(bounds.dim(), cfg.level, &bounds, cfg.node_cap)?;
    let qmc = qmc_rule(bounds.dim(), sparse.len(), &bounds)?;
    let mut points = Vec::new();
    for rule in [&sparse, &qmc] {
        points.extend(sweep_one(&data, &split.test, &config, rule, cfg)?);
    }
    Ok(RuleSweep { sparse_nodes: sparse.len(), qmc_nodes: qmc.len(), points })
}

fn sweep_one(
    data: &TrainingSet,
    test: &Dataset,
    config: &BtgConfig,
    rule: &QuadratureRule,
    cfg: &RuleSweepConfig,
) -> Result<Vec<SweepPoint>> {
    let model = fit_with_rule(data, config, rule, &|_| 0.0)?;
    // every valid node counts, including ones whose weight underflowed: they
    // still cost a component per prediction
    let mut order: Vec<usize> = (0..rule.len()).filter(|&i| model.summaries[i].log_evidence.is_some()).collect();
    order.sort_by(|&a, &b| model.summaries[b].weight.abs().total_cmp(&model.summaries[a].weight.abs()));
    let caches = order
        .par_iter()
        .map(|&i| NodeCache::build(data, &model.summaries[i].coords, &config.family, config))
        .collect::<Result<Vec<_>>>()?;
    let node_weights: Vec<f64> = order.iter().map(|&i| model.summaries[i].weight).collect();
    let total: f64 = node_weights.iter().map(|w| w.abs()).sum();
    let n = order.len();
    let steps = cfg.steps.clamp(1, n);
    let sizes: Vec<usize> = (1..=steps).map(|s| (s * n).div_ceil(steps)).collect();
    let test_points = test.points();
    // fixed tolerances so solver work per prediction does not depend on the prefix
    let opts = QuantileOptions { bound: BoundMethod::ConvexHull, xtol: 1e-10, ftol: 1e-8, max_iter: 200 };
    let prefixes: Vec<(usize, Vec<f64>)> = sizes
        .into_iter()
        .filter_map(|k| {
            let sum: f64 = node_weights[..k].iter().sum();
            if !(sum > 0.0) {
                tracing::debug!(kept = k, "prefix has non-positive mass; skipped");
                return None;
            }
            Some((k, node_weights[..k].iter().map(|w| w / sum).collect()))
        })
        .collect();
    let predict = |k: usize, weights: &[f64]| -> Result<Vec<f64>> {
        test_points
            .iter()
            .map(|x| {
                let comps = caches[..k].iter().map(|c| conditional_tparams_for(c, data, x, config.target)).collect::<Result<Vec<_>>>()?;
                let mix = PosteriorMixture::new(weights.to_vec(), comps)?;
                Ok(data.normalization.inverse(quantile(&mix, 0.5, &opts)?.value))
            })
            .collect()
    };
    // untimed pass doubles as warm-up; timed repetitions then cycle through
    // the prefixes so slow drift in machine load hits all of them alike
    let mut out = Vec::new();
    for (k, weights) in &prefixes {
        let medians = predict(*k, weights)?;
        let mse = metrics(&medians, &test.y)?.rmse.powi(2);
        let kept_mass = node_weights[..*k].iter().map(|w| w.abs()).sum::<f64>() / total;
        out.push(SweepPoint { rule: rule.kind, kept: *k, kept_mass, mse, seconds: 0.0 });
    }
    let mut times = vec![Vec::new(); prefixes.len()];
    for _ in 0..cfg.reps.max(1) {
        for (t, (k, weights)) in times.iter_mut().zip(&prefixes) {
            let start = Instant::now();
            predict(*k, weights)?;
            t.push(start.elapsed().as_secs_f64());
        }
    }
    for (p, t) in out.iter_mut().zip(times) {
        p.seconds = median(t);
    }
    Ok(out)
}

pub fn write_sweep_csv<W: Write>(out: W, sweep: &RuleSweep) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["rule", "kept", "kept_mass", "mse", "seconds"])?;
    for p in &sweep.points {
        w.write_record([p.rule.name().to_string(), p.kept.to_string(), p.kept_mass.to_string(), p.mse.to_string(), p.seconds.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Least-squares line `t ≈ a + b·k`; returns `(a, b)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let b = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (my - b * mx, b)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoocvTiming {
    pub n: usize,
    pub fast_seconds: f64,
    pub naive_seconds: Option<f64>,
}

/// Synthetic 2-D problem of size `n` used for LOOCV timing.
pub fn timing_problem(n: usize, seed: u64) -> Result<TrainingSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
    let y = rows.iter().map(|r| (2.0 * r[0]).sin() + r[1] * r[1] + 0.05 * rng.random::<f64>()).collect();
    TrainingSet::new(&Dataset::from_rows(&rows, y)?, CovariateKind::Constant, true)
}

/// Times the per-node submodel computation with the downdate path and,
/// when `naive` is set, with one refit per left-out point.
pub fn loocv_timing(sizes: &[usize], naive: bool, reps: usize, seed: u64) -> Result<Vec<LoocvTiming>> {
    let config = BtgConfig { family: TransformFamily::parse("SA")?, ..Default::default() };
    let node = [(0.4f64).ln(), (0.4f64).ln(), (1e-3f64).ln(), 0.1, 1.2];
    let problems = sizes
        .iter()
        .map(|&n| {
            let data = timing_problem(n, seed)?;
            let cache = crate::btg::NodeCache::build(&data, &node, &config.family, &config)?;
            // untimed warm-up, also surfaces errors
            loocv_node(&cache, &data, config.jitter, None)?;
            if naive {
                loocv_node_naive(&cache, &data, config.jitter, None)?;
            }
            Ok((data, cache))
        })
        .collect::<Result<Vec<_>>>()?;
    // repetitions cycle through the sizes so drift in machine load does not
    // bias the ratio between them
    let mut fast = vec![Vec::new(); sizes.len()];
    let mut slow = vec![Vec::new(); sizes.len()];
    for _ in 0..reps.max(1) {
        for (s, (data, cache)) in problems.iter().enumerate() {
            let t = Instant::now();
            loocv_node(cache, data, config.jitter, None)?;
            fast[s].push(t.elapsed().as_secs_f64());
            if naive {
                let t = Instant::now();
                loocv_node_naive(cache, data, config.jitter, None)?;
                slow[s].push(t.elapsed().as_secs_f64());
            }
        }
    }
    Ok(sizes
        .iter()
        .zip(fast.into_iter().zip(slow))
        .map(|(&n, (f, s))| LoocvTiming { n, fast_seconds: median(f), naive_seconds: naive.then(|| median(s)) })
        .collect())
}

pub fn write_loocv_timing_csv<W: Write>(out: W, rows: &[LoocvTiming]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n", "fast_seconds", "naive_seconds"])?;
    for r in rows {
        w.write_record([r.n.to_string(), r.fast_seconds.to_string(), r.naive_seconds.map_or(String::new(), |t| t.to_string())])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::Synthetic;

    #[test]
    fn median_timer() {
        let mut calls = 0;
        let (t, v) = time_median(5, || {
            calls += 1;
            calls
        });
        assert_eq!(calls, 6);
        assert_eq!(v, 6);
        assert!(t >= 0.0);
    }

    #[test]
    fn line_fit() {
        let (a, b) = linear_fit(&[1.0, 2.0, 3.0], &[3.0, 5.0, 7.0]);
        assert!((a - 1.0).abs() < 1e-12 && (b - 2.0).abs() < 1e-12);
    }

    #[test]
    fn compare_table() {
        let split = Synthetic::IntSine.generate_sized(20, 30, 1);
        let cfg = ExperimentConfig { mle_starts: 2, ..Default::default() };
        let reports = compare(&["GP".into(), "BTG-I".into()], &split, &cfg).unwrap();
        assert_eq!(reports.iter().map(|r| r.model.as_str()).collect::<Vec<_>>(), ["GP", "BTG-I"]);
        for r in &reports {
            assert!(r.rmse >= r.mae && r.mae >= 0.0);
        }
        let mut buf = Vec::new();
        write_metrics_csv(&mut buf, &reports).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 3);
    }

    #[test]
    fn bounds_need_fewer_evaluations() {
        let cfg = QuantileBenchConfig { mixtures: 20, reps: 1, ..Default::default() };
        let rows = quantile_benchmark(&cfg).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows[1].evaluations < rows[0].evaluations);
        assert!(rows.iter().all(|r| r.solves == 60));
    }

    #[test]
    fn sweep_small() {
        let split = Synthetic::SixHumpCamel.generate_sized(12, 10, 2);
        let cfg = RuleSweepConfig { family: TransformFamily::identity(), level: 3, steps: 4, reps: 1, ..Default::default() };
        let sweep = rule_sweep(&split, &BtgConfig::default(), &cfg).unwrap();
        assert_eq!(sweep.sparse_nodes, sweep.qmc_nodes);
        for rule in [RuleKind::SparseGrid, RuleKind::Qmc] {
            let c = sweep.curve(rule);
            assert!(!c.is_empty());
            assert!(c.windows(2).all(|w| w[0].kept < w[1].kept));
        }
        let q = sweep.curve(RuleKind::Qmc);
        assert!(q.windows(2).all(|w| w[0].kept_mass <= w[1].kept_mass + 1e-12));
        assert!((q.last().unwrap().kept_mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn loocv_timing_rows() {
        let rows = loocv_timing(&[10, 20], true, 1, 0).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.naive_seconds.is_some()));
    }
}
