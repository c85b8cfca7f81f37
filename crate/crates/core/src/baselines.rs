//! Maximum-likelihood comparators: GP (identity warp), WGP and CWGP.
//!
//! The mean coefficients and the signal variance are profiled out, leaving
//! `(n/2) log(2π q/n) + n/2 + ½ log|K| − log J` over `(log θ, log σ², λ)`.

use std::io::Write;
use std::sync::Arc;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::btg::{decode_node, gls_solve, jittered_cholesky, BoxSpec, Prediction};
use crate::data::TrainingSet;
use crate::error::{Error, Result};
use crate::kernels::{cross_kernel, kernel_matrix, KernelParams};
use crate::linalg::{CholeskyFactor, DEFAULT_JITTER_RELATIVE};
use crate::optim::{Bfgs, LocalOptimizer};
use crate::quadrature::HyperBox;
use crate::transforms::{Transform, TransformFamily};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Profiled negative log likelihood at box coordinates `(log θ…, log σ², λ…)`.
/// Any numerical failure maps to `+∞`.
pub fn wgp_nll(coords: &[f64], data: &TrainingSet, family: &TransformFamily, jitter: f64) -> f64 {
    nll_parts(coords, data, family, jitter).map_or(f64::INFINITY, |p| p.nll)
}

struct NllParts {
    nll: f64,
    kernel: KernelParams,
    transform: Transform,
    k_chol: CholeskyFactor,
    beta: DVector<f64>,
    alpha: DVector<f64>,
    q: f64,
}

fn nll_parts(coords: &[f64], data: &TrainingSet, family: &TransformFamily, jitter: f64) -> Result<NllParts> {
    let (kernel, transform) = decode_node(coords, data.dim(), family)?;
    let n = data.n() as f64;
    let latent = DVector::from_vec(data.y.iter().map(|v| transform.forward(*v)).collect::<Result<Vec<_>>>()?);
    let log_j = transform.log_jacobian(data.y.as_slice())?;
    let k = kernel_matrix(&data.x, &kernel)?;
    let k_chol = jittered_cholesky(&k, jitter)?;
    let (beta, q, _) = gls_solve(&latent, &data.covariates, &k_chol)?;
    if !(q > 0.0) {
        return Err(Error::NonPositiveVariance(q));
    }
    let alpha = k_chol.solve(&(&latent - &data.covariates * &beta));
    let nll = 0.5 * n * (LN_2PI + (q / n).ln()) + 0.5 * n + 0.5 * k_chol.log_det() - log_j;
    if !nll.is_finite() {
        return Err(Error::NonPositiveVariance(q));
    }
    Ok(NllParts { nll, kernel, transform, k_chol, beta, alpha, q })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MleConfig {
    pub family: TransformFamily,
    pub bounds: BoxSpec,
    pub starts: usize,
    pub seed: u64,
    pub jitter: f64,
    pub max_iter: usize,
}

impl Default for MleConfig {
    fn default() -> Self {
        MleConfig {
            family: TransformFamily::identity(),
            bounds: BoxSpec::default(),
            starts: 8,
            seed: 0,
            jitter: DEFAULT_JITTER_RELATIVE,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MleModel {
    pub family: TransformFamily,
    /// Fitted box coordinates `(log θ…, log σ², λ…)`.
    pub coords: Vec<f64>,
    pub kernel: KernelParams,
    pub transform: Arc<Transform>,
    pub beta: DVector<f64>,
    /// Profiled latent signal variance `q/n`.
    pub signal_variance: f64,
    pub nll: f64,
    pub initial_nll: f64,
    pub iterations: usize,
    pub trace: Vec<f64>,
    data: TrainingSet,
    k_chol: CholeskyFactor,
    alpha: DVector<f64>,
}

fn logistic(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

fn to_box(u: &[f64], b: &HyperBox) -> Vec<f64> {
    u.iter().enumerate().map(|(j, v)| b.lower[j] + (b.upper[j] - b.lower[j]) * logistic(*v)).collect()
}

fn from_box(x: &[f64], b: &HyperBox) -> Vec<f64> {
    x.iter()
        .enumerate()
        .map(|(j, v)| {
            let t = ((v - b.lower[j]) / (b.upper[j] - b.lower[j])).clamp(1e-9, 1.0 - 1e-9);
            (t / (1.0 - t)).ln()
        })
        .collect()
}

pub fn mle_fit(data: &TrainingSet, config: &MleConfig) -> Result<MleModel> {
    mle_fit_with(data, config, &Bfgs { max_iter: config.max_iter, ..Default::default() })
}

/// Multi-start local minimization of [`wgp_nll`] inside the box.
pub fn mle_fit_with(data: &TrainingSet, config: &MleConfig, optimizer: &dyn LocalOptimizer) -> Result<MleModel> {
    let first = data.y[0];
    if data.y.iter().all(|v| *v == first) {
        return Err(Error::InvalidData("labels are constant; nothing to regress".into()));
    }
    if config.starts == 0 {
        return Err(Error::Config("mle needs at least one start".into()));
    }
    let bounds = config.bounds.hyper_box(data.dim(), &config.family)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let starts: Vec<Vec<f64>> =
        (0..config.starts).map(|_| (0..bounds.dim()).map(|j| rng.random_range(bounds.lower[j]..=bounds.upper[j])).collect()).collect();
    let objective = |u: &[f64]| wgp_nll(&to_box(u, &bounds), data, &config.family, config.jitter);
    let results: Vec<_> = starts.par_iter().map(|x0| optimizer.minimize(&objective, &from_box(x0, &bounds))).collect();
    let best =
        results.into_iter().filter(|r| r.value.is_finite()).min_by(|a, b| a.value.total_cmp(&b.value)).ok_or(Error::OptimizationFailed)?;
    let coords = to_box(&best.x, &bounds);
    let parts = nll_parts(&coords, data, &config.family, config.jitter)?;
    Ok(MleModel {
        family: config.family.clone(),
        coords,
        kernel: parts.kernel,
        transform: Arc::new(parts.transform),
        beta: parts.beta,
        signal_variance: parts.q / data.n() as f64,
        nll: parts.nll,
        initial_nll: best.trace[0],
        iterations: best.iterations,
        trace: best.trace,
        data: data.clone(),
        k_chol: parts.k_chol,
        alpha: parts.alpha,
    })
}

impl MleModel {
    pub fn training_set(&self) -> &TrainingSet {
        &self.data
    }

    /// Latent Gaussian predictive `(mean, variance)` of the noise-free value.
    pub fn latent(&self, x_star: &[f64]) -> Result<(f64, f64)> {
        let k = cross_kernel(&self.data.x, x_star, &self.kernel)?;
        let mean = k.dot(&self.alpha) + self.beta.dot(&self.data.covariate_row(x_star));
        let z = self.k_chol.solve_lower(&k);
        let var = self.signal_variance * (1.0 - z.dot(&z)).max(0.0);
        Ok((mean, var))
    }

    pub fn predict(&self, x_star: &[f64]) -> Result<Prediction> {
        let (mean, var) = self.latent(x_star)?;
        let sd = var.sqrt();
        let nrm = &self.data.normalization;
        let median = nrm.inverse(self.transform.inverse(mean)?);
        let lower = nrm.inverse(self.transform.inverse_ext(mean - 1.96 * sd));
        let upper = nrm.inverse(self.transform.inverse_ext(mean + 1.96 * sd));
        Ok(Prediction { median, lower, upper, quantiles: vec![(0.025, lower), (0.5, median), (0.975, upper)] })
    }

    pub fn predict_many(&self, points: &[Vec<f64>]) -> Result<Vec<Prediction>> {
        points.par_iter().map(|x| self.predict(x)).collect()
    }

    /// `name,value` rows for every fitted parameter.
    pub fn write_params_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["name", "value"])?;
        for (j, l) in self.kernel.lengthscales.iter().enumerate() {
            w.write_record([format!("lengthscale{}", j + 1), l.to_string()])?;
        }
        w.write_record(["noise_variance".to_string(), self.kernel.noise_variance.to_string()])?;
        w.write_record(["signal_variance".to_string(), self.signal_variance.to_string()])?;
        for (j, b) in self.beta.iter().enumerate() {
            w.write_record([format!("beta{}", j + 1), b.to_string()])?;
        }
        for (j, v) in self.transform.params().iter().enumerate() {
            w.write_record([format!("lambda{}", j + 1), v.to_string()])?;
        }
        w.write_record(["nll".to_string(), self.nll.to_string()])?;
        w.write_record(["iterations".to_string(), self.iterations.to_string()])?;
        w.flush()?;
        Ok(())
    }
}

/// Standalone prediction entry point.
pub fn mle_predict(model: &MleModel, x_star: &[f64]) -> Result<Prediction> {
    model.predict(x_star)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{CovariateKind, Dataset};
    use crate::linalg::cholesky;
    use nalgebra::DMatrix;
    use rand_distr::StandardNormal;

    fn toy(seed: u64, n: usize) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(-2.0..2.0)]).collect();
        let y = rows.iter().map(|r| r[0].sin() + 0.05 * rng.random::<f64>()).collect();
        Dataset::from_rows(&rows, y).unwrap()
    }

    fn dense_nll(coords: &[f64], data: &TrainingSet, family: &TransformFamily) -> f64 {
        let (kernel, tr) = decode_node(coords, data.dim(), family).unwrap();
        let n = data.n();
        let mut k = kernel_matrix(&data.x, &kernel).unwrap();
        let jit = DEFAULT_JITTER_RELATIVE * k.diagonal().mean();
        for i in 0..n {
            k[(i, i)] += jit;
        }
        let kinv = k.clone().try_inverse().unwrap();
        let y = DVector::from_iterator(n, data.y.iter().map(|v| tr.forward(*v).unwrap()));
        let m = &data.covariates;
        let beta = (m.transpose() * &kinv * m).try_inverse().unwrap() * m.transpose() * &kinv * &y;
        let r = &y - m * beta;
        let q = (r.transpose() * &kinv * &r)[(0, 0)];
        let s2 = q / n as f64;
        let logj: f64 = data.y.iter().map(|v| tr.log_derivative(*v).unwrap()).sum();
        0.5 * q / s2 + 0.5 * n as f64 * (2.0 * std::f64::consts::PI * s2).ln() + 0.5 * k.determinant().ln() - logj
    }

    #[test]
    fn matches_dense_oracle() {
        let data = TrainingSet::new(&toy(1, 12), CovariateKind::Constant, true).unwrap();
        for (fam, lam) in [("I", vec![]), ("BC", vec![0.5]), ("L-SA", vec![0.2, 1.1, -0.1, 0.7])] {
            let family = TransformFamily::parse(fam).unwrap();
            let mut c = vec![-0.3, -5.0];
            c.extend(lam);
            let got = wgp_nll(&c, &data, &family, DEFAULT_JITTER_RELATIVE);
            let want = dense_nll(&c, &data, &family);
            assert!((got - want).abs() < 1e-9 * want.abs().max(1.0), "{fam}: {got} vs {want}");
        }
    }

    #[test]
    fn affine_changes_by_log_jacobian() {
        let ds = toy(2, 15);
        let data = TrainingSet::new(&ds, CovariateKind::Constant, false).unwrap();
        let (a, b) = (0.3, 2.5);
        let scaled = Dataset::new(ds.x.clone(), ds.y.iter().map(|v| a + b * v).collect()).unwrap();
        let sdata = TrainingSet::new(&scaled, CovariateKind::Constant, false).unwrap();
        let kern = [-0.2, -4.0];
        let warped = wgp_nll(&[kern[0], kern[1], a, b], &data, &TransformFamily::parse("L").unwrap(), DEFAULT_JITTER_RELATIVE);
        let plain = wgp_nll(&kern, &sdata, &TransformFamily::identity(), DEFAULT_JITTER_RELATIVE);
        assert!((warped - plain + 15.0 * b.ln()).abs() < 1e-9);
    }

    #[test]
    fn recovers_lengthscale() {
        let n = 100;
        let truth = 0.3f64;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64 / (n - 1) as f64 * 3.0]).collect();
        let x = DMatrix::from_fn(n, 1, |i, _| rows[i][0]);
        let k = kernel_matrix(&x, &KernelParams::new(vec![truth], 1e-4).unwrap()).unwrap();
        let r = cholesky(&k, 0.0).unwrap();
        let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = r.upper().transpose() * z;
        let ds = Dataset::new(x, y.iter().copied().collect()).unwrap();
        let data = TrainingSet::new(&ds, CovariateKind::Constant, true).unwrap();
        let model = mle_fit(&data, &MleConfig::default()).unwrap();
        assert!((model.coords[0] - truth.ln()).abs() < 0.5, "{:?}", model.coords);
        assert!(model.nll <= model.initial_nll);
    }

    #[test]
    fn log_normal_data_prefers_box_cox() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64 / 39.0 * 4.0]).collect();
        let y: Vec<f64> = rows.iter().map(|r| (2.0 * r[0].sin() + 0.1 * rng.random::<f64>()).exp()).collect();
        let data = TrainingSet::new(&Dataset::from_rows(&rows, y).unwrap(), CovariateKind::Constant, false).unwrap();
        let gp = mle_fit(&data, &MleConfig::default()).unwrap();
        let bc = mle_fit(&data, &MleConfig { family: TransformFamily::parse("BC").unwrap(), ..Default::default() }).unwrap();
        assert!(bc.nll < gp.nll, "{} vs {}", bc.nll, gp.nll);
    }

    #[test]
    fn constant_labels_rejected() {
        let ds = Dataset::from_rows(&[vec![0.0], vec![1.0], vec![2.0]], vec![1.0; 3]).unwrap();
        let data = TrainingSet::new(&ds, CovariateKind::Constant, false).unwrap();
        assert!(matches!(mle_fit(&data, &MleConfig::default()), Err(Error::InvalidData(_))));
    }

    #[test]
    fn gp_interpolates_and_matches_oracle() {
        let data = TrainingSet::new(&toy(3, 10), CovariateKind::Constant, true).unwrap();
        let model =
            mle_fit(&data, &MleConfig { bounds: BoxSpec { noise_variance: (1e-9, 1e-8), ..Default::default() }, ..Default::default() })
                .unwrap();
        let raw = data.raw_labels();
        for i in 0..10 {
            let p = model.predict(&[data.x[(i, 0)]]).unwrap();
            assert!((p.median - raw[i]).abs() < 1e-3);
        }
        // dense oracle at an off-grid point
        let x = [0.123];
        let n = 10;
        let mut k = kernel_matrix(&data.x, &model.kernel).unwrap();
        let jit = DEFAULT_JITTER_RELATIVE * k.diagonal().mean();
        for i in 0..n {
            k[(i, i)] += jit;
        }
        let kinv = k.try_inverse().unwrap();
        let kx = cross_kernel(&data.x, &x, &model.kernel).unwrap();
        let mean = (kx.transpose() * &kinv * (&data.y - &data.covariates * &model.beta))[(0, 0)] + model.beta[0];
        let (lat, _) = model.latent(&x).unwrap();
        assert!((lat - mean).abs() < 1e-8);
    }

    #[test]
    fn warped_median_is_half_quantile() {
        let data = TrainingSet::new(&toy(4, 15), CovariateKind::Constant, true).unwrap();
        let model = mle_fit(&data, &MleConfig { family: TransformFamily::parse("SA").unwrap(), starts: 2, ..Default::default() }).unwrap();
        let (m, v) = model.latent(&[0.4]).unwrap();
        let sd = v.sqrt();
        // numerical inversion of the warped Gaussian cdf Φ((g(y) − m)/sd) on the normalized scale
        let cdf = |y: f64| {
            let z = (model.transform.forward_ext(y) - m) / sd;
            0.5 * (1.0 + crate::tmixture::t_cdf(z, 1e9) * 2.0 - 1.0)
        };
        let (mut lo, mut hi) = (-50.0, 50.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if cdf(mid) < 0.5 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let p = model.predict(&[0.4]).unwrap();
        assert!((data.normalization.inverse(0.5 * (lo + hi)) - p.median).abs() < 1e-8);
    }

    #[test]
    fn params_csv() {
        let data = TrainingSet::new(&toy(5, 10), CovariateKind::Constant, true).unwrap();
        let model = mle_fit(&data, &MleConfig { starts: 1, ..Default::default() }).unwrap();
        let mut buf = Vec::new();
        model.write_params_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("name,value\nlengthscale1,"));
    }
}
