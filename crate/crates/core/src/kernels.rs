//! Squared-exponential covariance with per-dimension lengthscales and a nugget.

use nalgebra::{DMatrix, DVector, RowDVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub lengthscales: Vec<f64>,
    pub noise_variance: f64,
}

impl KernelParams {
    pub fn new(lengthscales: Vec<f64>, noise_variance: f64) -> Result<Self> {
        let p = KernelParams { lengthscales, noise_variance };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lengthscales.is_empty() {
            return Err(Error::InvalidParams("kernel needs at least one lengthscale".into()));
        }
        if let Some(l) = self.lengthscales.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidParams(format!("lengthscales must be positive, got {l}")));
        }
        if !(self.noise_variance >= 0.0 && self.noise_variance.is_finite()) {
            return Err(Error::InvalidParams(format!("noise variance must be >= 0, got {}", self.noise_variance)));
        }
        Ok(())
    }

    fn check_dim(&self, d: usize) -> Result<()> {
        if self.lengthscales.len() != d {
            return Err(Error::InvalidParams(format!(
                "kernel has {} lengthscales but inputs have dimension {}",
                self.lengthscales.len(),
                d
            )));
        }
        Ok(())
    }

    fn scaled_sqdist<'a>(&self, a: impl Iterator<Item = &'a f64>, b: impl Iterator<Item = &'a f64>) -> f64 {
        a.zip(b)
            .zip(&self.lengthscales)
            .map(|((x, y), l)| {
                let t = (x - y) / l;
                t * t
            })
            .sum()
    }

    /// `exp(−½ Σₖ (aₖ − bₖ)²/θₖ²)`, without the nugget.
    pub fn correlation(&self, a: &[f64], b: &[f64]) -> f64 {
        (-0.5 * self.scaled_sqdist(a.iter(), b.iter())).exp()
    }
}

/// `Kᵢⱼ = exp(−½ Σₖ (xᵢₖ − xⱼₖ)²/θₖ²) + σ²·[i = j]`.
pub fn kernel_matrix(x: &DMatrix<f64>, params: &KernelParams) -> Result<DMatrix<f64>> {
    params.validate()?;
    params.check_dim(x.ncols())?;
    let n = x.nrows();
    let rows: Vec<RowDVector<f64>> = (0..n).map(|i| x.row(i).into_owned()).collect();
    let mut k = DMatrix::zeros(n, n);
    for j in 0..n {
        k[(j, j)] = 1.0 + params.noise_variance;
        for i in 0..j {
            let v = (-0.5 * params.scaled_sqdist(rows[i].iter(), rows[j].iter())).exp();
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(k)
}

/// `(K_Xx)ᵢ = k(xᵢ, x*)`, no nugget: the test location is latent.
pub fn cross_kernel(x: &DMatrix<f64>, x_star: &[f64], params: &KernelParams) -> Result<DVector<f64>> {
    params.validate()?;
    params.check_dim(x.ncols())?;
    if x_star.len() != x.ncols() {
        return Err(Error::InvalidParams(format!("test point has dimension {}, expected {}", x_star.len(), x.ncols())));
    }
    Ok(DVector::from_fn(x.nrows(), |i, _| (-0.5 * params.scaled_sqdist(x.row(i).iter(), x_star.iter())).exp()))
}
