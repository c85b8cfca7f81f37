//! Point-prediction error metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub rmse: f64,
    pub mae: f64,
}

pub fn metrics(predictions: &[f64], truths: &[f64]) -> Result<Metrics> {
    if predictions.len() != truths.len() {
        return Err(Error::LengthMismatch(predictions.len(), truths.len()));
    }
    if predictions.is_empty() {
        return Err(Error::InvalidData("no predictions to score".into()));
    }
    let n = predictions.len() as f64;
    let (sq, abs) = predictions.iter().zip(truths).fold((0.0, 0.0), |(s, a), (p, t)| {
        let e = p - t;
        (s + e * e, a + e.abs())
    });
    Ok(Metrics { rmse: (sq / n).sqrt(), mae: abs / n })
}

/// Fraction of truths inside `[lo, hi]`.
pub fn coverage(lower: &[f64], upper: &[f64], truths: &[f64]) -> Result<f64> {
    if lower.len() != truths.len() || upper.len() != truths.len() {
        return Err(Error::LengthMismatch(lower.len().min(upper.len()), truths.len()));
    }
    let inside = truths.iter().zip(lower.iter().zip(upper)).filter(|(t, (l, h))| *l <= *t && *t <= *h).count();
    Ok(inside as f64 / truths.len().max(1) as f64)
}
