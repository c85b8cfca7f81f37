//! Model names (`GP`, `WGP-BC`, `CWGP-L-SA`, `BTG-I`, ...) and a common
//! fit/predict front for the Bayesian model and its MLE comparators.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::baselines::{mle_fit, MleConfig, MleModel};
use crate::btg::{fit, BtgConfig, BtgModel, Prediction};
use crate::error::{Error, Result};
use crate::transforms::TransformFamily;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Gp,
    Wgp,
    Cwgp,
    Btg,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub family: TransformFamily,
}

impl ModelSpec {
    /// `GP`, `WGP[-fam]` (BoxCox by default), `CWGP[-fam]` (L-SA by default), `BTG[-fam]` (identity by default).
    pub fn parse(name: &str) -> Result<Self> {
        let name = name.trim();
        let (head, tail) = match name.split_once('-') {
            Some((h, t)) => (h, Some(t)),
            None => (name, None),
        };
        let family = |default: &str| TransformFamily::parse(tail.unwrap_or(default));
        let spec = match head.to_ascii_uppercase().as_str() {
            "GP" => {
                if tail.is_some() {
                    return Err(Error::Config(format!("`{name}`: GP takes no transform; use WGP-<family>")));
                }
                ModelSpec { kind: ModelKind::Gp, family: TransformFamily::identity() }
            }
            "WGP" => ModelSpec { kind: ModelKind::Wgp, family: family("BC")? },
            "CWGP" => ModelSpec { kind: ModelKind::Cwgp, family: family("L-SA")? },
            "BTG" => ModelSpec { kind: ModelKind::Btg, family: family("I")? },
            _ => return Err(Error::Config(format!("unknown model `{name}` (expected GP, WGP, CWGP or BTG)"))),
        };
        match spec.kind {
            ModelKind::Wgp if spec.family.kinds().len() != 1 => {
                Err(Error::Config(format!("`{name}`: WGP uses a single transform; use CWGP for compositions")))
            }
            ModelKind::Cwgp if spec.family.kinds().len() < 2 => {
                Err(Error::Config(format!("`{name}`: CWGP needs a composition such as L-SA")))
            }
            _ => Ok(spec),
        }
    }

    pub fn is_bayesian(&self) -> bool {
        self.kind == ModelKind::Btg
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ModelKind::Gp => write!(f, "GP"),
            ModelKind::Wgp => write!(f, "WGP-{}", self.family),
            ModelKind::Cwgp => write!(f, "CWGP-{}", self.family),
            ModelKind::Btg => write!(f, "BTG-{}", self.family),
        }
    }
}

#[derive(Debug, Clone)]
pub enum FittedModel {
    Btg(Box<BtgModel>),
    Mle(Box<MleModel>),
}

/// `Φ⁻¹(p)`.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidLevel(p));
    }
    Ok(Normal::standard().inverse_cdf(p))
}

impl FittedModel {
    pub fn fit(spec: &ModelSpec, data: &crate::data::TrainingSet, btg: &BtgConfig, mle: &MleConfig) -> Result<Self> {
        if spec.is_bayesian() {
            let config = BtgConfig { family: spec.family.clone(), ..btg.clone() };
            Ok(FittedModel::Btg(Box::new(fit(data, &config)?)))
        } else {
            let config = MleConfig { family: spec.family.clone(), ..mle.clone() };
            Ok(FittedModel::Mle(Box::new(mle_fit(data, &config)?)))
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            FittedModel::Btg(m) => m.data.dim(),
            FittedModel::Mle(m) => m.kernel.lengthscales.len(),
        }
    }

    /// Median, the 95% interval and the requested quantile levels.
    pub fn predict(&self, x: &[f64], levels: &[f64]) -> Result<Prediction> {
        if x.len() != self.dim() {
            return Err(Error::InvalidParams(format!("point has dimension {}, model expects {}", x.len(), self.dim())));
        }
        match self {
            FittedModel::Btg(m) => {
                let mut pred = m.predict_levels(x, levels)?;
                if !levels.contains(&0.025) || !levels.contains(&0.975) {
                    let iv = m.predict_levels(x, &[0.025, 0.975])?;
                    pred.lower = iv.quantiles[0].1;
                    pred.upper = iv.quantiles[1].1;
                } else {
                    pred.lower = level_value(&pred, 0.025);
                    pred.upper = level_value(&pred, 0.975);
                }
                Ok(pred)
            }
            FittedModel::Mle(m) => {
                let mut pred = m.predict(x)?;
                let (mean, var) = m.latent(x)?;
                let sd = var.sqrt();
                let nrm = &m_data(m).normalization;
                pred.quantiles = levels
                    .iter()
                    .map(|&p| Ok((p, nrm.inverse(m.transform.inverse_ext(mean + normal_quantile(p)? * sd)))))
                    .collect::<Result<_>>()?;
                Ok(pred)
            }
        }
    }

    pub fn predict_many(&self, points: &[Vec<f64>], levels: &[f64]) -> Result<Vec<Prediction>> {
        use rayon::prelude::*;
        points.par_iter().map(|x| self.predict(x, levels)).collect()
    }

    /// Node table for Bayesian models, parameter table for MLE fits.
    pub fn write_summary_csv<W: Write>(&self, out: W) -> Result<()> {
        match self {
            FittedModel::Btg(m) => m.write_summary_csv(out),
            FittedModel::Mle(m) => m.write_params_csv(out),
        }
    }

    pub fn as_btg(&self) -> Option<&BtgModel> {
        match self {
            FittedModel::Btg(m) => Some(m),
            FittedModel::Mle(_) => None,
        }
    }
}

fn level_value(pred: &Prediction, p: f64) -> f64 {
    pred.quantiles.iter().find(|q| q.0 == p).map(|q| q.1).unwrap_or(f64::NAN)
}

fn m_data(m: &MleModel) -> &crate::data::TrainingSet {
    m.training_set()
}

/// Writes `x1..xd,median,lo,hi` plus one `q<level>` column per extra level.
pub fn write_predictions_csv<W: Write>(out: W, points: &[Vec<f64>], preds: &[Prediction], levels: &[f64]) -> Result<()> {
    if points.len() != preds.len() {
        return Err(Error::LengthMismatch(preds.len(), points.len()));
    }
    let d = points.first().map_or(0, |p| p.len());
    let extra: Vec<f64> = levels.iter().copied().filter(|p| ![0.025, 0.5, 0.975].contains(p)).collect();
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = (1..=d).map(|j| format!("x{j}")).collect();
    header.extend(["median", "lo", "hi"].map(String::from));
    header.extend(extra.iter().map(|p| format!("q{p}")));
    w.write_record(&header)?;
    for (x, p) in points.iter().zip(preds) {
        let mut row: Vec<String> = x.iter().map(|v| v.to_string()).collect();
        row.extend([p.median, p.lower, p.upper].map(|v| v.to_string()));
        for &lvl in &extra {
            row.push(level_value(p, lvl).to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
