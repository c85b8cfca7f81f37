//! Synthetic benchmark problems.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::quadrature::sobol::Sobol;

/// Added to six-hump camel values so that labels on the sampling box are positive.
pub const CAMEL_SHIFT: f64 = 2.0316;

pub const INT_SINE_NOISE_SD: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Synthetic {
    IntSine,
    SixHumpCamel,
}

impl Synthetic {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['_', '-'], "").as_str() {
            "intsine" => Ok(Synthetic::IntSine),
            "sixhumpcamel" | "camel" => Ok(Synthetic::SixHumpCamel),
            _ => Err(Error::Config(format!("unknown dataset `{s}` (expected int-sine or six-hump-camel)"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Synthetic::IntSine => "int-sine",
            Synthetic::SixHumpCamel => "six-hump-camel",
        }
    }

    /// Default train/test sizes.
    pub fn default_sizes(self) -> (usize, usize) {
        match self {
            Synthetic::IntSine => (51, 400),
            Synthetic::SixHumpCamel => (50, 400),
        }
    }

    pub fn generate(self, seed: u64) -> Split {
        let (n, m) = self.default_sizes();
        self.generate_sized(n, m, seed)
    }

    pub fn generate_sized(self, train: usize, test: usize, seed: u64) -> Split {
        match self {
            Synthetic::IntSine => int_sine(train, test, seed),
            Synthetic::SixHumpCamel => six_hump_camel(train, test, seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Dataset,
    /// Noise-free truths.
    pub test: Dataset,
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

pub fn int_sine_truth(x: f64) -> f64 {
    x.sin().round()
}

fn int_sine(train: usize, test: usize, seed: u64) -> Split {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, INT_SINE_NOISE_SD).expect("valid sd");
    let xs = linspace(-PI, PI, train);
    let ys = xs.iter().map(|x| int_sine_truth(*x) + noise.sample(&mut rng)).collect();
    let ts = linspace(-PI, PI, test);
    let truths = ts.iter().map(|x| int_sine_truth(*x)).collect();
    let rows = |v: &[f64]| v.iter().map(|x| vec![*x]).collect::<Vec<_>>();
    Split {
        train: Dataset::from_rows(&rows(&xs), ys).expect("consistent shapes"),
        test: Dataset::from_rows(&rows(&ts), truths).expect("consistent shapes"),
    }
}

/// Unshifted six-hump camel function.
pub fn six_hump_camel_raw(x: f64, y: f64) -> f64 {
    (4.0 - 2.1 * x * x + x.powi(4) / 3.0) * x * x + x * y + (-4.0 + 4.0 * y * y) * y * y
}

pub fn six_hump_camel_truth(p: &[f64]) -> f64 {
    six_hump_camel_raw(p[0], p[1]) + CAMEL_SHIFT
}

const CAMEL_BOX: [(f64, f64); 2] = [(-1.0, 1.0), (-2.0, 2.0)];

fn six_hump_camel(train: usize, test: usize, seed: u64) -> Split {
    let map = |u: &[f64]| -> Vec<f64> { u.iter().zip(CAMEL_BOX).map(|(t, (l, h))| l + (h - l) * t).collect() };
    let mut gen = Sobol::new(2).expect("dimension 2 is supported");
    gen.next();
    let xs: Vec<Vec<f64>> = gen.take(train).map(|u| map(&u)).collect();
    let ys = xs.iter().map(|p| six_hump_camel_truth(p)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ts: Vec<Vec<f64>> = (0..test).map(|_| map(&[rng.random::<f64>(), rng.random::<f64>()])).collect();
    let truths = ts.iter().map(|p| six_hump_camel_truth(p)).collect();
    Split {
        train: Dataset::from_rows(&xs, ys).expect("consistent shapes"),
        test: Dataset::from_rows(&ts, truths).expect("consistent shapes"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn int_sine_counts_and_grid() {
        let s = Synthetic::IntSine.generate(3);
        assert_eq!((s.train.len(), s.test.len()), (51, 400));
        assert_eq!(s.train.x[(0, 0)], -PI);
        assert!((s.train.x[(50, 0)] - PI).abs() < 1e-15);
        assert!((s.train.x[(25, 0)]).abs() < 1e-15);
        for i in 0..51 {
            let r = s.train.y[i] - int_sine_truth(s.train.x[(i, 0)]);
            assert!(r.abs() < 6.0 * INT_SINE_NOISE_SD);
        }
        assert!(s.test.y.iter().all(|v| [-1.0, 0.0, 1.0].contains(v)));
    }

    #[test]
    fn deterministic_and_seed_dependent() {
        assert_eq!(Synthetic::IntSine.generate(9), Synthetic::IntSine.generate(9));
        assert_ne!(Synthetic::IntSine.generate(9).train.y, Synthetic::IntSine.generate(10).train.y);
        assert_eq!(Synthetic::SixHumpCamel.generate(9), Synthetic::SixHumpCamel.generate(9));
    }

    #[test]
    fn camel_values() {
        assert_eq!(six_hump_camel_raw(0.0, 0.0), 0.0);
        // global minima of the unshifted function
        assert!((six_hump_camel_raw(0.0898, -0.7126) + 1.0316).abs() < 1e-4);
        let s = Synthetic::SixHumpCamel.generate(1);
        assert_eq!((s.train.len(), s.test.len()), (50, 400));
        assert!(s.train.y.iter().chain(&s.test.y).all(|v| *v > 0.0));
        for i in 0..s.test.len() {
            assert!(s.test.x[(i, 0)].abs() <= 1.0 && s.test.x[(i, 1)].abs() <= 2.0);
        }
    }

    #[test]
    fn parse_names() {
        assert_eq!(Synthetic::parse("IntSine").unwrap(), Synthetic::IntSine);
        assert_eq!(Synthetic::parse("six-hump-camel").unwrap(), Synthetic::SixHumpCamel);
        assert!(Synthetic::parse("wine").is_err());
    }
}
