//! Quadrature rules over a box of hyperparameters, and weight sparsification.

mod smolyak;
pub mod sobol;
mod sparsify;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use smolyak::{cc_points, cc_weights};
pub use sparsify::{sparsify, sparsify_signed, SignedCut, SparsifiedRule};

/// Default upper limit on the number of sparse-grid nodes.
pub const DEFAULT_NODE_CAP: usize = 100_000;

/// Axis-aligned box `[lowerⱼ, upperⱼ]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl HyperBox {
    pub fn new(bounds: &[(f64, f64)]) -> Result<Self> {
        for (j, &(l, u)) in bounds.iter().enumerate() {
            if !(l.is_finite() && u.is_finite() && l <= u) {
                return Err(Error::InvalidParams(format!("box dimension {j} has invalid bounds [{l}, {u}]")));
            }
        }
        Ok(HyperBox { lower: bounds.iter().map(|b| b.0).collect(), upper: bounds.iter().map(|b| b.1).collect() })
    }

    pub fn unit(dim: usize) -> Self {
        HyperBox { lower: vec![0.0; dim], upper: vec![1.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn volume(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).product()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (l, u))| *v >= *l && *v <= *u)
    }

    /// Maps a point of `[0, 1]^d` into the box.
    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter().zip(self.lower.iter().zip(&self.upper)).map(|(t, (l, h))| l + (h - l) * t).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleKind {
    #[serde(rename = "sparse")]
    SparseGrid,
    Qmc,
    Mc,
}

impl RuleKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sparse" | "sparse-grid" | "sparsegrid" => Ok(RuleKind::SparseGrid),
            "qmc" => Ok(RuleKind::Qmc),
            "mc" => Ok(RuleKind::Mc),
            other => Err(Error::Config(format!("unknown quadrature kind `{other}` (expected sparse, qmc or mc)"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RuleKind::SparseGrid => "sparse",
            RuleKind::Qmc => "qmc",
            RuleKind::Mc => "mc",
        }
    }
}

/// Nodes (one per row) and weights.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub nodes: DMatrix<f64>,
    pub weights: DVector<f64>,
    pub kind: RuleKind,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.nodes.ncols()
    }

    pub fn node(&self, i: usize) -> Vec<f64> {
        self.nodes.row(i).iter().copied().collect()
    }

    pub fn integrate(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        (0..self.len()).map(|i| self.weights[i] * f(&self.node(i))).sum()
    }

    /// A single-node rule with unit weight.
    pub fn single(node: &[f64]) -> Self {
        QuadratureRule { nodes: DMatrix::from_row_slice(1, node.len(), node), weights: DVector::from_element(1, 1.0), kind: RuleKind::Qmc }
    }

    /// Writes `x1..xD, weight` rows.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (1..=self.dim()).map(|j| format!("x{j}")).collect();
        header.push("weight".into());
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut row: Vec<String> = self.node(i).iter().map(|v| format!("{v:.17e}")).collect();
            row.push(format!("{:.17e}", self.weights[i]));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    fn from_rows(rows: Vec<Vec<f64>>, weights: Vec<f64>, dim: usize, kind: RuleKind) -> Self {
        let m = rows.len();
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        QuadratureRule { nodes: DMatrix::from_row_slice(m, dim, &flat), weights: DVector::from_vec(weights), kind }
    }
}

/// Smolyak sparse grid over `bounds`; weights sum to the box volume.
pub fn sparse_grid(dim: usize, level: usize, bounds: &HyperBox) -> Result<QuadratureRule> {
    sparse_grid_capped(dim, level, bounds, DEFAULT_NODE_CAP)
}

pub fn sparse_grid_capped(dim: usize, level: usize, bounds: &HyperBox, cap: usize) -> Result<QuadratureRule> {
    if bounds.dim() != dim {
        return Err(Error::InvalidParams(format!("box has dimension {}, rule asked for {dim}", bounds.dim())));
    }
    let (nodes, weights) = smolyak::smolyak_cc(dim, level, cap)?;
    let half: Vec<f64> = bounds.lower.iter().zip(&bounds.upper).map(|(l, u)| 0.5 * (u - l)).collect();
    let scale: f64 = half.iter().product();
    let rows = nodes.into_iter().map(|x| x.iter().enumerate().map(|(j, t)| bounds.lower[j] + half[j] * (t + 1.0)).collect()).collect();
    let weights = weights.into_iter().map(|w| w * scale).collect();
    Ok(QuadratureRule::from_rows(rows, weights, dim, RuleKind::SparseGrid))
}

/// `m` Sobol points (the origin skipped) with weights `1/m`.
pub fn qmc_rule(dim: usize, m: usize, bounds: &HyperBox) -> Result<QuadratureRule> {
    if m == 0 {
        return Err(Error::InvalidParams("qmc rule needs at least one node".into()));
    }
    if bounds.dim() != dim {
        return Err(Error::InvalidParams(format!("box has dimension {}, rule asked for {dim}", bounds.dim())));
    }
    let mut gen = sobol::Sobol::new(dim)?;
    gen.next();
    let rows = gen.take(m).map(|u| bounds.from_unit(&u)).collect();
    Ok(QuadratureRule::from_rows(rows, vec![1.0 / m as f64; m], dim, RuleKind::Qmc))
}

/// `m` uniform random points from a seeded ChaCha stream, weights `1/m`.
pub fn mc_rule(dim: usize, m: usize, bounds: &HyperBox, seed: u64) -> Result<QuadratureRule> {
    if m == 0 {
        return Err(Error::InvalidParams("mc rule needs at least one node".into()));
    }
    if bounds.dim() != dim {
        return Err(Error::InvalidParams(format!("box has dimension {}, rule asked for {dim}", bounds.dim())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..m)
        .map(|_| {
            let u: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
            bounds.from_unit(&u)
        })
        .collect();
    Ok(QuadratureRule::from_rows(rows, vec![1.0 / m as f64; m], dim, RuleKind::Mc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn one_dimensional_reduces_to_cc() {
        let b = HyperBox::new(&[(2.0, 5.0)]).unwrap();
        for level in 1..6 {
            let r = sparse_grid(1, level, &b).unwrap();
            assert_eq!(r.len(), cc_points(level));
            assert_relative_eq!(r.weights.sum(), 3.0, max_relative = 1e-12);
            let w = cc_weights(cc_points(level));
            for (a, e) in r.weights.iter().zip(&w) {
                assert_relative_eq!(*a, e * 1.5, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn linear_integrand_2d() {
        let r = sparse_grid(2, 3, &HyperBox::unit(2)).unwrap();
        assert!((r.integrate(|x| x[0] + x[1]) - 1.0).abs() < 1e-12);
        assert!(r.nodes.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn some_weights_negative() {
        let r = sparse_grid(2, 3, &HyperBox::unit(2)).unwrap();
        assert!(r.weights.iter().any(|w| *w < 0.0));
        assert_relative_eq!(r.weights.sum(), 1.0, max_relative = 1e-10);
    }

    #[test]
    fn cubic_in_three_dims() {
        // ∫_{[-1,2]×[0,1]×[0.5,1.5]} (1 + 2x − y² + 3xyz + z³ − x²z)
        let b = HyperBox::new(&[(-1.0, 2.0), (0.0, 1.0), (0.5, 1.5)]).unwrap();
        let r = sparse_grid(3, 4, &b).unwrap();
        let got = r.integrate(|v| {
            let (x, y, z) = (v[0], v[1], v[2]);
            1.0 + 2.0 * x - y * y + 3.0 * x * y * z + z.powi(3) - x * x * z
        });
        // oracle: separable monomial integrals
        let ix = |k: i32| (2f64.powi(k + 1) - (-1f64).powi(k + 1)) / (k + 1) as f64;
        let iy = |k: i32| 1.0 / (k + 1) as f64;
        let iz = |k: i32| (1.5f64.powi(k + 1) - 0.5f64.powi(k + 1)) / (k + 1) as f64;
        let want = ix(0) * iy(0) * iz(0) + 2.0 * ix(1) * iy(0) * iz(0) - ix(0) * iy(2) * iz(0)
            + 3.0 * ix(1) * iy(1) * iz(1)
            + ix(0) * iy(0) * iz(3)
            - ix(2) * iy(0) * iz(1);
        assert!((got - want).abs() <= 1e-10 * want.abs());
    }

    #[test]
    fn qmc_single_node_and_product() {
        let r = qmc_rule(3, 1, &HyperBox::unit(3)).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r.weights[0], 1.0);
        let r = qmc_rule(2, 1024, &HyperBox::unit(2)).unwrap();
        assert!((r.integrate(|x| x[0] * x[1]) - 0.25).abs() < 5e-3);
        assert!(r.weights.iter().all(|w| *w == 1.0 / 1024.0));
    }

    #[test]
    fn mc_is_reproducible() {
        let b = HyperBox::new(&[(-1.0, 1.0), (0.0, 3.0)]).unwrap();
        let a = mc_rule(2, 50, &b, 9).unwrap();
        let c = mc_rule(2, 50, &b, 9).unwrap();
        assert_eq!(a, c);
        assert_ne!(a, mc_rule(2, 50, &b, 10).unwrap());
        for i in 0..a.len() {
            assert!(b.contains(&a.node(i)));
        }
    }

    #[test]
    fn csv_export_has_header_and_rows() {
        let r = sparse_grid(2, 2, &HyperBox::unit(2)).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "x1,x2,weight");
        assert_eq!(lines.len(), 1 + r.len());
    }
}
