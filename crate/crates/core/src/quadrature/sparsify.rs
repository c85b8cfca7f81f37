//! Dropping small mixture weights with a certified error budget.
//!
//! Positive weights summing to one: keep the `k` largest until their mass `c`
//! reaches `1 − ε`; the rescaled truncation `F_k = (1/c) Σ_{i≤k} wᵢfᵢ` is within
//! `2(1 − c) ≤ 2ε` of the full mixture cdf everywhere.
//!
//! Signed weights: keep a prefix (by magnitude) and record the positive and
//! negative mass of the remainder, `ε₊ ≥ 0 ≥ ε₋`. The remainder cdf term is
//! then confined to `[ε₋, ε₊]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsifiedRule {
    /// Kept indices, ordered by decreasing weight magnitude.
    pub kept_indices: Vec<usize>,
    /// Sum of the kept (signed) weights.
    pub renorm_constant: f64,
    /// Requested threshold.
    pub eps: f64,
    /// Sum of the negative parts of the dropped weights (≤ 0).
    pub eps_minus: f64,
    /// Sum of the positive parts of the dropped weights (≥ 0).
    pub eps_plus: f64,
    pub signed: bool,
}

impl SparsifiedRule {
    pub fn kept(&self) -> usize {
        self.kept_indices.len()
    }

    /// Total magnitude of the dropped weights.
    pub fn dropped_mass(&self) -> f64 {
        self.eps_plus - self.eps_minus
    }

    /// Uniform bound on `|F − F_k|` for the rescaled positive-weight truncation.
    pub fn cdf_error_bound(&self) -> f64 {
        2.0 * self.dropped_mass()
    }

    /// Keeps everything.
    pub fn keep_all(weights: &[f64]) -> Self {
        let signed = weights.iter().any(|w| *w < 0.0);
        SparsifiedRule {
            kept_indices: magnitude_order(weights),
            renorm_constant: weights.iter().sum(),
            eps: 0.0,
            eps_minus: 0.0,
            eps_plus: 0.0,
            signed,
        }
    }
}

fn magnitude_order(weights: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..weights.len()).collect();
    idx.sort_by(|&a, &b| weights[b].abs().total_cmp(&weights[a].abs()).then(a.cmp(&b)));
    idx
}

/// Round-off slack when comparing cumulative sums against `1 − ε`.
const CUMSUM_SLACK: f64 = 1e-12;

/// Positive-weight case: minimal `k` with `Σ_{i≤k} w_(i) ≥ 1 − ε` after sorting by magnitude.
pub fn sparsify(weights: &[f64], eps: f64) -> Result<SparsifiedRule> {
    if !(eps < 1.0) {
        return Err(Error::EpsilonTooLarge(eps));
    }
    if !(eps >= 0.0) {
        return Err(Error::InvalidParams(format!("sparsification threshold must be >= 0, got {eps}")));
    }
    if weights.is_empty() {
        return Err(Error::InvalidParams("no weights to sparsify".into()));
    }
    if let Some(w) = weights.iter().find(|w| !(**w >= 0.0)) {
        return Err(Error::InvalidParams(format!("positive-weight sparsification got weight {w}")));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-10 {
        return Err(Error::NotNormalized(total));
    }
    let order = magnitude_order(weights);
    let target = 1.0 - eps - CUMSUM_SLACK;
    let mut c = 0.0;
    let mut k = 0;
    for &i in &order {
        c += weights[i];
        k += 1;
        if c >= target {
            break;
        }
    }
    let dropped: f64 = order[k..].iter().map(|&i| weights[i]).sum();
    Ok(SparsifiedRule { kept_indices: order[..k].to_vec(), renorm_constant: c, eps, eps_minus: 0.0, eps_plus: dropped, signed: false })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SignedCut {
    /// Keep exactly this many weights.
    Count(usize),
    /// Keep weights until their magnitudes reach this fraction of `Σ|wᵢ|`.
    MassFraction(f64),
}

/// Signed case: keep a magnitude-ordered prefix and report `(ε₋, ε₊)` of the remainder.
pub fn sparsify_signed(weights: &[f64], cut: SignedCut) -> Result<SparsifiedRule> {
    if weights.is_empty() {
        return Err(Error::InvalidParams("no weights to sparsify".into()));
    }
    let order = magnitude_order(weights);
    let (k, eps) = match cut {
        SignedCut::Count(k) => {
            if k == 0 || k > weights.len() {
                return Err(Error::InvalidParams(format!("cut count must be in 1..={}, got {k}", weights.len())));
            }
            (k, 0.0)
        }
        SignedCut::MassFraction(f) => {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::InvalidParams(format!("mass fraction must be in (0, 1], got {f}")));
            }
            let total: f64 = weights.iter().map(|w| w.abs()).sum();
            let target = f * total * (1.0 - CUMSUM_SLACK);
            let mut acc = 0.0;
            let mut k = 0;
            for &i in &order {
                acc += weights[i].abs();
                k += 1;
                if acc >= target {
                    break;
                }
            }
            (k, 1.0 - f)
        }
    };
    let kept = order[..k].to_vec();
    let rest = &order[k..];
    let eps_minus = rest.iter().map(|&i| weights[i].min(0.0)).sum();
    let eps_plus = rest.iter().map(|&i| weights[i].max(0.0)).sum();
    Ok(SparsifiedRule {
        renorm_constant: kept.iter().map(|&i| weights[i]).sum(),
        kept_indices: kept,
        eps,
        eps_minus,
        eps_plus,
        signed: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{sparse_grid, HyperBox};

    #[test]
    fn small_example() {
        let s = sparsify(&[0.7, 0.2, 0.1], 0.15).unwrap();
        assert_eq!(s.kept(), 2);
        assert_eq!(s.kept_indices, vec![0, 1]);
        assert!((s.renorm_constant - 0.9).abs() < 1e-15);
        assert!((s.dropped_mass() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn ordering_by_magnitude() {
        let s = sparsify(&[0.1, 0.7, 0.2], 0.15).unwrap();
        assert_eq!(s.kept_indices, vec![1, 2]);
    }

    #[test]
    fn nothing_droppable_at_zero_eps() {
        let m = 37;
        let w = vec![1.0 / m as f64; m];
        let s = sparsify(&w, 0.0).unwrap();
        assert_eq!(s.kept(), m);
        assert!((s.renorm_constant - 1.0).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        assert!(matches!(sparsify(&[0.5, 0.5], 1.0), Err(Error::EpsilonTooLarge(_))));
        assert!(matches!(sparsify(&[0.5, 0.4], 0.1), Err(Error::NotNormalized(_))));
    }

    #[test]
    fn signed_remainder_sums() {
        let r = sparse_grid(3, 4, &HyperBox::unit(3)).unwrap();
        let w: Vec<f64> = r.weights.iter().copied().collect();
        assert!(w.iter().any(|x| *x < 0.0));
        let cut = w.len() / 4;
        let s = sparsify_signed(&w, SignedCut::Count(cut)).unwrap();
        // brute force: everything not kept
        let mut kept = vec![false; w.len()];
        for &i in &s.kept_indices {
            kept[i] = true;
        }
        let mut neg = 0.0;
        let mut pos = 0.0;
        for (i, &x) in w.iter().enumerate() {
            if !kept[i] {
                if x < 0.0 {
                    neg += x;
                } else {
                    pos += x;
                }
            }
        }
        assert_eq!(s.kept(), cut);
        assert!((s.eps_minus - neg).abs() < 1e-15);
        assert!((s.eps_plus - pos).abs() < 1e-15);
        assert!(s.eps_minus <= 0.0 && s.eps_plus >= 0.0);
    }

    #[test]
    fn signed_mass_fraction() {
        let w = [0.6, -0.3, 0.5, 0.1, 0.1];
        let s = sparsify_signed(&w, SignedCut::MassFraction(0.9)).unwrap();
        // |w| total 1.6; 0.6 + 0.5 + 0.3 = 1.4 ≥ 1.44? no, needs a fourth
        assert_eq!(s.kept_indices, vec![0, 2, 1, 3]);
        assert!((s.eps_plus - 0.1).abs() < 1e-15);
        assert_eq!(s.eps_minus, 0.0);
    }
}
