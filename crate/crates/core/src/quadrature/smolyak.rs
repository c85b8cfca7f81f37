//! Smolyak combination of nested Clenshaw-Curtis rules.
//!
//! Level `ℓ` in `d` dimensions uses the multi-indices `i ≥ 1` with
//! `ℓ ≤ |i| ≤ ℓ + d − 1` and is exact for polynomials of total degree `2ℓ − 1`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Number of points of the 1-D rule at a level: 1, 3, 5, 9, 17, ...
pub fn cc_points(level: usize) -> usize {
    if level <= 1 {
        1
    } else {
        (1usize << (level - 1)) + 1
    }
}

/// Clenshaw-Curtis weights on `[-1, 1]` for the nodes `−cos(πj/(m−1))`, j = 0..m.
pub fn cc_weights(m: usize) -> Vec<f64> {
    if m == 1 {
        return vec![2.0];
    }
    let n = m - 1;
    (0..m)
        .map(|j| {
            let theta = j as f64 * PI / n as f64;
            let mut s = 0.0;
            for k in 1..=(n / 2) {
                let b = if 2 * k == n { 1.0 } else { 2.0 };
                s += b * (2.0 * k as f64 * theta).cos() / (4.0 * (k * k) as f64 - 1.0);
            }
            let c = if j == 0 || j == n { 1.0 } else { 2.0 };
            c / n as f64 * (1.0 - s)
        })
        .collect()
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let mut r = 1.0;
    for i in 0..k {
        r *= (n - i) as f64 / (i + 1) as f64;
    }
    r
}

/// Multi-indices `i ∈ ℕ^d`, `iⱼ ≥ 1`, with `lo ≤ |i| ≤ hi`.
fn multi_indices(d: usize, lo: usize, hi: usize) -> Vec<Vec<usize>> {
    fn rec(d: usize, lo: usize, hi: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        let used: usize = prefix.iter().sum();
        let remaining = d - prefix.len();
        if remaining == 0 {
            if used >= lo && used <= hi {
                out.push(prefix.clone());
            }
            return;
        }
        // each later coordinate needs at least 1
        let max_here = hi.saturating_sub(used + remaining - 1);
        for v in 1..=max_here {
            prefix.push(v);
            rec(d, lo, hi, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(d, lo, hi, &mut Vec::with_capacity(d), &mut out);
    out
}

/// Nodes on `[-1, 1]^d` and signed weights (summing to `2^d`).
pub fn smolyak_cc(dim: usize, level: usize, cap: usize) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    if dim == 0 || level == 0 {
        return Err(Error::InvalidParams(format!("sparse grid needs dim >= 1 and level >= 1, got {dim}, {level}")));
    }
    if level > 30 {
        return Err(Error::ResourceLimit { cap });
    }
    let finest = cc_points(level);
    let q = level + dim - 1;
    let mut acc: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
    let weights_by_level: Vec<Vec<f64>> = (0..=level).map(|l| if l == 0 { vec![] } else { cc_weights(cc_points(l)) }).collect();

    for idx in multi_indices(dim, level, q) {
        let s: usize = idx.iter().sum();
        let coef = if (q - s).is_multiple_of(2) { 1.0 } else { -1.0 } * binomial(dim - 1, q - s);
        let sizes: Vec<usize> = idx.iter().map(|&l| cc_points(l)).collect();
        let mut counter = vec![0usize; dim];
        loop {
            let mut key = Vec::with_capacity(dim);
            let mut w = coef;
            for j in 0..dim {
                let m = sizes[j];
                let fine = if m == 1 { (finest - 1) / 2 } else { counter[j] * (finest - 1) / (m - 1) };
                key.push(fine as u32);
                w *= weights_by_level[idx[j]][counter[j]];
            }
            *acc.entry(key).or_insert(0.0) += w;
            if acc.len() > cap {
                return Err(Error::ResourceLimit { cap });
            }
            // odometer increment
            let mut j = 0;
            loop {
                if j == dim {
                    break;
                }
                counter[j] += 1;
                if counter[j] < sizes[j] {
                    break;
                }
                counter[j] = 0;
                j += 1;
            }
            if j == dim {
                break;
            }
        }
    }

    let coord = |t: u32| -> f64 {
        if finest == 1 {
            0.0
        } else {
            let x = -(PI * t as f64 / (finest - 1) as f64).cos();
            // exact zero at the midpoint
            if 2 * t as usize == finest - 1 {
                0.0
            } else {
                x
            }
        }
    };
    let mut nodes = Vec::with_capacity(acc.len());
    let mut weights = Vec::with_capacity(acc.len());
    for (key, w) in acc {
        // merged nodes can cancel exactly
        if w == 0.0 {
            continue;
        }
        nodes.push(key.iter().map(|&t| coord(t)).collect());
        weights.push(w);
    }
    Ok((nodes, weights))
}
