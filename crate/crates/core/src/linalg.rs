//! Dense SPD matrix algebra built around an upper-triangular Cholesky factor.
//!
//! Every solve goes through the stored factor with two triangular sweeps. The only
//! explicit inverse the crate forms is `K⁻¹` for leave-one-out work, and that one
//! is assembled from triangular solves as well.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Absolute tolerance on pivots, diagonal entries and variance factors.
pub const PIVOT_TOL: f64 = 1e-14;

/// Relative jitter added to the diagonal of kernel matrices before factorization.
pub const DEFAULT_JITTER_RELATIVE: f64 = 1e-8;

/// `R` with `RᵀR = A`, plus `log det A`.
#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyFactor {
    r: DMatrix<f64>,
    log_det: f64,
}

/// Jitter used for a kernel matrix: `1e-8 · mean(diag A)`.
pub fn default_jitter(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    if n == 0 {
        return 0.0;
    }
    DEFAULT_JITTER_RELATIVE * a.diagonal().sum() / n as f64
}

/// Factors `A + jitter·I`. Only the upper triangle of `a` is read.
pub fn cholesky(a: &DMatrix<f64>, jitter: f64) -> Result<CholeskyFactor> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::InvalidParams(format!("cholesky needs a square matrix, got {}x{}", n, a.ncols())));
    }
    let mut r = DMatrix::<f64>::zeros(n, n);
    let mut log_det = 0.0;
    for j in 0..n {
        for k in 0..j {
            let mut s = a[(k, j)];
            {
                let ck = r.column(k);
                let cj = r.column(j);
                for l in 0..k {
                    s -= ck[l] * cj[l];
                }
            }
            r[(k, j)] = s / r[(k, k)];
        }
        let mut d = a[(j, j)] + jitter;
        {
            let cj = r.column(j);
            for l in 0..j {
                d -= cj[l] * cj[l];
            }
        }
        if !(d > PIVOT_TOL) {
            return Err(Error::NotPositiveDefinite { column: j, pivot: d });
        }
        let rjj = d.sqrt();
        r[(j, j)] = rjj;
        log_det += 2.0 * rjj.ln();
    }
    Ok(CholeskyFactor { r, log_det })
}

impl CholeskyFactor {
    /// Wraps an existing upper-triangular factor with positive diagonal.
    pub fn from_upper(r: DMatrix<f64>) -> Result<Self> {
        let n = r.nrows();
        let mut log_det = 0.0;
        for j in 0..n {
            let d = r[(j, j)];
            if !(d > PIVOT_TOL) {
                return Err(Error::NotPositiveDefinite { column: j, pivot: d });
            }
            log_det += 2.0 * d.ln();
        }
        Ok(CholeskyFactor { r, log_det })
    }

    pub fn dim(&self) -> usize {
        self.r.nrows()
    }

    pub fn upper(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// Solves `Rᵀ z = b`.
    pub fn solve_lower(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.dim();
        let mut z = b.clone();
        for j in 0..n {
            let col = self.r.column(j);
            let mut s = z[j];
            for k in 0..j {
                s -= col[k] * z[k];
            }
            z[j] = s / col[j];
        }
        z
    }

    /// Solves `R x = z`.
    pub fn solve_upper(&self, z: &DVector<f64>) -> DVector<f64> {
        let n = self.dim();
        let mut x = z.clone();
        for j in (0..n).rev() {
            let col = self.r.column(j);
            let xj = x[j] / col[j];
            x[j] = xj;
            for k in 0..j {
                x[k] -= xj * col[k];
            }
        }
        x
    }

    /// Solves `(RᵀR) x = b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.solve_upper(&self.solve_lower(b))
    }

    /// Column-wise `Rᵀ Z = B`.
    pub fn solve_lower_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(b.nrows(), b.ncols());
        for c in 0..b.ncols() {
            let z = self.solve_lower(&b.column(c).into_owned());
            out.set_column(c, &z);
        }
        out
    }

    /// Column-wise `(RᵀR) X = B`.
    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(b.nrows(), b.ncols());
        for c in 0..b.ncols() {
            let x = self.solve(&b.column(c).into_owned());
            out.set_column(c, &x);
        }
        out
    }

    /// `R⁻¹`, upper triangular.
    pub fn upper_inverse(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut inv = DMatrix::zeros(n, n);
        for c in 0..n {
            // column c of R⁻¹ is supported on rows 0..=c
            let mut x = DVector::zeros(n);
            x[c] = 1.0;
            for j in (0..=c).rev() {
                let col = self.r.column(j);
                let xj = x[j] / col[j];
                x[j] = xj;
                for k in 0..j {
                    x[k] -= xj * col[k];
                }
            }
            inv.set_column(c, &x);
        }
        inv
    }

    /// `(RᵀR)⁻¹ = R⁻¹R⁻ᵀ`, assembled from triangular solves.
    pub fn inverse(&self) -> DMatrix<f64> {
        let rinv = self.upper_inverse();
        &rinv * rinv.transpose()
    }

    /// `RᵀR`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.r.transpose() * &self.r
    }
}

/// Rank-one downdate: returns the factor of `RᵀR − v vᵀ` in O(p²) using hyperbolic rotations.
pub fn chol_downdate(factor: &CholeskyFactor, v: &DVector<f64>) -> Result<CholeskyFactor> {
    let n = factor.dim();
    if v.len() != n {
        return Err(Error::InvalidParams(format!("downdate vector has length {}, factor is {}x{}", v.len(), n, n)));
    }
    let mut r = factor.r.clone();
    let mut x = v.clone();
    let mut log_det = 0.0;
    for k in 0..n {
        let rkk = r[(k, k)];
        let d = rkk * rkk - x[k] * x[k];
        if !(d > PIVOT_TOL * PIVOT_TOL) || !d.is_finite() {
            return Err(Error::DowndateBreaksPositivity { column: k });
        }
        let rnew = d.sqrt();
        let c = rnew / rkk;
        let s = x[k] / rkk;
        r[(k, k)] = rnew;
        log_det += 2.0 * rnew.ln();
        for i in (k + 1)..n {
            let rki = (r[(k, i)] - s * x[i]) / c;
            r[(k, i)] = rki;
            x[i] = c * x[i] - s * rki;
        }
    }
    Ok(CholeskyFactor { r, log_det })
}

/// `log det Σ⁽⁻ⁱ⁾ = log det Σ + log (eᵢᵀΣ⁻¹eᵢ)`.
pub fn principal_minor_logdet(log_det_full: f64, inv_diag_entry: f64) -> Result<f64> {
    if !(inv_diag_entry > 0.0) {
        return Err(Error::NonPositiveDiagonal(inv_diag_entry));
    }
    Ok(log_det_full + inv_diag_entry.ln())
}

/// Given `K c = y` and the i-th column of `K⁻¹`, returns `(K⁽⁻ⁱ⁾)⁻¹ y⁽⁻ⁱ⁾` in O(n).
pub fn abridged_solve(c: &DVector<f64>, k_inv_col_i: &DVector<f64>, i: usize) -> Result<DVector<f64>> {
    let n = c.len();
    if k_inv_col_i.len() != n || i >= n {
        return Err(Error::InvalidParams(format!("abridged solve index {} out of range for length {}", i, n)));
    }
    let pivot = k_inv_col_i[i];
    if pivot.abs() <= PIVOT_TOL {
        return Err(Error::ZeroPivot(i));
    }
    let ri = c[i] / pivot;
    Ok(DVector::from_iterator(n - 1, (0..n).filter(|&j| j != i).map(|j| c[j] - ri * k_inv_col_i[j])))
}

/// Removes entry `i` from a vector.
pub fn delete_entry(v: &DVector<f64>, i: usize) -> DVector<f64> {
    DVector::from_iterator(v.len() - 1, v.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, x)| *x))
}

/// Removes row `i` from a matrix.
pub fn delete_row(m: &DMatrix<f64>, i: usize) -> DMatrix<f64> {
    m.clone().remove_row(i)
}

/// Removes row and column `i` from a square matrix.
pub fn delete_row_col(m: &DMatrix<f64>, i: usize) -> DMatrix<f64> {
    m.clone().remove_row(i).remove_column(i)
}

/// Factor of `M_Xᵀ K_X⁻¹ M_X`.
pub fn covariate_gram_factor(k_chol: &CholeskyFactor, covariates: &DMatrix<f64>) -> Result<CholeskyFactor> {
    let g = k_chol.solve_lower_mat(covariates);
    let gram = g.transpose() * g;
    cholesky(&gram, 0.0).map_err(|_| Error::RankDeficient)
}

/// Final Schur complement `B(x)/[k(x,x)]` of the bordered matrix
///
/// ```text
/// | 0     M_Xᵀ   m(x)  |
/// | M_X   K_X    K_Xx  |
/// | m(x)ᵀ K_Xxᵀ  k_xx  |
/// ```
///
/// which equals `k_xx − K_Xxᵀu + hᵀ(M_XᵀK_X⁻¹M_X)⁻¹h` with `u = K_X⁻¹K_Xx`, `h = m(x) − M_Xᵀu`.
pub fn bordered_schur_variance(
    k_chol: &CholeskyFactor,
    covariates: &DMatrix<f64>,
    m_x: &DVector<f64>,
    k_cross: &DVector<f64>,
    k_xx: f64,
) -> Result<f64> {
    let rx = covariate_gram_factor(k_chol, covariates)?;
    bordered_schur_variance_cached(k_chol, &rx, covariates, m_x, k_cross, k_xx)
}

/// Same as [`bordered_schur_variance`] with the covariate Gram factor supplied.
pub fn bordered_schur_variance_cached(
    k_chol: &CholeskyFactor,
    gram_chol: &CholeskyFactor,
    covariates: &DMatrix<f64>,
    m_x: &DVector<f64>,
    k_cross: &DVector<f64>,
    k_xx: f64,
) -> Result<f64> {
    let u = k_chol.solve(k_cross);
    let h = m_x - covariates.transpose() * &u;
    let w = gram_chol.solve_lower(&h);
    let c = k_xx - k_cross.dot(&u) + w.dot(&w);
    if !(c > PIVOT_TOL) {
        return Err(Error::NonPositiveVariance(c));
    }
    Ok(c)
}


#[cfg(test)]
mod tests {
    use super::testutil::*;
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn frob(m: &DMatrix<f64>) -> f64 {
        m.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    #[test]
    fn identity_factor() {
        let f = cholesky(&DMatrix::identity(3, 3), 0.0).unwrap();
        assert_eq!(f.upper(), &DMatrix::identity(3, 3));
        assert_eq!(f.log_det(), 0.0);
    }

    #[test]
    fn diagonal_factor() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 9.0]));
        let f = cholesky(&a, 0.0).unwrap();
        assert_relative_eq!(f.upper()[(0, 0)], 2.0);
        assert_relative_eq!(f.upper()[(1, 1)], 3.0);
        assert_relative_eq!(f.log_det(), 36f64.ln(), epsilon = 1e-14);
    }

    #[test]
    fn random_spd_reconstructs() {
        let a = random_spd(7, 20, 1.0);
        let f = cholesky(&a, 0.0).unwrap();
        assert!(frob(&(f.reconstruct() - &a)) <= 1e-10 * frob(&a));
        for j in 0..20 {
            assert!(f.upper()[(j, j)] > 0.0);
            for i in (j + 1)..20 {
                assert_eq!(f.upper()[(i, j)], 0.0);
            }
        }
        let det = a.clone().determinant();
        assert_relative_eq!(f.log_det(), det.ln(), max_relative = 1e-10);
    }

    #[test]
    fn jitter_is_added() {
        let a = DMatrix::from_element(2, 2, 1.0);
        assert!(matches!(cholesky(&a, 0.0), Err(Error::NotPositiveDefinite { .. })));
        let f = cholesky(&a, 1e-6).unwrap();
        let expect = &a + DMatrix::identity(2, 2) * 1e-6;
        assert!(frob(&(f.reconstruct() - expect)) < 1e-14);
    }

    #[test]
    fn indefinite_rejected() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(cholesky(&a, 0.0), Err(Error::NotPositiveDefinite { column: 1, .. })));
    }

    #[test]
    fn solves_match_oracle() {
        let a = random_spd(3, 12, 2.0);
        let f = cholesky(&a, 0.0).unwrap();
        let b = DVector::from_fn(12, |i, _| (i as f64).sin());
        let x = f.solve(&b);
        let oracle = a.clone().lu().solve(&b).unwrap();
        assert!((x - oracle).amax() < 1e-10);
        let inv = f.inverse();
        let oracle_inv = a.try_inverse().unwrap();
        assert!((inv - oracle_inv).amax() < 1e-10);
    }

    #[test]
    fn downdate_diagonal() {
        let f = cholesky(&(DMatrix::identity(2, 2) * 2.0), 0.0).unwrap();
        let d = chol_downdate(&f, &DVector::from_vec(vec![1.0, 0.0])).unwrap();
        let expect = cholesky(&DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0])), 0.0).unwrap();
        assert!((d.upper() - expect.upper()).amax() < 1e-15);
    }

    #[test]
    fn downdate_zero_vector_is_noop() {
        let f = cholesky(&random_spd(1, 6, 1.0), 0.0).unwrap();
        let d = chol_downdate(&f, &DVector::zeros(6)).unwrap();
        assert_eq!(d.upper(), f.upper());
        assert_relative_eq!(d.log_det(), f.log_det(), epsilon = 1e-12);
    }

    #[test]
    fn downdate_matches_fresh_factorization() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..20 {
            let s = random_spd(100 + trial, 10, 5.0);
            let v = DVector::from_fn(10, |_, _| rng.random_range(-0.5..0.5));
            let f = cholesky(&s, 0.0).unwrap();
            let d = chol_downdate(&f, &v).unwrap();
            let target = &s - &v * v.transpose();
            let fresh = cholesky(&target, 0.0).unwrap();
            assert!((d.upper() - fresh.upper()).amax() < 1e-8);
            assert!(frob(&(d.reconstruct() - &target)) <= 1e-8 * frob(&target));
            assert_relative_eq!(d.log_det(), fresh.log_det(), max_relative = 1e-10);
        }
    }

    #[test]
    fn downdate_to_singular_fails() {
        let f = cholesky(&DMatrix::identity(2, 2), 0.0).unwrap();
        let r = chol_downdate(&f, &DVector::from_vec(vec![1.0, 0.0]));
        assert!(matches!(r, Err(Error::DowndateBreaksPositivity { column: 0 })));
    }

    #[test]
    fn minor_logdet_cases() {
        assert_eq!(principal_minor_logdet(0.0, 1.0).unwrap(), 0.0);
        let v = principal_minor_logdet(24f64.ln(), 0.5).unwrap();
        assert_relative_eq!(v, 12f64.ln(), epsilon = 1e-14);
        assert!(matches!(principal_minor_logdet(1.0, 0.0), Err(Error::NonPositiveDiagonal(_))));
        assert!(matches!(principal_minor_logdet(1.0, -2.0), Err(Error::NonPositiveDiagonal(_))));
    }

    #[test]
    fn minor_logdet_matches_deleted_determinant() {
        let a = random_spd(5, 15, 1.0);
        let f = cholesky(&a, 0.0).unwrap();
        let inv = f.inverse();
        for i in 0..15 {
            let got = principal_minor_logdet(f.log_det(), inv[(i, i)]).unwrap();
            let direct = delete_row_col(&a, i).determinant().ln();
            assert_relative_eq!(got, direct, max_relative = 1e-8);
        }
    }

    #[test]
    fn abridged_identity() {
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        let e2 = DVector::from_vec(vec![0.0, 0.0, 1.0, 0.0]);
        let out = abridged_solve(&y, &e2, 2).unwrap();
        assert_eq!(out.as_slice(), &[1.0, 2.0, 4.0]);
    }

    #[test]
    fn abridged_two_by_two() {
        let k = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let y = DVector::from_vec(vec![3.0, 3.0]);
        let f = cholesky(&k, 0.0).unwrap();
        let c = f.solve(&y);
        let inv = f.inverse();
        // i = 1 in one-based indexing
        let out = abridged_solve(&c, &inv.column(0).into_owned(), 0).unwrap();
        assert_relative_eq!(out[0], 1.5, epsilon = 1e-14);
    }

    #[test]
    fn abridged_matches_subsystem() {
        let k = random_spd(9, 12, 1.0);
        let y = DVector::from_fn(12, |i, _| (i as f64 * 0.7).cos());
        let f = cholesky(&k, 0.0).unwrap();
        let c = f.solve(&y);
        let inv = f.inverse();
        for i in 0..12 {
            let got = abridged_solve(&c, &inv.column(i).into_owned(), i).unwrap();
            let sub = delete_row_col(&k, i).lu().solve(&delete_entry(&y, i)).unwrap();
            assert!((&got - &sub).norm() <= 1e-8 * sub.norm());
        }
    }

    #[test]
    fn abridged_zero_pivot() {
        let c = DVector::from_vec(vec![1.0, 1.0]);
        let col = DVector::from_vec(vec![0.0, 1.0]);
        assert!(matches!(abridged_solve(&c, &col, 0), Err(Error::ZeroPivot(0))));
    }

    fn explicit_bordered(k: &DMatrix<f64>, m: &DMatrix<f64>, mx: &DVector<f64>, kx: &DVector<f64>, kxx: f64) -> f64 {
        let n = k.nrows();
        let p = m.ncols();
        let size = p + n + 1;
        let mut b = DMatrix::zeros(size, size);
        b.view_mut((0, p), (p, n)).copy_from(&m.transpose());
        b.view_mut((p, 0), (n, p)).copy_from(m);
        b.view_mut((p, p), (n, n)).copy_from(k);
        for j in 0..p {
            b[(j, size - 1)] = mx[j];
            b[(size - 1, j)] = mx[j];
        }
        for j in 0..n {
            b[(p + j, size - 1)] = kx[j];
            b[(size - 1, p + j)] = kx[j];
        }
        b[(size - 1, size - 1)] = kxx;
        let lead = b.view((0, 0), (p + n, p + n)).into_owned();
        let border = b.view((0, size - 1), (p + n, 1)).into_owned();
        let inv = lead.try_inverse().unwrap();
        kxx - (border.transpose() * inv * &border)[(0, 0)]
    }

    fn rbf(a: f64, b: f64, ls: f64) -> f64 {
        (-0.5 * (a - b).powi(2) / (ls * ls)).exp()
    }

    #[test]
    fn bordered_matches_explicit_schur() {
        let xs = [-1.0, -0.3, 0.2, 0.9, 1.5];
        let k = DMatrix::from_fn(5, 5, |i, j| rbf(xs[i], xs[j], 0.7) + if i == j { 0.01 } else { 0.0 });
        let m = DMatrix::from_fn(5, 2, |i, j| if j == 0 { 1.0 } else { xs[i] });
        let x = 0.45;
        let kx = DVector::from_fn(5, |i, _| rbf(xs[i], x, 0.7));
        let mx = DVector::from_vec(vec![1.0, x]);
        let f = cholesky(&k, 0.0).unwrap();
        let got = bordered_schur_variance(&f, &m, &mx, &kx, 1.0).unwrap();
        let want = explicit_bordered(&k, &m, &mx, &kx, 1.0);
        assert_relative_eq!(got, want, max_relative = 1e-9);
    }

    #[test]
    fn bordered_far_point_limit() {
        let a = random_spd(21, 6, 1.0);
        let m = DMatrix::from_element(6, 1, 1.0);
        let f = cholesky(&a, 0.0).unwrap();
        let got = bordered_schur_variance(&f, &m, &DVector::from_element(1, 1.0), &DVector::zeros(6), 1.0).unwrap();
        let ones = DVector::from_element(6, 1.0);
        let want = 1.0 + 1.0 / ones.dot(&(a.clone().try_inverse().unwrap() * &ones));
        assert_relative_eq!(got, want, max_relative = 1e-10);
    }

    #[test]
    fn bordered_at_training_point_collapses() {
        let xs = [-1.0, 0.0, 0.8, 1.7];
        let k = DMatrix::from_fn(4, 4, |i, j| rbf(xs[i], xs[j], 0.5));
        let m = DMatrix::from_element(4, 1, 1.0);
        let jitter = 1e-10;
        let kj = &k + DMatrix::identity(4, 4) * jitter;
        let f = cholesky(&k, jitter).unwrap();
        let kx = k.column(2).into_owned();
        let got = bordered_schur_variance(&f, &m, &DVector::from_element(1, 1.0), &kx, 1.0).unwrap();
        let want = explicit_bordered(&kj, &m, &DVector::from_element(1, 1.0), &kx, 1.0);
        assert!(got < 1e-8);
        assert!((got - want).abs() < 1e-9);
    }

    #[test]
    fn bilinear_downdate_identity() {
        // X⁽⁻ⁱ⁾ᵀ Σ⁽⁻ⁱ⁾⁻¹ X⁽⁻ⁱ⁾ computed directly and via the rank-one formula
        let s = random_spd(31, 9, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let x = random_matrix(&mut rng, 9, 3);
        let inv = s.clone().try_inverse().unwrap();
        for i in 0..9 {
            let direct = {
                let xi = delete_row(&x, i);
                xi.transpose() * delete_row_col(&s, i).try_inverse().unwrap() * xi
            };
            let vi = inv.column(i).into_owned();
            let down = x.transpose() * (&inv - &vi * vi.transpose() / inv[(i, i)]) * &x;
            assert!((direct - down).amax() < 1e-9);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::{prop_assert, proptest, ProptestConfig};

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(100))]

            #[test]
            fn minor_logdet_relative(seed in 0u64..10_000, n in 2usize..=20) {
                let a = random_spd(seed, n, 0.5);
                let f = cholesky(&a, 0.0).unwrap();
                let inv = f.inverse();
                for i in 0..n {
                    let got = principal_minor_logdet(f.log_det(), inv[(i, i)]).unwrap().exp();
                    let direct = delete_row_col(&a, i).determinant();
                    prop_assert!(((got - direct) / direct).abs() <= 1e-8);
                }
            }

            #[test]
            fn downdate_reconstructs(seed in 0u64..10_000, n in 1usize..=15, scale in 0.0f64..0.9) {
                let s = random_spd(seed, n, 1.0);
                let f = cholesky(&s, 0.0).unwrap();
                // scale v so that S − vvᵀ stays SPD: vᵀS⁻¹v = scale² < 1
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
                let dir = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
                let z = f.solve_lower(&dir);
                let v = &dir * (scale / z.norm().max(1e-300));
                let d = chol_downdate(&f, &v).unwrap();
                let target = &s - &v * v.transpose();
                prop_assert!(frob(&(d.reconstruct() - &target)) <= 1e-8 * frob(&target));
            }

            #[test]
            fn abridged_relative(seed in 0u64..10_000, n in 2usize..=15) {
                let k = random_spd(seed, n, 1.0);
                let y = DVector::from_fn(n, |i, _| ((seed as f64) + i as f64).sin());
                let f = cholesky(&k, 0.0).unwrap();
                let c = f.solve(&y);
                let inv = f.inverse();
                for i in 0..n {
                    let got = abridged_solve(&c, &inv.column(i).into_owned(), i).unwrap();
                    let sub = delete_row_col(&k, i).lu().solve(&delete_entry(&y, i)).unwrap();
                    prop_assert!((&got - &sub).norm() <= 1e-8 * sub.norm().max(1e-300));
                }
            }
        }
    }
}
