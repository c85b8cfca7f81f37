//! Brent's bracketed root finder (inverse quadratic interpolation, secant, bisection).

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BrentOutcome {
    pub root: f64,
    pub f_root: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Finds a zero of `f` in `[a, b]` given `f(a)` and `f(b)` of opposite sign (or zero).
///
/// Stops when `|f(x)| ≤ ftol` or the bracket half-width drops below `xtol`
/// (plus a relative machine-precision term).
pub fn brent(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, fa: f64, fb: f64, xtol: f64, ftol: f64, max_iter: usize) -> BrentOutcome {
    let (mut a, mut b, mut fa, mut fb) = (a, b, fa, fb);
    if fa.abs() <= ftol {
        return BrentOutcome { root: a, f_root: fa, iterations: 0, converged: true };
    }
    if fb.abs() <= ftol {
        return BrentOutcome { root: b, f_root: fb, iterations: 0, converged: true };
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for iter in 1..=max_iter {
        if (fb > 0.0) == (fc > 0.0) {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * xtol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb.abs() <= ftol {
            return BrentOutcome { root: b, f_root: fb, iterations: iter - 1, converged: true };
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        if d.abs() > tol1 {
            b += d;
        } else {
            b += tol1.copysign(xm);
        }
        fb = f(b);
    }
    BrentOutcome { root: b, f_root: fb, iterations: max_iter, converged: false }
}
