//! Local unconstrained minimization: BFGS with central-difference gradients.

#[derive(Debug, Clone, PartialEq)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    /// Objective after every accepted step, starting with the initial value.
    pub trace: Vec<f64>,
}

/// Objective in, parameters out.
pub trait LocalOptimizer: Send + Sync {
    fn minimize(&self, f: &dyn Fn(&[f64]) -> f64, x0: &[f64]) -> OptimResult;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bfgs {
    pub max_iter: usize,
    pub grad_tol: f64,
    pub f_tol: f64,
    pub fd_step: f64,
}

impl Default for Bfgs {
    fn default() -> Self {
        Bfgs { max_iter: 200, grad_tol: 1e-6, f_tol: 1e-10, fd_step: 1e-6 }
    }
}

fn gradient(f: &dyn Fn(&[f64]) -> f64, x: &[f64], fx: f64, h: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|j| {
            let step = h * x[j].abs().max(1.0);
            xp[j] = x[j] + step;
            let up = f(&xp);
            xp[j] = x[j] - step;
            let down = f(&xp);
            xp[j] = x[j];
            if up.is_finite() && down.is_finite() {
                (up - down) / (2.0 * step)
            } else if up.is_finite() {
                (up - fx) / step
            } else if down.is_finite() {
                (fx - down) / step
            } else {
                0.0
            }
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl LocalOptimizer for Bfgs {
    fn minimize(&self, f: &dyn Fn(&[f64]) -> f64, x0: &[f64]) -> OptimResult {
        let n = x0.len();
        let mut x = x0.to_vec();
        let mut fx = f(&x);
        let mut trace = vec![fx];
        if !fx.is_finite() || n == 0 {
            return OptimResult { x, value: fx, iterations: 0, trace };
        }
        let mut g = gradient(f, &x, fx, self.fd_step);
        // inverse Hessian approximation, row-major
        let mut h = vec![0.0; n * n];
        for i in 0..n {
            h[i * n + i] = 1.0;
        }
        let mut iterations = 0;
        for it in 1..=self.max_iter {
            iterations = it;
            if g.iter().map(|v| v.abs()).fold(0.0, f64::max) < self.grad_tol {
                break;
            }
            let mut d: Vec<f64> = (0..n).map(|i| -dot(&h[i * n..(i + 1) * n], &g)).collect();
            let mut slope = dot(&d, &g);
            if !(slope < 0.0) {
                // not a descent direction: reset to steepest descent
                for i in 0..n {
                    for j in 0..n {
                        h[i * n + j] = if i == j { 1.0 } else { 0.0 };
                    }
                }
                d = g.iter().map(|v| -v).collect();
                slope = dot(&d, &g);
            }
            // backtracking Armijo line search
            let mut t = 1.0;
            let mut accepted = None;
            for _ in 0..50 {
                let xn: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
                let fxn = f(&xn);
                if fxn.is_finite() && fxn <= fx + 1e-4 * t * slope {
                    accepted = Some((xn, fxn));
                    break;
                }
                t *= 0.5;
            }
            let Some((xn, fxn)) = accepted else { break };
            let gn = gradient(f, &xn, fxn, self.fd_step);
            let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
            let sy = dot(&s, &y);
            let improvement = fx - fxn;
            x = xn;
            fx = fxn;
            g = gn;
            trace.push(fx);
            if sy > 1e-12 {
                let hy: Vec<f64> = (0..n).map(|i| dot(&h[i * n..(i + 1) * n], &y)).collect();
                let yhy = dot(&y, &hy);
                let rho = 1.0 / sy;
                for i in 0..n {
                    for j in 0..n {
                        h[i * n + j] += (1.0 + yhy * rho) * rho * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
                    }
                }
            }
            if improvement.abs() <= self.f_tol * fx.abs().max(1.0) {
                break;
            }
        }
        OptimResult { x, value: fx, iterations, trace }
    }
}
