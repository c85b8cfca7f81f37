//! Mixtures of transformed Student-t distributions: density, cdf, quantile brackets
//! and bracketed quantile solving.

pub mod brent;
pub mod student_t;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transforms::Transform;

pub use student_t::{t_cdf, t_inv, t_pdf};

/// One summand: `g(Y) ~ m + s·T_ν`.
#[derive(Debug, Clone, PartialEq)]
pub struct TMixtureComponent {
    pub dof: f64,
    pub location: f64,
    pub scale: f64,
    pub transform: Arc<Transform>,
}

impl TMixtureComponent {
    pub fn new(dof: f64, location: f64, scale: f64, transform: Arc<Transform>) -> Result<Self> {
        if !(dof >= 1.0) {
            return Err(Error::InvalidParams(format!("degrees of freedom must be >= 1, got {dof}")));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::NonPositiveVariance(scale));
        }
        if !location.is_finite() {
            return Err(Error::InvalidParams(format!("location must be finite, got {location}")));
        }
        Ok(TMixtureComponent { dof, location, scale, transform })
    }

    /// Untransformed Student-t component.
    pub fn plain(dof: f64, location: f64, scale: f64) -> Result<Self> {
        Self::new(dof, location, scale, Arc::new(Transform::identity()))
    }

    fn standardize(&self, z: f64) -> f64 {
        (z - self.location) / self.scale
    }

    pub fn cdf(&self, y: f64) -> f64 {
        t_cdf(self.standardize(self.transform.forward_ext(y)), self.dof)
    }

    pub fn pdf(&self, y: f64) -> Result<f64> {
        let z = self.transform.forward(y)?;
        let jac = self.transform.derivative(y)?;
        Ok(t_pdf(self.standardize(z), self.dof) * jac / self.scale)
    }

    /// `g⁻¹(m + s·t_inv(p))`, clamped to the transform's domain.
    pub fn quantile(&self, p: f64) -> f64 {
        self.quantile_at(t_inv(p, self.dof))
    }

    /// Quantile given the standard-t quantile `t` at the level.
    fn quantile_at(&self, t: f64) -> f64 {
        let z = if t.is_infinite() { t } else { self.location + self.scale * t };
        self.transform.inverse_ext(z)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorMixture {
    pub weights: Vec<f64>,
    pub components: Vec<TMixtureComponent>,
}

/// Tolerance on `Σ wᵢ = 1`.
pub const WEIGHT_SUM_TOL: f64 = 1e-10;

impl PosteriorMixture {
    pub fn new(weights: Vec<f64>, components: Vec<TMixtureComponent>) -> Result<Self> {
        if weights.len() != components.len() {
            return Err(Error::LengthMismatch(weights.len(), components.len()));
        }
        if weights.is_empty() {
            return Err(Error::InvalidParams("mixture needs at least one component".into()));
        }
        let total: f64 = weights.iter().sum();
        if !((total - 1.0).abs() <= WEIGHT_SUM_TOL) {
            return Err(Error::NotNormalized(total));
        }
        Ok(PosteriorMixture { weights, components })
    }

    /// Rescales `weights` to sum to one first.
    pub fn normalized(weights: Vec<f64>, components: Vec<TMixtureComponent>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total.is_finite() && total != 0.0) {
            return Err(Error::NotNormalized(total));
        }
        Self::new(weights.into_iter().map(|w| w / total).collect(), components)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn is_signed(&self) -> bool {
        self.weights.iter().any(|w| *w < 0.0)
    }

    /// Magnitude of the negative weights, `ν = Σ max(−wᵢ, 0)`.
    pub fn negative_mass(&self) -> f64 {
        self.weights.iter().map(|w| (-w).max(0.0)).sum()
    }

    /// Hull of the component domains.
    pub fn support(&self) -> (f64, f64) {
        self.components.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| {
            let (a, b) = c.transform.domain();
            (lo.min(a), hi.max(b))
        })
    }

    pub fn pdf(&self, y: f64) -> Result<f64> {
        let mut acc = 0.0;
        for (w, c) in self.weights.iter().zip(&self.components) {
            acc += w * c.pdf(y)?;
        }
        Ok(acc)
    }

    pub fn cdf(&self, y: f64) -> f64 {
        self.weights.iter().zip(&self.components).map(|(w, c)| w * c.cdf(y)).sum()
    }

    fn component_quantile_hull(&self, p: f64) -> (f64, f64) {
        // posterior components usually share one dof, so t_inv is reused
        let mut cache: Vec<(f64, f64)> = Vec::with_capacity(2);
        self.components.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| {
            let t = match cache.iter().find(|(d, _)| *d == c.dof) {
                Some(&(_, t)) => t,
                None => {
                    let t = t_inv(p, c.dof);
                    cache.push((c.dof, t));
                    t
                }
            };
            let q = c.quantile_at(t);
            (lo.min(q), hi.max(q))
        })
    }
}

pub fn mixture_pdf(mix: &PosteriorMixture, y: f64) -> Result<f64> {
    mix.pdf(y)
}

pub fn mixture_cdf(mix: &PosteriorMixture, y: f64) -> f64 {
    mix.cdf(y)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BoundMethod {
    /// No analytic bracket; expand outward from a fixed starting point.
    None,
    #[default]
    ConvexHull,
    SingularWeight,
}

impl BoundMethod {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "none" => Ok(BoundMethod::None),
            "convex-hull" | "convexhull" | "hull" => Ok(BoundMethod::ConvexHull),
            "singular-weight" | "singularweight" | "singular" => Ok(BoundMethod::SingularWeight),
            other => Err(Error::Config(format!("unknown quantile bound method '{other}'"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BoundMethod::None => "none",
            BoundMethod::ConvexHull => "convex-hull",
            BoundMethod::SingularWeight => "singular-weight",
        }
    }
}

fn check_level(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidLevel(p))
    }
}

/// Bracket `[lo, hi]` containing `F⁻¹(p)` for a positive-weight mixture.
///
/// For signed mixtures both methods use the hull of component quantiles at the
/// shifted levels `p/(1+ν)` and `(p+ν)/(1+ν)`, where `ν` is the negative mass.
pub fn quantile_bounds(mix: &PosteriorMixture, p: f64, method: BoundMethod) -> Result<(f64, f64)> {
    check_level(p)?;
    if mix.is_signed() {
        return Ok(signed_bounds(mix, p));
    }
    let hull = mix.component_quantile_hull(p);
    match method {
        BoundMethod::ConvexHull | BoundMethod::None => Ok(hull),
        BoundMethod::SingularWeight => {
            let mut lo = f64::NEG_INFINITY;
            let mut hi = f64::INFINITY;
            let mut have_lo = false;
            let mut have_hi = false;
            for (w, c) in mix.weights.iter().zip(&mix.components) {
                let wbar = 1.0 - w;
                if p - wbar >= 0.0 {
                    lo = lo.max(c.quantile(p - wbar));
                    have_lo = true;
                }
                if p + wbar <= 1.0 {
                    hi = hi.min(c.quantile(p + wbar));
                    have_hi = true;
                }
            }
            // an infinite side carries no information, so use the hull there
            if !have_lo || !lo.is_finite() {
                lo = hull.0;
            }
            if !have_hi || !hi.is_finite() {
                hi = hull.1;
            }
            Ok((lo, hi))
        }
    }
}

fn signed_bounds(mix: &PosteriorMixture, p: f64) -> (f64, f64) {
    let nu = mix.negative_mass();
    let lo = mix.component_quantile_hull(p / (1.0 + nu)).0;
    let hi = mix.component_quantile_hull((p + nu) / (1.0 + nu)).1;
    (lo, hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileOptions {
    pub bound: BoundMethod,
    pub xtol: f64,
    pub ftol: f64,
    pub max_iter: usize,
}

impl Default for QuantileOptions {
    fn default() -> Self {
        QuantileOptions { bound: BoundMethod::ConvexHull, xtol: 1e-10, ftol: 1e-6, max_iter: 200 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantileSolution {
    pub value: f64,
    /// Number of mixture cdf evaluations, bracketing included.
    pub evaluations: usize,
    pub bracket: (f64, f64),
    pub converged: bool,
}

const MAX_EXPANSIONS: usize = 200;

/// Walks from `start` in direction `dir` (±1) until `g` changes sign relative to `g(start)`.
/// Inside a bounded domain the walk approaches the edge geometrically.
fn expand(g: &mut impl FnMut(f64) -> f64, start: f64, g_start: f64, dir: f64, edge: f64, level: f64) -> Result<(f64, f64)> {
    let mut step = 1.0_f64.max(start.abs() * 0.5);
    let mut x = start;
    for _ in 0..MAX_EXPANSIONS {
        let mut next = x + dir * step;
        if edge.is_finite() && (next - edge) * dir >= 0.0 {
            next = 0.5 * (x + edge);
        }
        if next == x {
            break;
        }
        let gn = g(next);
        if (gn > 0.0) != (g_start > 0.0) || gn == 0.0 {
            return Ok((next, gn));
        }
        x = next;
        step *= 2.0;
    }
    Err(Error::BracketFailure { level })
}

/// Generalized inverse `inf{y : F(y) ≥ p}` solved with Brent's method inside a bracket.
pub fn quantile(mix: &PosteriorMixture, p: f64, opts: &QuantileOptions) -> Result<QuantileSolution> {
    check_level(p)?;
    let mut evaluations = 0usize;
    let mut g = |y: f64| {
        evaluations += 1;
        mix.cdf(y) - p
    };
    let (dom_lo, dom_hi) = mix.support();

    let (a, fa, b, fb) = match opts.bound {
        BoundMethod::None if !mix.is_signed() => {
            let x0 = if dom_lo < 0.0 && dom_hi > 0.0 {
                0.0
            } else if dom_lo.is_finite() {
                dom_lo + 1.0
            } else {
                dom_hi - 1.0
            };
            let g0 = g(x0);
            if g0 < 0.0 {
                let (x1, g1) = expand(&mut g, x0, g0, 1.0, dom_hi, p)?;
                (x0, g0, x1, g1)
            } else {
                let (x1, g1) = expand(&mut g, x0, g0, -1.0, dom_lo, p)?;
                (x1, g1, x0, g0)
            }
        }
        method => {
            let (mut lo, mut hi) = quantile_bounds(mix, p, method)?;
            if lo == hi {
                return Ok(QuantileSolution { value: lo, evaluations: 0, bracket: (lo, hi), converged: true });
            }
            // Positive weights: the bracket is guaranteed, so F(lo) − p ∈ [−p, 0] and
            // F(hi) − p ∈ [0, 1 − p] need no evaluation. Brent's first secant step
            // from these extremes lands at lo + p·(hi − lo).
            if !mix.is_signed() && p > opts.ftol && 1.0 - p > opts.ftol {
                let out = brent::brent(&mut g, lo, hi, -p, 1.0 - p, opts.xtol, opts.ftol, opts.max_iter);
                return Ok(QuantileSolution { value: out.root, evaluations, bracket: (lo, hi), converged: out.converged });
            }
            let mut glo = g(lo);
            let mut ghi = g(hi);
            // round-off at the bracket ends: step outward
            if glo > 0.0 {
                if lo <= dom_lo {
                    return Ok(QuantileSolution { value: lo, evaluations, bracket: (lo, hi), converged: true });
                }
                let (x, gx) = expand(&mut g, lo, glo, -1.0, dom_lo, p)?;
                hi = lo;
                ghi = glo;
                lo = x;
                glo = gx;
            }
            if ghi < 0.0 {
                let (x, gx) = expand(&mut g, hi, ghi, 1.0, dom_hi, p)?;
                lo = hi;
                glo = ghi;
                hi = x;
                ghi = gx;
            }
            (lo, glo, hi, ghi)
        }
    };

    let out = brent::brent(&mut g, a, b, fa, fb, opts.xtol, opts.ftol, opts.max_iter);
    Ok(QuantileSolution { value: out.root, evaluations, bracket: (a, b), converged: out.converged })
}

/// Equal-tailed interval at `level` (e.g. 0.95 → quantiles 0.025 and 0.975).
pub fn credible_interval(mix: &PosteriorMixture, level: f64, opts: &QuantileOptions) -> Result<(f64, f64)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidLevel(level));
    }
    let lo = quantile(mix, 0.5 * (1.0 - level), opts)?.value;
    let hi = quantile(mix, 0.5 * (1.0 + level), opts)?.value;
    Ok((lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_mixture(rng: &mut ChaCha8Rng, k: usize, warped: bool) -> PosteriorMixture {
        let mut w: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 0.01).collect();
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= s);
        let comps = (0..k)
            .map(|_| {
                let tr = if warped {
                    Transform::sinh_arcsinh(rng.random_range(-0.5..0.5), rng.random_range(0.5..2.0)).unwrap()
                } else {
                    Transform::identity()
                };
                TMixtureComponent::new(
                    rng.random_range(2..40) as f64,
                    rng.random_range(-2.0..2.0),
                    rng.random_range(0.1..1.5),
                    Arc::new(tr),
                )
                .unwrap()
            })
            .collect();
        PosteriorMixture::new(w, comps).unwrap()
    }

    /// Dense-grid bisection oracle on the cdf.
    fn oracle_quantile(mix: &PosteriorMixture, p: f64) -> f64 {
        let mut lo = -1e3;
        let mut hi = 1e3;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mix.cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn tight() -> QuantileOptions {
        QuantileOptions { xtol: 1e-13, ftol: 1e-14, ..Default::default() }
    }

    #[test]
    fn single_component_density() {
        let mix = PosteriorMixture::new(vec![1.0], vec![TMixtureComponent::plain(5.0, 0.0, 1.0).unwrap()]).unwrap();
        assert!((mix.pdf(0.0).unwrap() - 0.379_606_689_2).abs() < 1e-9);
    }

    #[test]
    fn affine_jacobian_factor() {
        let tr = Arc::new(Transform::affine(0.3, 2.0).unwrap());
        let c = TMixtureComponent::new(4.0, 0.0, 1.0, tr).unwrap();
        for y in [-1.0, 0.0, 0.7] {
            let want = 2.0 * t_pdf(0.3 + 2.0 * y, 4.0);
            assert!((c.pdf(y).unwrap() - want).abs() < 1e-14);
        }
    }

    #[test]
    fn duplicate_components() {
        let c = TMixtureComponent::plain(3.0, 0.4, 0.8).unwrap();
        let mix = PosteriorMixture::new(vec![0.5, 0.5], vec![c.clone(), c.clone()]).unwrap();
        for y in [-2.0, 0.1, 3.0] {
            assert!((mix.pdf(y).unwrap() - c.pdf(y).unwrap()).abs() < 1e-15);
        }
    }

    #[test]
    fn cdf_median_and_tails() {
        let c = TMixtureComponent::plain(6.0, 1.3, 0.5).unwrap();
        let mix = PosteriorMixture::new(vec![1.0], vec![c]).unwrap();
        assert_eq!(mix.cdf(1.3), 0.5);
        assert!(mix.cdf(-1e9) < 1e-30);
        assert!(mix.cdf(1e9) > 1.0 - 1e-15);
    }

    #[test]
    fn cdf_matches_integrated_pdf() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mix = random_mixture(&mut rng, 5, true);
        // composite Simpson from far in the tail, where the cdf is negligible
        let a = -200.0;
        for &y in &[-1.0, 0.0, 0.8, 2.5] {
            let n = 400_000;
            let h = (y - a) / n as f64;
            let mut s = mix.pdf(a).unwrap() + mix.pdf(y).unwrap();
            for k in 1..n {
                let x = a + k as f64 * h;
                s += if k % 2 == 1 { 4.0 } else { 2.0 } * mix.pdf(x).unwrap();
            }
            let integral = s * h / 3.0 + mix.cdf(a);
            assert!((integral - mix.cdf(y)).abs() < 1e-6, "y {y}: {integral} vs {}", mix.cdf(y));
        }
    }

    #[test]
    fn cdf_derivative_matches_pdf() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mix = random_mixture(&mut rng, 6, true);
        for _ in 0..100 {
            let y: f64 = rng.random_range(-3.0..3.0);
            let h = 1e-5;
            let fd = (mix.cdf(y + h) - mix.cdf(y - h)) / (2.0 * h);
            assert!((fd - mix.pdf(y).unwrap()).abs() < 1e-5);
        }
    }

    #[test]
    fn hull_two_components() {
        let a = TMixtureComponent::plain(10.0, 0.0, 1.0).unwrap();
        let b = TMixtureComponent::plain(10.0, 1.0, 1.0).unwrap();
        let mix = PosteriorMixture::new(vec![0.5, 0.5], vec![a, b]).unwrap();
        let (lo, hi) = quantile_bounds(&mix, 0.5, BoundMethod::ConvexHull).unwrap();
        assert_eq!((lo, hi), (0.0, 1.0));
        let q = quantile(&mix, 0.5, &tight()).unwrap().value;
        assert!((q - 0.5).abs() < 1e-10);
    }

    #[test]
    fn single_component_collapse() {
        let c = TMixtureComponent::plain(7.0, -0.4, 2.0).unwrap();
        let mix = PosteriorMixture::new(vec![1.0], vec![c.clone()]).unwrap();
        for m in [BoundMethod::ConvexHull, BoundMethod::SingularWeight] {
            let (lo, hi) = quantile_bounds(&mix, 0.3, m).unwrap();
            assert_eq!(lo, c.quantile(0.3));
            assert_eq!(hi, c.quantile(0.3));
        }
        assert_eq!(quantile(&mix, 0.5, &tight()).unwrap().value, -0.4);
    }

    #[test]
    fn log_t_median() {
        let tr = Arc::new(Transform::box_cox(0.0).unwrap());
        let c = TMixtureComponent::new(5.0, 0.7, 0.3, tr).unwrap();
        let mix = PosteriorMixture::new(vec![1.0], vec![c]).unwrap();
        let q = quantile(&mix, 0.5, &tight()).unwrap().value;
        assert!((q - 0.7f64.exp()).abs() < 1e-12);
        let free = quantile(&mix, 0.5, &QuantileOptions { bound: BoundMethod::None, ..tight() }).unwrap().value;
        assert!((free - 0.7f64.exp()).abs() < 1e-9);
    }

    #[test]
    fn brackets_contain_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..300 {
            let mix = random_mixture(&mut rng, 10, trial % 2 == 0);
            for &p in &[0.025, 0.5, 0.975] {
                let q = oracle_quantile(&mix, p);
                for m in [BoundMethod::ConvexHull, BoundMethod::SingularWeight] {
                    let (lo, hi) = quantile_bounds(&mix, p, m).unwrap();
                    assert!(lo - 1e-9 <= q && q <= hi + 1e-9, "{m:?} p {p}: {lo} {q} {hi}");
                }
            }
        }
    }

    #[test]
    fn singular_weight_uses_dominant_component() {
        let a = TMixtureComponent::plain(5.0, 0.0, 1.0).unwrap();
        let b = TMixtureComponent::plain(5.0, 4.0, 1.0).unwrap();
        let mix = PosteriorMixture::new(vec![0.9, 0.1], vec![a.clone(), b]).unwrap();
        let (lo, hi) = quantile_bounds(&mix, 0.5, BoundMethod::SingularWeight).unwrap();
        assert!((lo - a.quantile(0.4)).abs() < 1e-14);
        assert!((hi - a.quantile(0.6)).abs() < 1e-14);
    }

    #[test]
    fn solver_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let mix = random_mixture(&mut rng, 8, true);
            let want = oracle_quantile(&mix, 0.975);
            for m in [BoundMethod::None, BoundMethod::ConvexHull, BoundMethod::SingularWeight] {
                let got = quantile(&mix, 0.975, &QuantileOptions { bound: m, ..tight() }).unwrap();
                assert!((got.value - want).abs() < 1e-5, "{m:?}: {} vs {want}", got.value);
                assert!(got.evaluations >= 1);
            }
        }
    }

    #[test]
    fn signed_mixture_bracket() {
        let a = TMixtureComponent::plain(8.0, 0.0, 1.0).unwrap();
        let b = TMixtureComponent::plain(8.0, 0.5, 1.0).unwrap();
        let c = TMixtureComponent::plain(8.0, 1.0, 1.0).unwrap();
        let mix = PosteriorMixture::new(vec![0.6, -0.2, 0.6], vec![a, b, c]).unwrap();
        let (lo, hi) = quantile_bounds(&mix, 0.5, BoundMethod::ConvexHull).unwrap();
        let q = quantile(&mix, 0.5, &tight()).unwrap();
        assert!(lo <= q.value && q.value <= hi);
        assert!((mix.cdf(q.value) - 0.5).abs() < 1e-10);
    }

    #[test]
    fn invalid_level() {
        let mix = PosteriorMixture::new(vec![1.0], vec![TMixtureComponent::plain(3.0, 0.0, 1.0).unwrap()]).unwrap();
        assert!(matches!(quantile(&mix, 1.0, &tight()), Err(Error::InvalidLevel(_))));
        assert!(matches!(quantile_bounds(&mix, 0.0, BoundMethod::ConvexHull), Err(Error::InvalidLevel(_))));
    }

    #[test]
    fn weights_must_sum_to_one() {
        let c = TMixtureComponent::plain(3.0, 0.0, 1.0).unwrap();
        assert!(matches!(PosteriorMixture::new(vec![0.5, 0.4], vec![c.clone(), c]), Err(Error::NotNormalized(_))));
    }
}
