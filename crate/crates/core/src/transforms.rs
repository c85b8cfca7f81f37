//! Strictly increasing parametric warpings with closed-form inverses.
//!
//! | kind        | g(y)                      | constraint |
//! |-------------|---------------------------|------------|
//! | Affine      | a + b·y                   | b > 0      |
//! | ArcSinh     | a + b·asinh((y − c)/d)    | b, d > 0   |
//! | SinhArcSinh | sinh(b·asinh(y − a))      | b > 0      |
//! | BoxCox      | (y^λ − 1)/λ, or log y     | λ ≥ 0      |
//!
//! A composed transform applies its children left to right, so the chain
//! `[Affine, SinhArcSinh]` (model name `L-SA`) computes `SinhArcSinh(Affine(y))`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this λ the Box-Cox transform uses its logarithmic branch.
pub const BOX_COX_LOG_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Transform {
    Affine { a: f64, b: f64 },
    ArcSinh { a: f64, b: f64, c: f64, d: f64 },
    SinhArcSinh { a: f64, b: f64 },
    BoxCox { lambda: f64 },
    Composed { children: Vec<Transform> },
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!("{name} must be positive and finite, got {v}")))
    }
}

fn finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!("{name} must be finite, got {v}")))
    }
}

impl Transform {
    pub fn identity() -> Self {
        Transform::Affine { a: 0.0, b: 1.0 }
    }

    pub fn affine(a: f64, b: f64) -> Result<Self> {
        finite("affine a", a)?;
        positive("affine b", b)?;
        Ok(Transform::Affine { a, b })
    }

    pub fn arcsinh(a: f64, b: f64, c: f64, d: f64) -> Result<Self> {
        finite("arcsinh a", a)?;
        finite("arcsinh c", c)?;
        positive("arcsinh b", b)?;
        positive("arcsinh d", d)?;
        Ok(Transform::ArcSinh { a, b, c, d })
    }

    pub fn sinh_arcsinh(a: f64, b: f64) -> Result<Self> {
        finite("sinh-arcsinh a", a)?;
        positive("sinh-arcsinh b", b)?;
        Ok(Transform::SinhArcSinh { a, b })
    }

    pub fn box_cox(lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParams(format!("box-cox lambda must be >= 0, got {lambda}")));
        }
        Ok(Transform::BoxCox { lambda })
    }

    pub fn composed(children: Vec<Transform>) -> Result<Self> {
        for c in &children {
            c.validate()?;
        }
        Ok(Transform::Composed { children })
    }

    /// Re-checks parameter constraints, e.g. after deserialization.
    pub fn validate(&self) -> Result<()> {
        match *self {
            Transform::Affine { a, b } => Transform::affine(a, b).map(|_| ()),
            Transform::ArcSinh { a, b, c, d } => Transform::arcsinh(a, b, c, d).map(|_| ()),
            Transform::SinhArcSinh { a, b } => Transform::sinh_arcsinh(a, b).map(|_| ()),
            Transform::BoxCox { lambda } => Transform::box_cox(lambda).map(|_| ()),
            Transform::Composed { ref children } => children.iter().try_for_each(Transform::validate),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Transform::Affine { .. } => "affine",
            Transform::ArcSinh { .. } => "arcsinh",
            Transform::SinhArcSinh { .. } => "sinh-arcsinh",
            Transform::BoxCox { .. } => "box-cox",
            Transform::Composed { .. } => "composed",
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Transform::Affine { .. } | Transform::SinhArcSinh { .. } => 2,
            Transform::ArcSinh { .. } => 4,
            Transform::BoxCox { .. } => 1,
            Transform::Composed { children } => children.iter().map(Transform::param_count).sum(),
        }
    }

    /// Parameters in application order.
    pub fn params(&self) -> Vec<f64> {
        match self {
            Transform::Affine { a, b } | Transform::SinhArcSinh { a, b } => vec![*a, *b],
            Transform::ArcSinh { a, b, c, d } => vec![*a, *b, *c, *d],
            Transform::BoxCox { lambda } => vec![*lambda],
            Transform::Composed { children } => children.iter().flat_map(Transform::params).collect(),
        }
    }

    fn is_log_box_cox(lambda: f64) -> bool {
        lambda < BOX_COX_LOG_THRESHOLD
    }

    /// Open interval on which `forward` is defined.
    pub fn domain(&self) -> (f64, f64) {
        match self {
            Transform::BoxCox { .. } => (0.0, f64::INFINITY),
            Transform::Composed { children } => {
                let mut lo = f64::NEG_INFINITY;
                let mut hi = f64::INFINITY;
                for child in children.iter().rev() {
                    let (dlo, dhi) = child.domain();
                    lo = dlo.max(child.inverse_ext(lo));
                    hi = dhi.min(child.inverse_ext(hi));
                }
                (lo, hi)
            }
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    /// Open interval of values `forward` can produce.
    pub fn range(&self) -> (f64, f64) {
        match *self {
            Transform::BoxCox { lambda } if !Transform::is_log_box_cox(lambda) => (-1.0 / lambda, f64::INFINITY),
            Transform::Composed { ref children } => {
                let mut lo = f64::NEG_INFINITY;
                let mut hi = f64::INFINITY;
                for child in children {
                    lo = child.forward_ext(lo);
                    hi = child.forward_ext(hi);
                }
                (lo, hi)
            }
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    pub fn forward(&self, y: f64) -> Result<f64> {
        match *self {
            Transform::Affine { a, b } => Ok(a + b * y),
            Transform::ArcSinh { a, b, c, d } => Ok(a + b * ((y - c) / d).asinh()),
            Transform::SinhArcSinh { a, b } => Ok((b * (y - a).asinh()).sinh()),
            Transform::BoxCox { lambda } => {
                if !(y > 0.0) {
                    return Err(Error::DomainError { transform: "box-cox", value: y });
                }
                if Transform::is_log_box_cox(lambda) {
                    Ok(y.ln())
                } else {
                    Ok((lambda * y.ln()).exp_m1() / lambda)
                }
            }
            Transform::Composed { ref children } => children.iter().try_fold(y, |acc, c| c.forward(acc)),
        }
    }

    pub fn inverse(&self, z: f64) -> Result<f64> {
        match *self {
            Transform::Affine { a, b } => Ok((z - a) / b),
            Transform::ArcSinh { a, b, c, d } => Ok(c + d * ((z - a) / b).sinh()),
            Transform::SinhArcSinh { a, b } => Ok(a + (z.asinh() / b).sinh()),
            Transform::BoxCox { lambda } => {
                if Transform::is_log_box_cox(lambda) {
                    Ok(z.exp())
                } else {
                    let t = lambda * z;
                    if !(t > -1.0) {
                        return Err(Error::RangeError { transform: "box-cox", value: z });
                    }
                    Ok((t.ln_1p() / lambda).exp())
                }
            }
            Transform::Composed { ref children } => children.iter().rev().try_fold(z, |acc, c| c.inverse(acc)),
        }
    }

    /// `dg/dy`, strictly positive on the domain.
    pub fn derivative(&self, y: f64) -> Result<f64> {
        self.log_derivative(y).map(f64::exp)
    }

    /// `log dg/dy`.
    pub fn log_derivative(&self, y: f64) -> Result<f64> {
        match *self {
            Transform::Affine { b, .. } => Ok(b.ln()),
            Transform::ArcSinh { b, c, d, .. } => {
                let u = (y - c) / d;
                Ok(b.ln() - d.ln() - 0.5 * u.mul_add(u, 1.0).ln())
            }
            Transform::SinhArcSinh { a, b } => {
                let u = y - a;
                let w = b * u.asinh();
                Ok(b.ln() + log_cosh(w) - 0.5 * u.mul_add(u, 1.0).ln())
            }
            Transform::BoxCox { lambda } => {
                if !(y > 0.0) {
                    return Err(Error::DomainError { transform: "box-cox", value: y });
                }
                if Transform::is_log_box_cox(lambda) {
                    Ok(-y.ln())
                } else {
                    Ok((lambda - 1.0) * y.ln())
                }
            }
            Transform::Composed { ref children } => {
                let mut acc = 0.0;
                let mut v = y;
                for c in children {
                    acc += c.log_derivative(v)?;
                    v = c.forward(v)?;
                }
                Ok(acc)
            }
        }
    }

    /// `Σᵢ log g'(yᵢ)`.
    pub fn log_jacobian(&self, ys: &[f64]) -> Result<f64> {
        ys.iter().try_fold(0.0, |acc, &y| Ok(acc + self.log_derivative(y)?))
    }

    /// Monotone extension of `forward` to the whole real line: values below
    /// (above) the domain map to the lower (upper) end of the range.
    pub fn forward_ext(&self, y: f64) -> f64 {
        if let Transform::Composed { children } = self {
            return children.iter().fold(y, |acc, c| c.forward_ext(acc));
        }
        let (lo, hi) = self.domain();
        if y <= lo {
            return self.range().0;
        }
        if y >= hi {
            return self.range().1;
        }
        match self.forward(y) {
            Ok(v) => v,
            Err(_) => self.range().0,
        }
    }

    /// Monotone extension of `inverse`: values outside the range clamp to the domain ends.
    pub fn inverse_ext(&self, z: f64) -> f64 {
        if let Transform::Composed { children } = self {
            return children.iter().rev().fold(z, |acc, c| c.inverse_ext(acc));
        }
        let (lo, hi) = self.range();
        if z <= lo {
            return self.domain().0;
        }
        if z >= hi {
            return self.domain().1;
        }
        match self.inverse(z) {
            Ok(v) => v,
            Err(_) => self.domain().0,
        }
    }

    pub fn is_identity(&self) -> bool {
        match *self {
            Transform::Affine { a, b } => a == 0.0 && b == 1.0,
            Transform::Composed { ref children } => children.iter().all(Transform::is_identity),
            _ => false,
        }
    }
}

fn log_cosh(w: f64) -> f64 {
    let a = w.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// Elementary transform kinds without parameters; a family is a chain of them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ElementaryKind {
    Affine,
    ArcSinh,
    SinhArcSinh,
    BoxCox,
}

impl ElementaryKind {
    pub fn param_count(self) -> usize {
        match self {
            ElementaryKind::Affine | ElementaryKind::SinhArcSinh => 2,
            ElementaryKind::ArcSinh => 4,
            ElementaryKind::BoxCox => 1,
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            ElementaryKind::Affine => "L",
            ElementaryKind::ArcSinh => "A",
            ElementaryKind::SinhArcSinh => "SA",
            ElementaryKind::BoxCox => "BC",
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        match code {
            "L" => Some(ElementaryKind::Affine),
            "A" => Some(ElementaryKind::ArcSinh),
            "SA" => Some(ElementaryKind::SinhArcSinh),
            "BC" => Some(ElementaryKind::BoxCox),
            _ => None,
        }
    }

    /// Default prior box per parameter, in application order.
    pub fn default_box(self) -> Vec<(f64, f64)> {
        match self {
            ElementaryKind::Affine | ElementaryKind::SinhArcSinh => vec![(-1.0, 1.0), (0.1, 3.0)],
            ElementaryKind::ArcSinh => vec![(-1.0, 1.0), (0.1, 3.0), (-1.0, 1.0), (0.1, 3.0)],
            ElementaryKind::BoxCox => vec![(0.0, 3.0)],
        }
    }

    fn build(self, p: &[f64]) -> Result<Transform> {
        match self {
            ElementaryKind::Affine => Transform::affine(p[0], p[1]),
            ElementaryKind::ArcSinh => Transform::arcsinh(p[0], p[1], p[2], p[3]),
            ElementaryKind::SinhArcSinh => Transform::sinh_arcsinh(p[0], p[1]),
            ElementaryKind::BoxCox => Transform::box_cox(p[0]),
        }
    }
}

/// A chain of elementary kinds, named as in `I`, `BC`, `L-SA`, `A-BC`.
/// The empty chain is the identity.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct TransformFamily {
    kinds: Vec<ElementaryKind>,
}

impl TransformFamily {
    pub fn identity() -> Self {
        TransformFamily { kinds: Vec::new() }
    }

    pub fn new(kinds: Vec<ElementaryKind>) -> Self {
        TransformFamily { kinds }
    }

    pub fn kinds(&self) -> &[ElementaryKind] {
        &self.kinds
    }

    pub fn parse(name: &str) -> Result<Self> {
        let name = name.trim();
        if name.is_empty() || name == "I" {
            return Ok(TransformFamily::identity());
        }
        let kinds = name
            .split('-')
            .map(|c| ElementaryKind::from_code(c).ok_or_else(|| Error::Config(format!("unknown transform code `{c}` in `{name}`"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(TransformFamily { kinds })
    }

    pub fn param_count(&self) -> usize {
        self.kinds.iter().map(|k| k.param_count()).sum()
    }

    pub fn default_box(&self) -> Vec<(f64, f64)> {
        self.kinds.iter().flat_map(|k| k.default_box()).collect()
    }

    /// Builds the transform from a flat parameter vector in application order.
    pub fn build(&self, params: &[f64]) -> Result<Transform> {
        if params.len() != self.param_count() {
            return Err(Error::InvalidParams(format!("family {} takes {} parameters, got {}", self, self.param_count(), params.len())));
        }
        let mut offset = 0;
        let mut children = Vec::with_capacity(self.kinds.len());
        for k in &self.kinds {
            let n = k.param_count();
            children.push(k.build(&params[offset..offset + n])?);
            offset += n;
        }
        Ok(match children.len() {
            0 => Transform::identity(),
            1 => children.pop().unwrap(),
            _ => Transform::Composed { children },
        })
    }
}

impl TryFrom<String> for TransformFamily {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        TransformFamily::parse(&s)
    }
}

impl From<TransformFamily> for String {
    fn from(f: TransformFamily) -> String {
        f.to_string()
    }
}

impl fmt::Display for TransformFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.kinds.is_empty() {
            return f.write_str("I");
        }
        let codes: Vec<_> = self.kinds.iter().map(|k| k.code()).collect();
        f.write_str(&codes.join("-"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn central_diff(t: &Transform, y: f64, h: f64) -> f64 {
        (t.forward(y + h).unwrap() - t.forward(y - h).unwrap()) / (2.0 * h)
    }

    #[test]
    fn box_cox_values() {
        assert_relative_eq!(Transform::box_cox(1.0).unwrap().forward(2.0).unwrap(), 1.0);
        assert_relative_eq!(Transform::box_cox(0.0).unwrap().forward(std::f64::consts::E).unwrap(), 1.0);
        assert_relative_eq!(Transform::box_cox(2.0).unwrap().derivative(3.0).unwrap(), 3.0, max_relative = 1e-14);
        let small = Transform::box_cox(1e-9).unwrap();
        assert_relative_eq!(small.forward(2.0).unwrap(), 2f64.ln());
    }

    #[test]
    fn box_cox_domain_and_range() {
        let t = Transform::box_cox(0.5).unwrap();
        assert!(matches!(t.forward(0.0), Err(Error::DomainError { .. })));
        assert!(matches!(t.forward(-1.0), Err(Error::DomainError { .. })));
        assert!(matches!(t.inverse(-2.5), Err(Error::RangeError { .. })));
        assert_eq!(t.range(), (-2.0, f64::INFINITY));
        assert_eq!(t.forward_ext(-3.0), -2.0);
        assert_eq!(t.inverse_ext(-5.0), 0.0);
        for y in [0.1, 1.0, 10.0] {
            assert_relative_eq!(t.inverse(t.forward(y).unwrap()).unwrap(), y, max_relative = 1e-10);
        }
    }

    #[test]
    fn sinh_arcsinh_identity_params() {
        let t = Transform::sinh_arcsinh(0.0, 1.0).unwrap();
        assert_relative_eq!(t.forward(0.7).unwrap(), 0.7, epsilon = 1e-15);
    }

    #[test]
    fn sinh_arcsinh_round_trip() {
        let t = Transform::sinh_arcsinh(0.3, 1.7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let y: f64 = rng.random_range(-10.0..10.0);
            let back = t.inverse(t.forward(y).unwrap()).unwrap();
            assert!((back - y).abs() <= 1e-10 * y.abs().max(1.0));
        }
    }

    #[test]
    fn affine_basics() {
        let t = Transform::affine(1.0, 2.0).unwrap();
        assert_eq!(t.inverse(5.0).unwrap(), 2.0);
        assert_eq!(t.derivative(123.0).unwrap(), 2.0);
        assert_relative_eq!(t.log_jacobian(&[0.1, 0.2, 0.3]).unwrap(), 3.0 * 2f64.ln());
        assert_eq!(Transform::identity().log_jacobian(&[1.0, -4.0, 9.0]).unwrap(), 0.0);
    }

    #[test]
    fn constraints_rejected() {
        assert!(Transform::affine(0.0, 0.0).is_err());
        assert!(Transform::arcsinh(0.0, 1.0, 0.0, -1.0).is_err());
        assert!(Transform::sinh_arcsinh(0.0, -0.5).is_err());
        assert!(Transform::box_cox(-0.1).is_err());
        assert!(Transform::Affine { a: 0.0, b: -1.0 }.validate().is_err());
    }

    #[test]
    fn composed_order_is_left_to_right() {
        let fam = TransformFamily::parse("L-SA").unwrap();
        let t = fam.build(&[0.5, 2.0, 0.1, 1.3]).unwrap();
        let affine = Transform::affine(0.5, 2.0).unwrap();
        let sa = Transform::sinh_arcsinh(0.1, 1.3).unwrap();
        let y = 0.37;
        assert_relative_eq!(t.forward(y).unwrap(), sa.forward(affine.forward(y).unwrap()).unwrap());
        assert_eq!(t.params(), vec![0.5, 2.0, 0.1, 1.3]);
    }

    #[test]
    fn composed_domain_through_box_cox() {
        // arcsinh output must be positive for the box-cox stage
        let t = TransformFamily::parse("A-BC").unwrap().build(&[0.0, 1.0, 0.0, 1.0, 0.5]).unwrap();
        let (lo, hi) = t.domain();
        assert_relative_eq!(lo, 0.0, epsilon = 1e-15);
        assert_eq!(hi, f64::INFINITY);
        assert!(t.forward(-0.5).is_err());
        assert_eq!(t.range().0, -2.0);
    }

    #[test]
    fn family_names() {
        for name in ["I", "L", "A", "SA", "BC", "L-SA", "A-BC"] {
            let f = TransformFamily::parse(name).unwrap();
            assert_eq!(f.to_string(), name);
        }
        assert_eq!(TransformFamily::parse("A-BC").unwrap().param_count(), 5);
        assert!(TransformFamily::parse("X").is_err());
        assert!(TransformFamily::identity().build(&[]).unwrap().is_identity());
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let cases = [
            Transform::affine(0.3, 1.7).unwrap(),
            Transform::arcsinh(0.2, 1.5, -0.3, 0.7).unwrap(),
            Transform::sinh_arcsinh(-0.4, 2.2).unwrap(),
            Transform::box_cox(0.6).unwrap(),
            Transform::box_cox(0.0).unwrap(),
        ];
        for t in &cases {
            for _ in 0..50 {
                let y: f64 = rng.random_range(0.1..3.0);
                let fd = central_diff(t, y, 1e-6);
                let d = t.derivative(y).unwrap();
                assert!(((fd - d) / d).abs() < 1e-6, "{t:?} at {y}: {fd} vs {d}");
            }
        }
    }

    #[test]
    fn log_jacobian_of_composition_sums_children() {
        let fam = TransformFamily::parse("L-SA").unwrap();
        let t = fam.build(&[0.2, 1.4, -0.3, 0.8]).unwrap();
        let ys: Vec<f64> = (0..10).map(|i| 0.1 + 0.09 * i as f64).collect();
        let Transform::Composed { children } = &t else { panic!() };
        let inner: Vec<f64> = ys.iter().map(|&y| children[0].forward(y).unwrap()).collect();
        let want = children[0].log_jacobian(&ys).unwrap() + children[1].log_jacobian(&inner).unwrap();
        assert_relative_eq!(t.log_jacobian(&ys).unwrap(), want, max_relative = 1e-12);
        let fd: f64 = ys.iter().map(|&y| central_diff(&t, y, 1e-6).ln()).sum();
        assert!((t.log_jacobian(&ys).unwrap() - fd).abs() < 1e-6);
    }
}
