//! Holomorphic functions on discs, represented as expression trees over
//! polynomials.
//!
//! Every tree is a polynomial in disguise: atoms are polynomials with complex
//! coefficients, combined by sums, products, scalar multiples, affine
//! precomposition `z ↦ a z + b` and nonnegative integer powers. Powers are kept
//! symbolic so that `1 + X^M` with `M` in the hundreds of thousands costs one
//! node, and evaluation runs in extended range (see [`crate::ext`]).

pub(crate) mod bounds;
mod roots;

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ext::Big;

pub use bounds::{inf_modulus_on_disc, sup_modulus, taylor_truncate, InfBracket, SupBracket, Truncation};
pub use roots::{
    count_zeros, count_zeros_shifted, find_preimage, find_preimage_nearest, newton_refine, Contour, Preimage,
    PreimageSearch,
};

pub type C64 = Complex64;

/// Expression tree of a polynomial-valued holomorphic function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Node", into = "Node")]
pub enum Expr {
    /// `Σ c_k z^k`.
    Poly(Vec<C64>),
    /// `inner(a z + b)`.
    Affine { a: C64, b: C64, inner: Box<Expr> },
    Sum(Vec<Expr>),
    Product(Vec<Expr>),
    Scale(C64, Box<Expr>),
    Pow(Box<Expr>, u64),
}

impl Expr {
    pub fn constant(c: C64) -> Expr {
        Expr::Poly(vec![c])
    }

    pub fn zero() -> Expr {
        Expr::constant(C64::new(0.0, 0.0))
    }

    pub fn identity() -> Expr {
        Expr::Poly(vec![C64::new(0.0, 0.0), C64::new(1.0, 0.0)])
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Expr::Poly(c) => c.iter().all(|c| c.re == 0.0 && c.im == 0.0),
            Expr::Scale(c, e) => (c.re == 0.0 && c.im == 0.0) || e.is_zero(),
            Expr::Sum(v) => v.iter().all(Expr::is_zero),
            Expr::Product(v) => v.iter().any(Expr::is_zero),
            Expr::Affine { inner, .. } => inner.is_zero(),
            Expr::Pow(e, n) => *n > 0 && e.is_zero(),
        }
    }

    /// Value of a tree that is syntactically constant, if it is.
    fn as_constant(&self) -> Option<C64> {
        match self {
            Expr::Poly(c) if c.iter().skip(1).all(|c| c.re == 0.0 && c.im == 0.0) => {
                Some(c.first().copied().unwrap_or_default())
            }
            _ => None,
        }
    }

    /// Upper bound on the polynomial degree.
    pub fn degree(&self) -> u64 {
        match self {
            Expr::Poly(c) => c
                .iter()
                .rposition(|c| c.re != 0.0 || c.im != 0.0)
                .unwrap_or(0) as u64,
            Expr::Affine { a, inner, .. } => {
                if a.re == 0.0 && a.im == 0.0 {
                    0
                } else {
                    inner.degree()
                }
            }
            Expr::Sum(v) => v.iter().map(Expr::degree).max().unwrap_or(0),
            Expr::Product(v) => v.iter().map(Expr::degree).fold(0u64, u64::saturating_add),
            Expr::Scale(c, e) => {
                if c.re == 0.0 && c.im == 0.0 {
                    0
                } else {
                    e.degree()
                }
            }
            Expr::Pow(e, n) => e.degree().saturating_mul(*n),
        }
    }

    /// Number of nodes in the tree.
    pub fn size(&self) -> usize {
        1 + match self {
            Expr::Poly(_) => 0,
            Expr::Affine { inner, .. } => inner.size(),
            Expr::Sum(v) | Expr::Product(v) => v.iter().map(Expr::size).sum(),
            Expr::Scale(_, e) | Expr::Pow(e, _) => e.size(),
        }
    }

    fn sum(terms: Vec<Expr>) -> Expr {
        let mut flat = Vec::with_capacity(terms.len());
        for t in terms {
            if !t.is_zero() {
                flat.push(t);
            }
        }
        match flat.len() {
            0 => Expr::zero(),
            1 => flat.pop().unwrap(),
            _ => Expr::Sum(flat),
        }
    }

    fn product(factors: Vec<Expr>) -> Expr {
        if factors.iter().any(Expr::is_zero) {
            return Expr::zero();
        }
        let mut flat = Vec::with_capacity(factors.len());
        let mut scalar = C64::new(1.0, 0.0);
        for f in factors {
            match f {
                Expr::Product(inner) => flat.extend(inner),
                f => match f.as_constant() {
                    Some(c) => scalar *= c,
                    None => flat.push(f),
                },
            }
        }
        let body = match flat.len() {
            0 => return Expr::constant(scalar),
            1 => flat.pop().unwrap(),
            _ => Expr::Product(flat),
        };
        Expr::scale(scalar, body)
    }

    fn scale(c: C64, e: Expr) -> Expr {
        if c == C64::new(1.0, 0.0) {
            return e;
        }
        if c.re == 0.0 && c.im == 0.0 || e.is_zero() {
            return Expr::zero();
        }
        match e {
            Expr::Poly(coeffs) => Expr::Poly(coeffs.into_iter().map(|k| k * c).collect()),
            Expr::Scale(c2, inner) => Expr::scale(c * c2, *inner),
            e => Expr::Scale(c, Box::new(e)),
        }
    }

    /// Exact symbolic derivative.
    pub fn derivative(&self) -> Expr {
        match self {
            Expr::Poly(c) => {
                if c.len() <= 1 {
                    return Expr::zero();
                }
                Expr::Poly(
                    c.iter()
                        .enumerate()
                        .skip(1)
                        .map(|(k, c)| c * k as f64)
                        .collect(),
                )
            }
            Expr::Affine { a, b, inner } => {
                let d = inner.derivative();
                if d.is_zero() {
                    return Expr::zero();
                }
                let composed = match d.as_constant() {
                    Some(k) => Expr::constant(k),
                    None => Expr::Affine {
                        a: *a,
                        b: *b,
                        inner: Box::new(d),
                    },
                };
                Expr::scale(*a, composed)
            }
            Expr::Sum(v) => Expr::sum(v.iter().map(Expr::derivative).collect()),
            Expr::Product(v) => {
                let mut terms = Vec::with_capacity(v.len());
                for i in 0..v.len() {
                    let di = v[i].derivative();
                    if di.is_zero() {
                        continue;
                    }
                    let mut factors: Vec<Expr> = Vec::with_capacity(v.len());
                    for (j, f) in v.iter().enumerate() {
                        factors.push(if i == j { di.clone() } else { f.clone() });
                    }
                    terms.push(Expr::product(factors));
                }
                Expr::sum(terms)
            }
            Expr::Scale(c, e) => Expr::scale(*c, e.derivative()),
            Expr::Pow(e, n) => {
                let d = e.derivative();
                match *n {
                    0 => Expr::zero(),
                    _ if d.is_zero() => Expr::zero(),
                    1 => d,
                    n => {
                        let lower = if n == 2 {
                            (**e).clone()
                        } else {
                            Expr::Pow(e.clone(), n - 1)
                        };
                        Expr::product(vec![Expr::scale(C64::new(n as f64, 0.0), lower), d])
                    }
                }
            }
        }
    }

    /// Extended-range evaluation.
    pub fn eval_big(&self, z: C64) -> Big {
        match self {
            Expr::Poly(c) => Big::new(horner(c, z)),
            Expr::Affine { a, b, inner } => inner.eval_big(a * z + b),
            Expr::Sum(v) => v.iter().fold(Big::ZERO, |acc, e| acc + e.eval_big(z)),
            Expr::Product(v) => v.iter().fold(Big::ONE, |acc, e| acc * e.eval_big(z)),
            Expr::Scale(c, e) => e.eval_big(z).scale(*c),
            Expr::Pow(e, n) => e.eval_big(z).powu(*n),
        }
    }

    /// Value and first derivative in one pass (forward mode).
    pub fn jet(&self, z: C64) -> (Big, Big) {
        match self {
            Expr::Poly(c) => {
                let (v, d) = horner_jet(c, z);
                (Big::new(v), Big::new(d))
            }
            Expr::Affine { a, b, inner } => {
                let (v, d) = inner.jet(a * z + b);
                (v, d.scale(*a))
            }
            Expr::Sum(v) => v.iter().fold((Big::ZERO, Big::ZERO), |(av, ad), e| {
                let (v, d) = e.jet(z);
                (av + v, ad + d)
            }),
            Expr::Product(v) => {
                let mut it = v.iter();
                let Some(first) = it.next() else {
                    return (Big::ONE, Big::ZERO);
                };
                it.fold(first.jet(z), |(av, ad), e| {
                    let (v, d) = e.jet(z);
                    (av * v, ad * v + av * d)
                })
            }
            Expr::Scale(c, e) => {
                let (v, d) = e.jet(z);
                (v.scale(*c), d.scale(*c))
            }
            Expr::Pow(e, n) => match *n {
                0 => (Big::ONE, Big::ZERO),
                n => {
                    let (v, d) = e.jet(z);
                    let lower = v.powu(n - 1);
                    (lower * v, (lower * d).scale_real(n as f64))
                }
            },
        }
    }
}

fn horner(c: &[C64], z: C64) -> C64 {
    c.iter().rev().fold(C64::new(0.0, 0.0), |acc, c| acc * z + c)
}

fn horner_jet(c: &[C64], z: C64) -> (C64, C64) {
    let mut v = C64::new(0.0, 0.0);
    let mut d = C64::new(0.0, 0.0);
    for c in c.iter().rev() {
        d = d * z + v;
        v = v * z + c;
    }
    (v, d)
}

/// A holomorphic function represented exactly on `|z| < validity_radius`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HoloFunc {
    /// `None` means entire.
    #[serde(default)]
    validity_radius: Option<f64>,
    expr: Expr,
}

impl HoloFunc {
    pub fn new(expr: Expr) -> Self {
        HoloFunc {
            validity_radius: None,
            expr,
        }
    }

    pub fn with_validity(expr: Expr, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::param(format!("validity radius must be positive, got {radius}")));
        }
        Ok(HoloFunc {
            validity_radius: if radius.is_finite() { Some(radius) } else { None },
            expr,
        })
    }

    pub fn poly(coeffs: Vec<C64>) -> Self {
        HoloFunc::new(Expr::Poly(coeffs))
    }

    pub fn poly_real(coeffs: &[f64]) -> Self {
        HoloFunc::poly(coeffs.iter().map(|&c| C64::new(c, 0.0)).collect())
    }

    pub fn constant(c: C64) -> Self {
        HoloFunc::new(Expr::constant(c))
    }

    pub fn identity() -> Self {
        HoloFunc::new(Expr::identity())
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn into_expr(self) -> Expr {
        self.expr
    }

    pub fn validity_radius(&self) -> f64 {
        self.validity_radius.unwrap_or(f64::INFINITY)
    }

    pub fn degree(&self) -> u64 {
        self.expr.degree()
    }

    pub fn is_zero(&self) -> bool {
        self.expr.is_zero()
    }

    /// True when the derivative is identically zero as a tree.
    pub fn is_constant(&self) -> bool {
        self.degree() == 0 || self.expr.derivative().is_zero()
    }

    fn check_domain(&self, z: C64) -> Result<()> {
        let r = self.validity_radius();
        if z.norm() < r {
            Ok(())
        } else {
            Err(Error::Domain {
                point: format!("{z}"),
                radius: r,
            })
        }
    }

    pub fn eval(&self, z: C64) -> Result<C64> {
        self.check_domain(z)?;
        Ok(self.expr.eval_big(z).to_c64())
    }

    pub fn eval_big(&self, z: C64) -> Result<Big> {
        self.check_domain(z)?;
        Ok(self.expr.eval_big(z))
    }

    /// `(f(z), f'(z))` in extended range.
    pub fn jet(&self, z: C64) -> Result<(Big, Big)> {
        self.check_domain(z)?;
        Ok(self.expr.jet(z))
    }

    pub fn derivative(&self) -> HoloFunc {
        HoloFunc {
            validity_radius: self.validity_radius,
            expr: self.expr.derivative(),
        }
    }

    pub fn scale(&self, c: C64) -> HoloFunc {
        HoloFunc {
            validity_radius: self.validity_radius,
            expr: Expr::scale(c, self.expr.clone()),
        }
    }

    pub fn powu(&self, n: u64) -> HoloFunc {
        let expr = match n {
            0 => Expr::constant(C64::new(1.0, 0.0)),
            1 => self.expr.clone(),
            n => Expr::Pow(Box::new(self.expr.clone()), n),
        };
        HoloFunc {
            validity_radius: self.validity_radius,
            expr,
        }
    }

    /// `z ↦ f(a z + b)`.
    pub fn compose_affine(&self, a: C64, b: C64) -> HoloFunc {
        let validity_radius = self.validity_radius.map(|r| {
            if a.norm() == 0.0 {
                f64::INFINITY
            } else {
                ((r - b.norm()) / a.norm()).max(0.0)
            }
        });
        let expr = match &self.expr {
            Expr::Affine { a: a2, b: b2, inner } => Expr::Affine {
                a: a2 * a,
                b: a2 * b + b2,
                inner: inner.clone(),
            },
            e => Expr::Affine {
                a,
                b,
                inner: Box::new(e.clone()),
            },
        };
        HoloFunc {
            validity_radius: validity_radius.filter(|r| r.is_finite()),
            expr,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

fn min_validity(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (x, None) => x,
        (None, y) => y,
    }
}

impl Add for &HoloFunc {
    type Output = HoloFunc;
    fn add(self, rhs: &HoloFunc) -> HoloFunc {
        HoloFunc {
            validity_radius: min_validity(self.validity_radius, rhs.validity_radius),
            expr: Expr::sum(vec![self.expr.clone(), rhs.expr.clone()]),
        }
    }
}

impl Sub for &HoloFunc {
    type Output = HoloFunc;
    fn sub(self, rhs: &HoloFunc) -> HoloFunc {
        self + &rhs.scale(C64::new(-1.0, 0.0))
    }
}

impl Mul for &HoloFunc {
    type Output = HoloFunc;
    fn mul(self, rhs: &HoloFunc) -> HoloFunc {
        HoloFunc {
            validity_radius: min_validity(self.validity_radius, rhs.validity_radius),
            expr: Expr::product(vec![self.expr.clone(), rhs.expr.clone()]),
        }
    }
}

impl Neg for &HoloFunc {
    type Output = HoloFunc;
    fn neg(self) -> HoloFunc {
        self.scale(C64::new(-1.0, 0.0))
    }
}

impl fmt::Display for HoloFunc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "HoloFunc(degree ≤ {}, {} nodes)", self.degree(), self.expr.size())
    }
}

/// Closed disc `|z - center| ≤ radius`, certified on the larger circle of
/// radius `margin`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscDomain {
    pub center: C64,
    pub radius: f64,
    pub margin: f64,
}

impl DiscDomain {
    pub fn new(center: C64, radius: f64, margin: f64) -> Result<Self> {
        if !(radius > 0.0) || !(margin > radius) || !margin.is_finite() {
            return Err(Error::param(format!(
                "disc needs margin > radius > 0 (radius {radius}, margin {margin})"
            )));
        }
        Ok(DiscDomain {
            center,
            radius,
            margin,
        })
    }

    /// Disc centered at the origin with margin `radius * 1.5`.
    pub fn centered(radius: f64) -> Result<Self> {
        DiscDomain::new(C64::new(0.0, 0.0), radius, radius * 1.5)
    }

    pub(crate) fn fits(&self, f: &HoloFunc, rad: f64) -> Result<()> {
        let reach = self.center.norm() + rad;
        if reach < f.validity_radius() {
            Ok(())
        } else {
            Err(Error::Domain {
                point: format!("|z| = {reach}"),
                radius: f.validity_radius(),
            })
        }
    }
}

/// Serialized form of an [`Expr`] node.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Node {
    op: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    coeffs: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    exponent: Option<u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    children: Vec<Node>,
}

fn pair(c: C64) -> [f64; 2] {
    [c.re, c.im]
}

fn unpair(p: &[f64; 2]) -> C64 {
    C64::new(p[0], p[1])
}

impl From<Expr> for Node {
    fn from(e: Expr) -> Node {
        let leaf = |op: &str| Node {
            op: op.to_string(),
            coeffs: None,
            exponent: None,
            children: Vec::new(),
        };
        match e {
            Expr::Poly(c) => Node {
                coeffs: Some(c.into_iter().map(pair).collect()),
                ..leaf("poly")
            },
            Expr::Affine { a, b, inner } => Node {
                coeffs: Some(vec![pair(a), pair(b)]),
                children: vec![Node::from(*inner)],
                ..leaf("affine")
            },
            Expr::Sum(v) => Node {
                children: v.into_iter().map(Node::from).collect(),
                ..leaf("sum")
            },
            Expr::Product(v) => Node {
                children: v.into_iter().map(Node::from).collect(),
                ..leaf("product")
            },
            Expr::Scale(c, inner) => Node {
                coeffs: Some(vec![pair(c)]),
                children: vec![Node::from(*inner)],
                ..leaf("scale")
            },
            Expr::Pow(inner, n) => Node {
                exponent: Some(n),
                children: vec![Node::from(*inner)],
                ..leaf("pow")
            },
        }
    }
}

impl TryFrom<Node> for Expr {
    type Error = String;

    fn try_from(n: Node) -> std::result::Result<Expr, String> {
        let coeffs = |want: Option<usize>| -> std::result::Result<Vec<C64>, String> {
            let c = n.coeffs.as_ref().ok_or(format!("'{}' node needs coeffs", n.op))?;
            if let Some(k) = want {
                if c.len() != k {
                    return Err(format!("'{}' node needs {k} coeffs, got {}", n.op, c.len()));
                }
            }
            Ok(c.iter().map(unpair).collect())
        };
        let mut children = n
            .children
            .iter()
            .cloned()
            .map(Expr::try_from)
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let single = |children: &mut Vec<Expr>| -> std::result::Result<Box<Expr>, String> {
            if children.len() != 1 {
                return Err(format!("'{}' node needs exactly one child", n.op));
            }
            Ok(Box::new(children.pop().unwrap()))
        };
        match n.op.as_str() {
            "poly" => {
                let c = coeffs(None)?;
                if c.is_empty() {
                    return Err("poly node needs at least one coefficient".into());
                }
                Ok(Expr::Poly(c))
            }
            "affine" => {
                let c = coeffs(Some(2))?;
                Ok(Expr::Affine {
                    a: c[0],
                    b: c[1],
                    inner: single(&mut children)?,
                })
            }
            "sum" => Ok(Expr::Sum(children)),
            "product" => Ok(Expr::Product(children)),
            "scale" => {
                let c = coeffs(Some(1))?;
                Ok(Expr::Scale(c[0], single(&mut children)?))
            }
            "pow" => {
                let e = n.exponent.ok_or("pow node needs an exponent")?;
                Ok(Expr::Pow(single(&mut children)?, e))
            }
            other => Err(format!("unknown op '{other}'")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn eval_examples() {
        let sq = HoloFunc::poly_real(&[0.0, 0.0, 1.0]);
        assert_eq!(sq.eval(c(1.0, 1.0)).unwrap(), c(0.0, 2.0));
        let five = HoloFunc::constant(c(5.0, 0.0));
        assert_eq!(five.eval(c(-3.0, 7.0)).unwrap(), c(5.0, 0.0));
        let roots = &HoloFunc::poly_real(&[-1.0, 1.0]) * &HoloFunc::poly_real(&[1.0, 1.0]);
        assert_eq!(roots.eval(c(1.0, 0.0)).unwrap(), c(0.0, 0.0));
    }

    #[test]
    fn domain_error_outside_validity() {
        let f = HoloFunc::with_validity(Expr::identity(), 2.0).unwrap();
        assert!(matches!(f.eval(c(2.0, 0.0)), Err(Error::Domain { .. })));
        assert!(f.eval(c(1.9, 0.0)).is_ok());
    }

    #[test]
    fn derivative_examples() {
        let cube = HoloFunc::poly_real(&[0.0, 0.0, 0.0, 1.0]);
        let d = cube.derivative();
        assert_eq!(d.expr(), &Expr::Poly(vec![c(0.0, 0.0), c(0.0, 0.0), c(3.0, 0.0)]));
        let k = HoloFunc::constant(c(2.0, -1.0));
        assert!(k.derivative().is_zero());
    }

    #[test]
    fn oscillation_product_derivative_has_two_terms() {
        // (G (1 + X^M))' = M X^(M-1) G X' + G' (1 + X^M)
        let g = HoloFunc::poly_real(&[1.0, 1.0]);
        let x = HoloFunc::poly_real(&[0.5, 0.5]);
        let h = &HoloFunc::constant(c(1.0, 0.0)) + &x.powu(7);
        let d = (&g * &h).derivative();
        match d.expr() {
            Expr::Sum(terms) => assert_eq!(terms.len(), 2),
            other => panic!("expected two-term sum, got {other:?}"),
        }
    }

    #[test]
    fn jet_agrees_with_symbolic_derivative() {
        let g = HoloFunc::poly(vec![c(0.3, -0.2), c(1.0, 0.5), c(-0.25, 0.1)]);
        let x = HoloFunc::poly(vec![c(0.55, 0.0), c(0.0, 0.55)]);
        let f = &g * &(&HoloFunc::constant(c(1.0, 0.0)) + &x.powu(40));
        let f = f.compose_affine(c(0.9, 0.1), c(0.05, 0.0));
        let d = f.derivative();
        for z in [c(0.2, 0.3), c(-0.5, 0.1), c(0.0, -0.7)] {
            let (_, dj) = f.jet(z).unwrap();
            let ds = d.eval(z).unwrap();
            assert!((dj.to_c64() - ds).norm() <= 1e-12 * ds.norm().max(1.0));
        }
    }

    #[test]
    fn json_round_trip_is_exact() {
        let x = HoloFunc::poly(vec![c(0.1, 1.0 / 3.0), c(std::f64::consts::PI, -2e-300)]);
        let f = &(&x.powu(12345) * &x.compose_affine(c(0.5, 0.5), c(-1.0, 0.0))) + &x.scale(c(0.0, 7.0));
        let json = f.to_json().unwrap();
        let back = HoloFunc::from_json(&json).unwrap();
        assert_eq!(back, f);
        assert_eq!(back.to_json().unwrap(), json);
    }

    #[test]
    fn json_rejects_malformed_nodes() {
        assert!(HoloFunc::from_json(r#"{"expr":{"op":"pow","children":[{"op":"poly","coeffs":[[1,0]]}]}}"#).is_err());
        assert!(HoloFunc::from_json(r#"{"expr":{"op":"exp","children":[]}}"#).is_err());
    }

    #[test]
    fn degree_tracks_powers() {
        let x = HoloFunc::poly_real(&[0.5, 0.5]);
        let g = HoloFunc::poly_real(&[1.0, 1.0, 2.0]);
        let f = &g * &(&HoloFunc::constant(c(1.0, 0.0)) + &x.powu(1000));
        assert_eq!(f.degree(), 1002);
    }
}
