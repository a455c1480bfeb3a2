//! Lattices, elliptic-curve quotients and tube neighbourhoods in a product of
//! two of them.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rank-two lattice `ℤ ω₁ + ℤ ω₂` with `Im(ω₂/ω₁) > 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, try_from = "RawLattice")]
pub struct Lattice {
    pub omega1: C64,
    pub omega2: C64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLattice {
    omega1: C64,
    omega2: C64,
}

impl TryFrom<RawLattice> for Lattice {
    type Error = Error;
    fn try_from(r: RawLattice) -> Result<Lattice> {
        Lattice::new(r.omega1, r.omega2)
    }
}

impl Lattice {
    pub fn new(omega1: C64, omega2: C64) -> Result<Self> {
        let tau = omega2 / omega1;
        if !(tau.im > 0.0) || !tau.im.is_finite() {
            return Err(Error::param(format!(
                "lattice generators ({omega1}, {omega2}) are degenerate or negatively oriented"
            )));
        }
        Ok(Lattice { omega1, omega2 })
    }

    /// `ℤ + iℤ`.
    pub fn square() -> Self {
        Lattice {
            omega1: C64::new(1.0, 0.0),
            omega2: C64::new(0.0, 1.0),
        }
    }

    /// `ℤ + e^{iπ/3} ℤ`.
    pub fn hexagonal() -> Self {
        Lattice {
            omega1: C64::new(1.0, 0.0),
            omega2: C64::new(0.5, 3f64.sqrt() / 2.0),
        }
    }

    /// Real coordinates `(s, t)` with `z = s ω₁ + t ω₂`.
    pub fn coords(&self, z: C64) -> (f64, f64) {
        let (a, b) = (self.omega1, self.omega2);
        let det = a.re * b.im - a.im * b.re;
        let s = (z.re * b.im - z.im * b.re) / det;
        let t = (a.re * z.im - a.im * z.re) / det;
        (s, t)
    }

    pub fn point(&self, s: f64, t: f64) -> C64 {
        self.omega1 * s + self.omega2 * t
    }

    /// Area of a fundamental parallelogram.
    pub fn covolume(&self) -> f64 {
        (self.omega1.conj() * self.omega2).im.abs()
    }

    /// Lagrange–Gauss reduced basis: shortest vector first, angle in [60°, 90°].
    pub fn reduced_basis(&self) -> (C64, C64) {
        let (mut b1, mut b2) = (self.omega1, self.omega2);
        loop {
            if b2.norm_sqr() < b1.norm_sqr() {
                std::mem::swap(&mut b1, &mut b2);
            }
            let mu = ((b1.conj() * b2).re / b1.norm_sqr()).round();
            if mu == 0.0 {
                break;
            }
            b2 -= b1 * mu;
            if b2.norm_sqr() >= b1.norm_sqr() {
                break;
            }
        }
        if (b1.conj() * b2).re < 0.0 {
            b2 = -b2;
        }
        (b1, b2)
    }

    /// Length of the shortest nonzero lattice vector.
    pub fn shortest_vector(&self) -> f64 {
        self.reduced_basis().0.norm()
    }

    /// Largest distance from a point of the plane to the lattice.
    pub fn covering_radius(&self) -> f64 {
        let (b1, b2) = self.reduced_basis();
        let area2 = (b1.conj() * b2).im.abs();
        b1.norm() * b2.norm() * (b1 - b2).norm() / (2.0 * area2)
    }

    /// Reduction to the fundamental parallelogram `{s ω₁ + t ω₂ : 0 ≤ s, t < 1}`.
    pub fn reduce(&self, z: C64) -> TorusPoint {
        let (s, t) = self.coords(z);
        let (fs, ft) = (frac(s), frac(t));
        TorusPoint {
            lattice: *self,
            rep: self.point(fs, ft),
        }
    }

    /// Distance from `z` to the nearest lattice point.
    pub fn dist_to_lattice(&self, z: C64) -> f64 {
        let (b1, b2) = self.reduced_basis();
        let basis = Lattice { omega1: b1, omega2: b2 };
        let (s, t) = basis.coords(z);
        let (s0, t0) = (s.floor(), t.floor());
        let mut best = f64::INFINITY;
        for i in -1..=2 {
            for j in -1..=2 {
                let g = basis.point(s0 + i as f64, t0 + j as f64);
                best = best.min((z - g).norm());
            }
        }
        best
    }

    /// Lattice point nearest to `z`.
    pub fn nearest_point(&self, z: C64) -> C64 {
        let (b1, b2) = self.reduced_basis();
        let basis = Lattice { omega1: b1, omega2: b2 };
        let (s, t) = basis.coords(z);
        let (s0, t0) = (s.floor(), t.floor());
        let mut best = (f64::INFINITY, C64::new(0.0, 0.0));
        for i in -1..=2 {
            for j in -1..=2 {
                let g = basis.point(s0 + i as f64, t0 + j as f64);
                let d = (z - g).norm();
                if d < best.0 {
                    best = (d, g);
                }
            }
        }
        best.1
    }

    /// The `index`-th point of the plastic-ratio Kronecker sequence.
    pub fn dense_sequence(&self, index: u64) -> Result<TorusPoint> {
        if index == 0 {
            return Err(Error::param("dense sequence is indexed from 1"));
        }
        let n = index as f64;
        let s = frac(n * PLASTIC_A1);
        let t = frac(n * PLASTIC_A2);
        Ok(TorusPoint {
            lattice: *self,
            rep: self.point(s, t),
        })
    }
}

/// `1/p` and `1/p²` for the plastic number `p`, the real root of `x³ = x + 1`.
pub const PLASTIC_A1: f64 = 0.754_877_666_246_692_7;
pub const PLASTIC_A2: f64 = 0.569_840_290_998_053_3;

fn frac(x: f64) -> f64 {
    let f = x - x.floor();
    if f >= 1.0 {
        0.0
    } else {
        f
    }
}

/// Point of `ℂ/Γ`, stored by its reduced representative.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusPoint {
    pub lattice: Lattice,
    pub rep: C64,
}

impl TorusPoint {
    /// Distance in the flat metric induced from `ℂ`.
    pub fn dist(&self, other: &TorusPoint) -> Result<f64> {
        if self.lattice != other.lattice {
            return Err(Error::LatticeMismatch);
        }
        Ok(self.lattice.dist_to_lattice(self.rep - other.rep))
    }
}

pub fn torus_dist(lat: &Lattice, p: &TorusPoint, q: &TorusPoint) -> Result<f64> {
    if p.lattice != *lat {
        return Err(Error::LatticeMismatch);
    }
    p.dist(q)
}

/// `X = E₁ × E₂` with the flat product metric.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProductTarget {
    pub lattice1: Lattice,
    pub lattice2: Lattice,
}

impl Default for ProductTarget {
    fn default() -> Self {
        ProductTarget {
            lattice1: Lattice::square(),
            lattice2: Lattice::hexagonal(),
        }
    }
}

impl ProductTarget {
    pub fn lattice(&self, factor: Factor) -> &Lattice {
        match factor {
            Factor::First => &self.lattice1,
            Factor::Second => &self.lattice2,
        }
    }

    pub fn project(&self, w1: C64, w2: C64) -> (TorusPoint, TorusPoint) {
        (self.lattice1.reduce(w1), self.lattice2.reduce(w2))
    }
}

/// Which elliptic-curve factor of the product.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Factor {
    #[serde(rename = "1")]
    First,
    #[serde(rename = "2")]
    Second,
}

impl Factor {
    pub fn index(self) -> usize {
        match self {
            Factor::First => 0,
            Factor::Second => 1,
        }
    }

    pub fn other(self) -> Factor {
        match self {
            Factor::First => Factor::Second,
            Factor::Second => Factor::First,
        }
    }
}

/// Open tube `{x : dist(x_i, center) < rho} ⊂ E₁ × E₂` around a fibre.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TubeNbhd {
    pub factor: Factor,
    pub center: TorusPoint,
    pub rho: f64,
}

impl TubeNbhd {
    pub fn new(factor: Factor, center: TorusPoint, rho: f64) -> Result<Self> {
        if !(rho > 0.0) {
            return Err(Error::param(format!("tube radius must be positive, got {rho}")));
        }
        Ok(TubeNbhd { factor, center, rho })
    }

    /// True when the tube is an embedded product (radius at most half the
    /// shortest lattice vector).
    pub fn is_embedded(&self) -> bool {
        self.rho <= 0.5 * self.center.lattice.shortest_vector()
    }

    pub fn doubled(&self) -> TubeNbhd {
        TubeNbhd {
            rho: 2.0 * self.rho,
            ..*self
        }
    }

    /// Membership of the point `(x1, x2)`.
    pub fn contains(&self, x: (&TorusPoint, &TorusPoint)) -> Result<bool> {
        let xi = match self.factor {
            Factor::First => x.0,
            Factor::Second => x.1,
        };
        Ok(self.center.dist(xi)? < self.rho)
    }

    /// Membership of a lift `w ∈ ℂ` of the tube's own factor.
    pub fn contains_lift(&self, w: C64) -> bool {
        self.center.lattice.dist_to_lattice(w - self.center.rep) < self.rho
    }
}

pub fn in_tube(tube: &TubeNbhd, x: (&TorusPoint, &TorusPoint)) -> Result<bool> {
    tube.contains(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn reduce_examples() {
        let l = Lattice::square();
        assert!((l.reduce(c(2.5, 0.25)).rep - c(0.5, 0.25)).norm() < 1e-12);
        assert_eq!(l.reduce(c(0.5, 0.25)).rep, c(0.5, 0.25));
        let skew = Lattice::new(c(2.0, 0.0), c(1.0, 1.0)).unwrap();
        let r = skew.reduce(c(3.0, 2.0)).rep;
        let (a, b) = skew.coords(c(3.0, 2.0) - r);
        assert!((a - a.round()).abs() < 1e-9 && (b - b.round()).abs() < 1e-9);
    }

    #[test]
    fn distance_wraps() {
        let l = Lattice::square();
        let p = l.reduce(c(0.05, 0.0));
        let q = l.reduce(c(0.95, 0.0));
        assert!((p.dist(&q).unwrap() - 0.1).abs() < 1e-12);
        assert_eq!(p.dist(&p).unwrap(), 0.0);
    }

    #[test]
    fn mismatch_rejected() {
        let p = Lattice::square().reduce(c(0.1, 0.1));
        let q = Lattice::hexagonal().reduce(c(0.1, 0.1));
        assert!(matches!(p.dist(&q), Err(Error::LatticeMismatch)));
    }

    #[test]
    fn tube_is_open() {
        let l = Lattice::square();
        let center = l.reduce(c(0.5, 0.5));
        let tube = TubeNbhd::new(Factor::First, center, 0.25).unwrap();
        let other = Lattice::hexagonal().reduce(c(0.0, 0.0));
        assert!(tube.contains((&center, &other)).unwrap());
        let edge = l.reduce(c(0.75, 0.5));
        assert!(!tube.contains((&edge, &other)).unwrap());
    }

    #[test]
    fn covering_radii() {
        assert!((Lattice::square().covering_radius() - 0.5f64.sqrt()).abs() < 1e-12);
        assert!((Lattice::hexagonal().covering_radius() - 1.0 / 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn plastic_constants() {
        let p = 1.0 / PLASTIC_A1;
        assert!((p * p * p - p - 1.0).abs() < 1e-14);
        assert!((PLASTIC_A2 - PLASTIC_A1 * PLASTIC_A1).abs() < 1e-15);
    }

    #[test]
    fn lattice_json_shape() {
        let l: Lattice = serde_json::from_str(r#"{"omega1":[1.0,0.0],"omega2":[0.0,1.0]}"#).unwrap();
        assert_eq!(l, Lattice::square());
        assert!(serde_json::from_str::<Lattice>(r#"{"omega1":[1.0,0.0],"omega2":[2.0,0.0]}"#).is_err());
    }
}
