//! Peaking functions at a boundary point and oscillation factors.
//!
//! The peaking function is the affine map
//! `X(z) = (1 + δ₁)(z e^{-iθ₀} + R) / (2R)`. It sends the disc `D̄_R` onto a
//! disc touching the unit circle at the image of `z₀ = R e^{iθ₀}`, scaled by
//! `1 + δ₁`, so `|X| ≥ 1` only on a small cap around `z₀`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::holo::{inf_modulus_on_disc, sup_modulus, DiscDomain, Expr, HoloFunc, C64};

/// Shrink applied to the closed-form `δ₁` so that the cap sits strictly
/// inside the requested radius.
const CAP_SHRINK: f64 = 1.0 - 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeakingFunction {
    #[serde(rename = "R")]
    pub radius: f64,
    pub theta0: f64,
    pub delta1: f64,
}

impl PeakingFunction {
    pub fn new(radius: f64, theta0: f64, delta1: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::param(format!("peaking radius must be positive, got {radius}")));
        }
        if !(delta1 >= 0.0 && delta1.is_finite()) || !theta0.is_finite() {
            return Err(Error::param(format!("bad peaking parameters θ₀ = {theta0}, δ₁ = {delta1}")));
        }
        Ok(PeakingFunction {
            radius,
            theta0,
            delta1,
        })
    }

    /// The peak point `z₀ = R e^{iθ₀}`.
    pub fn z0(&self) -> C64 {
        C64::from_polar(self.radius, self.theta0)
    }

    /// `|X(z₀)| = 1 + δ₁`, which is also the sup of `|X|` on `D̄_R`.
    pub fn peak_value(&self) -> f64 {
        1.0 + self.delta1
    }

    pub fn func(&self) -> HoloFunc {
        let m = self.peak_value();
        let rot = C64::from_polar(1.0, -self.theta0);
        HoloFunc::poly(vec![C64::new(0.5 * m, 0.0), rot * (m / (2.0 * self.radius))])
    }

    /// `X'`, a constant.
    pub fn slope(&self) -> C64 {
        C64::from_polar(self.peak_value() / (2.0 * self.radius), -self.theta0)
    }

    /// Direct evaluation, without going through an expression tree.
    pub fn eval(&self, z: C64) -> C64 {
        let w = z * C64::from_polar(1.0, -self.theta0);
        (w + self.radius) * (self.peak_value() / (2.0 * self.radius))
    }
}

/// Peaking function whose exceptional set lies in the open disc of radius
/// `cap_radius` around `z₀`.
pub fn make_peaking(radius: f64, theta0: f64, cap_radius: f64) -> Result<PeakingFunction> {
    if !(radius > 0.0) {
        return Err(Error::param(format!("peaking radius must be positive, got {radius}")));
    }
    if !(cap_radius > 0.0 && cap_radius < 0.5 * radius) {
        return Err(Error::param(format!(
            "cap radius {cap_radius} must lie in (0, R/2) with R = {radius}"
        )));
    }
    let s = cap_radius / (2.0 * radius);
    let delta1 = (1.0 / (1.0 - s * s).sqrt() - 1.0) * CAP_SHRINK;
    if !(delta1 > 0.0) {
        return Err(Error::param(format!("cap radius {cap_radius} is too small to resolve")));
    }
    PeakingFunction::new(radius, theta0, delta1)
}

/// Smallest `r` with `{z ∈ D̄_R : |X(z)| ≥ 1} ⊂ D̄(z₀, r)`.
///
/// The set is bounded by an arc of `|z| = R` and an arc of
/// `|z e^{-iθ₀} + R| = 2R / (1 + δ₁)`; the farthest points from `z₀` are
/// where the two circles meet.
pub fn exceptional_cap_radius(peak: &PeakingFunction) -> f64 {
    let m = peak.peak_value();
    2.0 * peak.radius * (1.0 - 1.0 / (m * m)).max(0.0).sqrt()
}

/// `H = 1 + X^M`.
pub fn make_h(peak: &PeakingFunction, m: u64) -> Result<HoloFunc> {
    if m == 0 {
        return Err(Error::param("oscillation exponent must be at least 1"));
    }
    let x = peak.func().into_expr();
    let p = if m == 1 { x } else { Expr::Pow(Box::new(x), m) };
    Ok(HoloFunc::new(Expr::Sum(vec![Expr::constant(C64::new(1.0, 0.0)), p])))
}

/// Largest distance from `z₀` of a grid point of `D̄_R` where `|X| ≥ 1`, on a
/// square grid of about `samples` points. Zero when no such point is found.
pub fn scan_exceptional(peak: &PeakingFunction, samples: usize) -> f64 {
    let r = peak.radius;
    let n = ((samples as f64 * 4.0 / std::f64::consts::PI).sqrt().ceil() as usize).max(2);
    let h = 2.0 * r / (n - 1) as f64;
    let z0 = peak.z0();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let z = C64::new(-r + h * i as f64, -r + h * j as f64);
            if z.norm() > r {
                continue;
            }
            if peak.eval(z).norm() >= 1.0 {
                worst = worst.max((z - z0).norm());
            }
        }
    }
    worst
}

/// A closed disc inside `{m^{2/3} < |X| < m, Ĝ X' ≠ 0}` with certified bounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WitnessDisc {
    pub center: C64,
    pub radius: f64,
    /// Certified lower bound of `|X|` on the disc.
    pub inf_x: f64,
    /// Certified upper bound of `|X|` on the disc.
    pub sup_x: f64,
    /// Certified lower bound of `|Ĝ X'|` on the disc.
    pub inf_gx: f64,
}

const WITNESS_SAMPLES: usize = 1 << 16;
const WITNESS_INF_GRID: usize = 32;

/// Certified brackets of the three witness conditions on `D̄(c, r)`.
pub fn witness_brackets(peak: &PeakingFunction, g: &HoloFunc, c: C64, r: f64) -> Result<(f64, f64, f64)> {
    let disc = DiscDomain::new(c, r, 1.5 * r)?;
    let x = peak.func();
    let sup_x = sup_modulus(&x, &disc, WITNESS_SAMPLES)?.upper_f64();
    let inf_x = inf_modulus_on_disc(&x, &disc, WITNESS_INF_GRID)?.lower;
    let gx = g.scale(peak.slope());
    let inf_gx = inf_modulus_on_disc(&gx, &disc, WITNESS_INF_GRID)?.lower;
    Ok((inf_x, sup_x, inf_gx))
}

fn passes(b: (f64, f64, f64), lo: f64, m: f64) -> bool {
    b.0 > lo && b.1 < m && b.2 > 0.0
}

/// Finds a certified witness disc inside `D_R`.
///
/// A square grid over `D_R` is scanned for the point with the widest margin
/// in `log |X|` against both bounds where `Ĝ` does not vanish. Around it the
/// radius is doubled until a certified check fails, then halved once.
pub fn witness_disc(peak: &PeakingFunction, g: &HoloFunc, radius: f64, m: f64) -> Result<WitnessDisc> {
    if !(m > 1.0) {
        return Err(Error::param(format!("witness needs m > 1, got {m}")));
    }
    if g.is_zero() {
        return Err(Error::NotFound("the twisted coordinate vanishes identically".into()));
    }
    let lo = m.powf(2.0 / 3.0);
    let (llo, lhi) = (lo.ln(), m.ln());
    for n in [64usize, 256, 1024] {
        let h = 2.0 * radius / n as f64;
        let mut best: Option<(f64, C64)> = None;
        for i in 0..=n {
            for j in 0..=n {
                let z = C64::new(-radius + h * i as f64, -radius + h * j as f64);
                if z.norm() >= radius {
                    continue;
                }
                let lx = peak.eval(z).norm().ln();
                let margin = (lx - llo).min(lhi - lx);
                if margin <= 0.0 || best.is_some_and(|(b, _)| b >= margin) {
                    continue;
                }
                if g.expr().eval_big(z).is_zero() {
                    continue;
                }
                best = Some((margin, z));
            }
        }
        let Some((_, c)) = best else { continue };
        let room = radius - c.norm();
        let mut r = (0.25 * h).min(0.5 * room);
        let mut passing = None;
        // Shrink until the first certified pass.
        for _ in 0..40 {
            let b = witness_brackets(peak, g, c, r)?;
            if passes(b, lo, m) {
                passing = Some((r, b));
                break;
            }
            r *= 0.5;
        }
        let Some((mut r_ok, mut b_ok)) = passing else { continue };
        // Inflate by doubling until a check fails; the last pass is the one
        // halved back from the failure.
        loop {
            let next = 2.0 * r_ok;
            if next >= room {
                break;
            }
            let b = witness_brackets(peak, g, c, next)?;
            if !passes(b, lo, m) {
                break;
            }
            r_ok = next;
            b_ok = b;
        }
        return Ok(WitnessDisc {
            center: c,
            radius: r_ok,
            inf_x: b_ok.0,
            sup_x: b_ok.1,
            inf_gx: b_ok.2,
        });
    }
    Err(Error::NotFound(format!(
        "no witness disc with {lo:.6} < |X| < {m:.6} and Ĝ X' ≠ 0 inside D_{radius}"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_surrogate_values() {
        let p = PeakingFunction::new(1.0, 0.0, 0.0).unwrap();
        assert_eq!(p.eval(C64::new(1.0, 0.0)), C64::new(1.0, 0.0));
        assert_eq!(p.eval(C64::new(-1.0, 0.0)), C64::new(0.0, 0.0));
        assert_eq!(p.eval(C64::new(0.0, 0.0)), C64::new(0.5, 0.0));
        let f = p.func();
        assert_eq!(f.eval(C64::new(0.0, 0.0)).unwrap(), C64::new(0.5, 0.0));
    }

    #[test]
    fn endpoint_value() {
        let p = PeakingFunction::new(1.0, 0.0, 0.1).unwrap();
        assert_eq!(p.func().eval(C64::new(1.0, 0.0)).unwrap().norm(), 1.1);
    }

    #[test]
    fn cap_round_trip() {
        let p = make_peaking(2.0, 0.7, 0.9).unwrap();
        let c = exceptional_cap_radius(&p);
        assert!(c < 0.9 && c > 0.9 * (1.0 - 1e-6));
    }

    #[test]
    fn bad_caps() {
        assert!(make_peaking(1.0, 0.0, 0.5).is_err());
        assert!(make_peaking(1.0, 0.0, 0.0).is_err());
        assert!(make_peaking(1.0, 0.0, 1e-12).is_err());
    }

    #[test]
    fn serializes_with_capital_r() {
        let p = PeakingFunction::new(1.0, 0.0, 0.1).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(s, r#"{"R":1.0,"theta0":0.0,"delta1":0.1}"#);
    }
}
