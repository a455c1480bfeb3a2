//! Certified modulus brackets and Taylor truncation.

use std::f64::consts::{PI, TAU};

use rustfft::FftPlanner;

use super::{DiscDomain, Expr, HoloFunc, C64};
use crate::error::{Error, Result};
use crate::ext::XReal;

/// Largest number of boundary samples used when the requested count is too
/// small for the degree of the function.
const MAX_BOUNDARY_SAMPLES: usize = 1 << 22;

/// Relative slack for floating-point evaluation error in certified bounds.
const ROUNDING_SLACK: f64 = 1e-13;

/// `lower ≤ sup |f| ≤ upper` on a closed disc.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SupBracket {
    pub lower: XReal,
    pub upper: XReal,
    /// Number of boundary samples actually used.
    pub samples: usize,
    /// False when the degree was too large for the Bernstein correction and a
    /// sampled derivative bound was used instead.
    pub certified: bool,
}

impl SupBracket {
    pub fn upper_f64(&self) -> f64 {
        self.upper.to_f64()
    }

    pub fn lower_f64(&self) -> f64 {
        self.lower.to_f64()
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower_f64() <= x && x <= self.upper_f64()
    }
}

fn circle_points(center: C64, r: f64, n: usize) -> impl Iterator<Item = C64> {
    (0..n).map(move |k| center + C64::from_polar(r, TAU * k as f64 / n as f64))
}

/// Sup of `|f|` on the circle `|z - center| = r`, bracketed.
///
/// The boundary is sampled at `n` equispaced points. Between samples the
/// modulus can exceed the sampled max by at most `π r B / n`, where `B` bounds
/// `|f'|` on the circle. For a polynomial of degree `d`, Bernstein's
/// inequality gives `B ≤ d U / r` with `U` the true sup, which closes into
/// `U ≤ S / (1 - π d / n)`. The sample count is raised until `π d / n ≤ 1/2`.
pub(crate) fn circle_sup(f: &HoloFunc, center: C64, r: f64, n_boundary: usize) -> Result<SupBracket> {
    if n_boundary < 16 {
        return Err(Error::param(format!("need at least 16 boundary samples, got {n_boundary}")));
    }
    let d = f.degree();
    if d == 0 {
        let v = f.expr().eval_big(center).abs();
        let v = v.max(f.expr().eval_big(center + r).abs());
        return Ok(SupBracket {
            lower: v,
            upper: v,
            samples: 1,
            certified: true,
        });
    }
    let needed = (2.0 * PI * d as f64).ceil() as usize;
    let n = n_boundary.max(needed.min(MAX_BOUNDARY_SAMPLES));
    let sampled = circle_points(center, r, n)
        .map(|z| f.expr().eval_big(z).abs())
        .fold(XReal::ZERO, XReal::max);
    let ratio = PI * d as f64 / n as f64;
    if ratio <= 0.5 {
        let upper = sampled.scale((1.0 + ROUNDING_SLACK) / (1.0 - ratio));
        return Ok(SupBracket {
            lower: sampled,
            upper,
            samples: n,
            certified: true,
        });
    }
    // Degree beyond the sampling budget: fall back to a sampled derivative bound.
    let df = f.derivative();
    let b = circle_points(center, r, n)
        .map(|z| df.expr().eval_big(z).abs())
        .fold(XReal::ZERO, XReal::max);
    let upper = (sampled + b.scale(2.0 * PI * r / n as f64)).scale(1.0 + ROUNDING_SLACK);
    Ok(SupBracket {
        lower: sampled,
        upper,
        samples: n,
        certified: false,
    })
}

/// Certified bracket for the sup of `|f|` over the closed disc.
///
/// By the maximum principle the sup is attained on the boundary circle.
pub fn sup_modulus(f: &HoloFunc, disc: &DiscDomain, n_boundary: usize) -> Result<SupBracket> {
    disc.fits(f, disc.radius)?;
    circle_sup(f, disc.center, disc.radius, n_boundary)
}

/// `lower ≤ inf |f| ≤ sampled_min` on a closed disc.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InfBracket {
    pub lower: f64,
    pub sampled_min: f64,
}

impl InfBracket {
    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.sampled_min
    }
}

/// Certified lower bound on `inf |f|` over the closed disc.
///
/// Samples a square lattice of `grid` points across the diameter. Every point
/// of the disc lies within `h / √2` of a lattice point, so subtracting
/// `B h / √2` with `B` a certified sup of `|f'|` gives a one-sided bound.
pub fn inf_modulus_on_disc(f: &HoloFunc, disc: &DiscDomain, grid: usize) -> Result<InfBracket> {
    if grid < 2 {
        return Err(Error::param(format!("inf grid needs at least 2 points per side, got {grid}")));
    }
    let h = 2.0 * disc.radius / grid as f64;
    let reach = (disc.radius + h).min(0.5 * (disc.radius + disc.margin));
    disc.fits(f, reach)?;
    let half = grid as i64 / 2 + 1;
    let mut sampled_min = f64::INFINITY;
    for i in -half..=half {
        for j in -half..=half {
            let off = C64::new(i as f64 * h, j as f64 * h);
            if off.norm() > disc.radius + h {
                continue;
            }
            let p = disc.center + off;
            if (p - disc.center).norm() > reach {
                continue;
            }
            let v = f.expr().eval_big(p).abs().to_f64();
            sampled_min = sampled_min.min(v);
        }
    }
    let df = f.derivative();
    let b = if df.is_zero() {
        0.0
    } else {
        circle_sup(&df, disc.center, reach, 256)?.upper_f64()
    };
    let lower = sampled_min * (1.0 - ROUNDING_SLACK) - b * h / std::f64::consts::SQRT_2;
    Ok(InfBracket { lower, sampled_min })
}

/// Result of a certified truncation.
#[derive(Clone, Debug)]
pub struct Truncation {
    pub poly: HoloFunc,
    pub degree: usize,
    /// Certified bound on `sup |f - poly|` over the closed disc.
    pub error_bound: f64,
}

/// Largest degree whose Taylor coefficients are recovered exactly by FFT.
const MAX_TRUNCATION_DEGREE: u64 = 1 << 20;

/// Certified polynomial approximant of `f` on the closed disc.
///
/// Taylor coefficients about the disc center are read off by an FFT on the
/// margin circle with more nodes than the degree, so they carry no aliasing.
/// The tail is bounded by the smaller of the explicit coefficient tail
/// `Σ_{k>n} |c_k| r^k` and the Cauchy bound `M_ρ (r/ρ)^{n+1} / (1 - r/ρ)`.
pub fn taylor_truncate(f: &HoloFunc, disc: &DiscDomain, eps: f64) -> Result<Truncation> {
    if !(eps > 0.0) {
        return Err(Error::param(format!("truncation tolerance must be positive, got {eps}")));
    }
    let r = disc.radius;
    let rho = disc.margin;
    if r >= rho {
        return Err(Error::param("truncation radius must be below the margin"));
    }
    disc.fits(f, rho)?;
    let deg = f.degree();
    if deg > MAX_TRUNCATION_DEGREE {
        return Err(Error::Approximation(format!(
            "degree {deg} exceeds the truncation capacity {MAX_TRUNCATION_DEGREE}"
        )));
    }
    let n_nodes = ((deg as usize) + 1).next_power_of_two().max(16);
    let m_rho = circle_sup(f, disc.center, rho, n_nodes.max(64))?.upper_f64();

    let mut buf: Vec<C64> = circle_points(disc.center, rho, n_nodes)
        .map(|z| f.expr().eval_big(z).to_c64())
        .collect();
    FftPlanner::new().plan_fft_forward(n_nodes).process(&mut buf);
    // c_k = FFT_k / (N ρ^k), kept for k ≤ deg.
    let coeffs: Vec<C64> = buf
        .iter()
        .take(deg as usize + 1)
        .enumerate()
        .map(|(k, c)| c / (n_nodes as f64 * rho.powi(k as i32)))
        .collect();

    // Rounding in the FFT contributes roughly N ε M_ρ to each coefficient.
    let round = 4.0 * f64::EPSILON * (n_nodes as f64).log2().max(1.0) * m_rho;
    let q = r / rho;
    let mut tail = vec![0.0; coeffs.len() + 1];
    for k in (0..coeffs.len()).rev() {
        tail[k] = tail[k + 1] + coeffs[k].norm() * r.powi(k as i32);
    }
    let mut chosen = coeffs.len() - 1;
    let mut bound = 0.0;
    for n in 0..coeffs.len() {
        let explicit = tail[n + 1];
        let cauchy = m_rho * q.powi(n as i32 + 1) / (1.0 - q);
        let b = explicit.min(cauchy);
        let rounding = round * (n + 1) as f64 * 1.0f64.max(r.powi(n as i32));
        if b + rounding <= eps {
            chosen = n;
            bound = b + rounding;
            break;
        }
        if n == coeffs.len() - 1 {
            bound = rounding;
        }
    }
    let is_plain = matches!(f.expr(), Expr::Poly(_));
    if is_plain && disc.center == C64::new(0.0, 0.0) && (f.degree() as usize) <= chosen {
        return Ok(Truncation {
            poly: f.clone(),
            degree: f.degree() as usize,
            error_bound: 0.0,
        });
    }
    let mut kept: Vec<C64> = coeffs[..=chosen].to_vec();
    while kept.len() > 1 && kept.last().is_some_and(|c| c.norm() == 0.0) {
        kept.pop();
    }
    let body = Expr::Poly(kept);
    let expr = if disc.center == C64::new(0.0, 0.0) {
        body
    } else {
        Expr::Affine {
            a: C64::new(1.0, 0.0),
            b: -disc.center,
            inner: Box::new(body),
        }
    };
    Ok(Truncation {
        poly: HoloFunc::new(expr),
        degree: chosen,
        error_bound: bound,
    })
}
