//! Zero counting by the argument principle and preimage search.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::{HoloFunc, C64};
use crate::error::{Error, Result};
use crate::ext::Big;

/// Closed contour, traversed counterclockwise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Contour {
    Circle { center: C64, radius: f64 },
    /// Axis-parallel rectangle with corners `min` and `max`.
    Rect { min: C64, max: C64 },
}

impl Contour {
    pub fn square(center: C64, half: f64) -> Contour {
        Contour::Rect {
            min: center - C64::new(half, half),
            max: center + C64::new(half, half),
        }
    }

    /// Point at parameter `t ∈ [0, 1)`.
    fn point(&self, t: f64) -> C64 {
        match *self {
            Contour::Circle { center, radius } => center + C64::from_polar(radius, TAU * t),
            Contour::Rect { min, max } => {
                let s = 4.0 * t;
                let (x0, y0, x1, y1) = (min.re, min.im, max.re, max.im);
                match s as u32 {
                    0 => C64::new(x0 + (x1 - x0) * s, y0),
                    1 => C64::new(x1, y0 + (y1 - y0) * (s - 1.0)),
                    2 => C64::new(x1 - (x1 - x0) * (s - 2.0), y1),
                    _ => C64::new(x0, y1 - (y1 - y0) * (s - 3.0).min(1.0)),
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Contour::Circle { radius, .. } => radius > 0.0 && radius.is_finite(),
            Contour::Rect { min, max } => max.re > min.re && max.im > min.im,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::param(format!("degenerate contour {self:?}")))
        }
    }

    fn reach(&self) -> f64 {
        match *self {
            Contour::Circle { center, radius } => center.norm() + radius,
            Contour::Rect { min, max } => [min, max, C64::new(min.re, max.im), C64::new(max.re, min.im)]
                .iter()
                .map(|z| z.norm())
                .fold(0.0, f64::max),
        }
    }
}

const INITIAL_PIECES: usize = 64;
const MIN_PIECE: f64 = 1e-12;

/// Number of zeros of `f - w` inside the contour, with multiplicity.
pub fn count_zeros_shifted(f: &HoloFunc, w: C64, contour: &Contour) -> Result<u64> {
    contour.validate()?;
    if contour.reach() >= f.validity_radius() {
        return Err(Error::Domain {
            point: format!("contour reaching |z| = {}", contour.reach()),
            radius: f.validity_radius(),
        });
    }
    let shift = Big::new(-w);
    let value = |t: f64| -> Result<Big> {
        let z = contour.point(t);
        let v = f.expr().eval_big(z) + shift;
        if v.is_zero() || !v.is_finite() {
            return Err(Error::Contour(format!("zero of f on the contour near {z}")));
        }
        Ok(v)
    };
    // Track the continuous argument piece by piece, splitting any piece whose
    // endpoint values are not close in the multiplicative sense.
    let mut total = 0.0;
    for k in 0..INITIAL_PIECES {
        let a = k as f64 / INITIAL_PIECES as f64;
        let b = (k + 1) as f64 / INITIAL_PIECES as f64;
        let mut stack = vec![(a, b, value(a)?, value(if k + 1 == INITIAL_PIECES { 0.0 } else { b })?)];
        while let Some((a, b, fa, fb)) = stack.pop() {
            let q = fb.div(fa).to_c64();
            let close = q.arg().abs() < 0.5 && (q - 1.0).norm() < 0.5;
            if close {
                total += q.arg();
                continue;
            }
            if b - a < MIN_PIECE {
                return Err(Error::Contour(format!(
                    "argument jumps on a vanishing piece near {}",
                    contour.point(a)
                )));
            }
            let mid = 0.5 * (a + b);
            let fm = value(mid)?;
            // Push the second half first so pieces are summed left to right.
            stack.push((mid, b, fm, fb));
            stack.push((a, mid, fa, fm));
        }
    }
    let winding = total / TAU;
    let rounded = winding.round();
    if (winding - rounded).abs() >= 0.25 || rounded < 0.0 {
        return Err(Error::Contour(format!("non-integral winding {winding}")));
    }
    Ok(rounded as u64)
}

/// Number of zeros of `f` inside the contour, with multiplicity.
pub fn count_zeros(f: &HoloFunc, contour: &Contour) -> Result<u64> {
    count_zeros_shifted(f, C64::new(0.0, 0.0), contour)
}

/// Damped Newton iteration for `f(z) = w` from `z0`.
///
/// At most 50 iterations; a step that does not decrease the residual is
/// halved (up to 30 times). Returns the final point and residual.
pub fn newton_refine(f: &HoloFunc, w: C64, z0: C64, tol: f64) -> Option<(C64, f64)> {
    let radius = f.validity_radius();
    let target = Big::new(-w);
    let resid = |z: C64| -> (Big, Big) {
        let (v, d) = f.expr().jet(z);
        (v + target, d)
    };
    let mut z = z0;
    let (mut r, mut d) = resid(z);
    let mut polish = 0;
    for _ in 0..50 {
        let rn = r.abs().to_f64();
        if rn <= tol {
            polish += 1;
            if polish > 2 {
                break;
            }
        }
        if d.is_zero() {
            return None;
        }
        let step = r.div(d).to_c64();
        if !step.re.is_finite() || !step.im.is_finite() {
            return None;
        }
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let zn = z - step * lambda;
            if zn.norm() < radius {
                let (rn2, dn2) = resid(zn);
                if rn2.abs() < r.abs() || rn2.is_zero() {
                    z = zn;
                    r = rn2;
                    d = dn2;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let rn = r.abs().to_f64();
    if rn <= tol {
        Some((z, rn))
    } else {
        None
    }
}

/// Result of [`find_preimage`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preimage {
    pub z: C64,
    /// The target value that was hit.
    pub w: C64,
    pub residual: f64,
    /// `|f'(z)|`.
    pub derivative: f64,
}

/// Tuning for [`find_preimage`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreimageSearch {
    /// Side of the square cells tiling the annulus.
    pub cell: f64,
    /// Subdivision depth for cells flagged by zero counting.
    pub max_depth: u32,
    /// Reject roots where `|f'| ` exceeds this.
    pub max_derivative: Option<f64>,
    pub tol: f64,
    /// Zero counting is used only below this degree.
    pub localize_degree: u64,
}

impl Default for PreimageSearch {
    fn default() -> Self {
        PreimageSearch {
            cell: 0.25,
            max_depth: 4,
            max_derivative: None,
            tol: 1e-10,
            localize_degree: 256,
        }
    }
}

fn order_key(z: C64) -> (f64, f64) {
    let a = z.arg();
    (z.norm(), if a < 0.0 { a + TAU } else { a })
}

/// True when `a` precedes `b`: smaller modulus, then smaller argument.
fn precedes(a: C64, b: C64) -> bool {
    let (ra, ta) = order_key(a);
    let (rb, tb) = order_key(b);
    if (ra - rb).abs() > 1e-9 * ra.max(1.0) {
        ra < rb
    } else {
        ta < tb
    }
}

/// A point `z` with `r_min < |z| < r_max` and `f(z)` equal to one of `targets`.
pub fn find_preimage(
    f: &HoloFunc,
    targets: &[C64],
    r_min: f64,
    r_max: f64,
    search: &PreimageSearch,
) -> Result<Preimage> {
    if targets.is_empty() {
        return Err(Error::param("preimage search needs at least one target"));
    }
    let nearest = |w: C64| -> C64 {
        *targets
            .iter()
            .min_by(|a, b| (*a - w).norm().total_cmp(&(*b - w).norm()))
            .unwrap()
    };
    find_preimage_with(f, &nearest, targets, r_min, r_max, search)
}

/// Variant of [`find_preimage`] for a discrete target set given through its
/// nearest-point map (for example a lattice coset).
pub fn find_preimage_nearest(
    f: &HoloFunc,
    nearest: &dyn Fn(C64) -> C64,
    r_min: f64,
    r_max: f64,
    search: &PreimageSearch,
) -> Result<Preimage> {
    find_preimage_with(f, nearest, &[], r_min, r_max, search)
}

fn find_preimage_with(
    f: &HoloFunc,
    nearest: &dyn Fn(C64) -> C64,
    listed: &[C64],
    r_min: f64,
    r_max: f64,
    search: &PreimageSearch,
) -> Result<Preimage> {
    if !(r_min >= 0.0 && r_max > r_min) {
        return Err(Error::param(format!("bad annulus {r_min} < |z| < {r_max}")));
    }
    if r_max > f.validity_radius() {
        return Err(Error::Domain {
            point: format!("|z| = {r_max}"),
            radius: f.validity_radius(),
        });
    }
    if !(search.cell > 0.0) {
        return Err(Error::param("preimage cell size must be positive"));
    }
    let s = search.cell;
    let n = (r_max / s).ceil() as i64;
    let mut cells: Vec<(f64, f64, C64)> = Vec::new();
    for i in -n..n {
        for j in -n..n {
            let c = C64::new((i as f64 + 0.5) * s, (j as f64 + 0.5) * s);
            let half_diag = s * std::f64::consts::FRAC_1_SQRT_2;
            let lo = (c.norm() - half_diag).max(0.0);
            let hi = c.norm() + half_diag;
            if hi <= r_min || lo >= r_max {
                continue;
            }
            let (_, ang) = order_key(c);
            cells.push((lo, ang, c));
        }
    }
    cells.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let localize = f.degree() <= search.localize_degree;
    let mut best: Option<Preimage> = None;
    let consider = |z: C64, w: C64, best: &mut Option<Preimage>| {
        let r = z.norm();
        if !(r > r_min && r < r_max) {
            return;
        }
        let (v, d) = f.expr().jet(z);
        let residual = (v + Big::new(-w)).abs().to_f64();
        let derivative = d.abs().to_f64();
        if residual > search.tol {
            return;
        }
        if let Some(q) = search.max_derivative {
            if derivative > q {
                return;
            }
        }
        if best.as_ref().is_none_or(|b| precedes(z, b.z)) {
            *best = Some(Preimage {
                z,
                w,
                residual,
                derivative,
            });
        }
    };
    for &(lo, _, c) in &cells {
        if let Some(b) = &best {
            if lo > b.z.norm() + 1e-9 {
                break;
            }
        }
        let mut stack = vec![(c, 0.5 * s, 0u32)];
        while let Some((center, half, depth)) = stack.pop() {
            let w = nearest(f.expr().eval_big(center).to_c64());
            let mut hit = false;
            if let Some((z, _)) = newton_refine(f, w, center, search.tol) {
                consider(z, w, &mut best);
                hit = (z - center).re.abs() <= half && (z - center).im.abs() <= half;
            }
            if hit || !localize || depth >= search.max_depth {
                continue;
            }
            let candidates: Vec<C64> = if listed.is_empty() { vec![w] } else { listed.to_vec() };
            let square = Contour::square(center, half);
            let mut occupied = false;
            for t in candidates {
                match count_zeros_shifted(f, t, &square) {
                    Ok(0) => {}
                    Ok(_) | Err(Error::Contour(_)) => {
                        occupied = true;
                        if let Some((z, _)) = newton_refine(f, t, center, search.tol) {
                            consider(z, t, &mut best);
                        }
                    }
                    Err(e) => return Err(e),
                }
            }
            if occupied {
                let q = 0.5 * half;
                for (dx, dy) in [(-q, -q), (q, -q), (-q, q), (q, q)] {
                    stack.push((center + C64::new(dx, dy), q, depth + 1));
                }
            }
        }
    }
    best.ok_or_else(|| {
        Error::NotFound(format!(
            "no preimage with {r_min} < |z| < {r_max} (cell {s}, quiet bound {:?})",
            search.max_derivative
        ))
    })
}
