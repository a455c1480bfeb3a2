//! Polar quadrature rules on discs.
//!
//! Radial integrals use composite Gauss–Legendre panels graded geometrically
//! toward the boundary circle, where the mass of an oscillation factor
//! `|X|^{2M}` piles up within `O(R/M)`. Angular integrals use the trapezoid
//! rule when the integrand has no preferred direction, and graded composite
//! Gauss–Legendre panels around a list of focus angles otherwise.

use std::f64::consts::{PI, TAU};

use gauss_quad::GaussLegendre;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Grid sizes shared by every disc functional.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadSpec {
    /// Radial node budget (split into panels of `order` nodes).
    pub radial: usize,
    /// Minimum angular node count.
    pub angular: usize,
    /// Gauss–Legendre nodes per panel.
    pub order: usize,
    /// Simpson nodes in `u = log t` for the nested Nevanlinna integral.
    pub log_nodes: usize,
    /// Inner cutoff of the nested integral, relative to the disc radius.
    pub inner_cutoff: f64,
    /// Compute the nested form of `T` as well as the log-kernel form.
    pub nested: bool,
}

impl Default for QuadSpec {
    fn default() -> Self {
        QuadSpec {
            radial: 512,
            angular: 1024,
            order: 16,
            log_nodes: 512,
            inner_cutoff: 1e-4,
            nested: true,
        }
    }
}

pub const MIN_RADIAL: usize = 32;
pub const MIN_ANGULAR: usize = 64;
const MAX_TRAPEZOID: usize = 1 << 16;

impl QuadSpec {
    pub fn validate(&self) -> Result<()> {
        if self.radial < MIN_RADIAL || self.angular < MIN_ANGULAR {
            return Err(Error::param(format!(
                "grid {}×{} below the minimum {MIN_RADIAL}×{MIN_ANGULAR}",
                self.radial, self.angular
            )));
        }
        if self.order < 2 || self.order > 64 {
            return Err(Error::param(format!("panel order {} outside 2..=64", self.order)));
        }
        if self.log_nodes < 16 {
            return Err(Error::param("nested integral needs at least 16 log nodes"));
        }
        if !(self.inner_cutoff > 0.0 && self.inner_cutoff < 0.5) {
            return Err(Error::param("inner cutoff must lie in (0, 1/2)"));
        }
        Ok(())
    }
}

/// One-dimensional rule as parallel node and weight lists.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }

    /// Composite Gauss–Legendre rule on consecutive breakpoints.
    pub fn composite(breaks: &[f64], order: usize) -> Rule {
        let gl = GaussLegendre::new(order.max(2)).expect("order ≥ 2");
        let pairs = gl.as_node_weight_pairs();
        let mut rule = Rule::default();
        for w in breaks.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b <= a {
                continue;
            }
            let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
            // Nodes come in descending order from the library; emit ascending.
            let mut local: Vec<(f64, f64)> = pairs.iter().map(|&(x, wt)| (mid + half * x, half * wt)).collect();
            local.sort_by(|p, q| p.0.total_cmp(&q.0));
            for (x, wt) in local {
                rule.nodes.push(x);
                rule.weights.push(wt);
            }
        }
        rule
    }

    /// Trapezoid rule on `[start, start + 2π)` with `n` nodes.
    pub fn periodic(n: usize, start: f64) -> Rule {
        let h = TAU / n as f64;
        Rule {
            nodes: (0..n).map(|k| start + h * k as f64).collect(),
            weights: vec![h; n],
        }
    }
}

/// Number of geometric grading levels needed for features of relative size
/// `1/degree`.
pub fn grading_depth(degree: u64) -> usize {
    let d = (degree.max(1) as f64).log2().ceil() as usize;
    (d + 8).min(48)
}

/// Radial rule on `[0, radius]`, graded toward both ends.
pub fn radial_rule(radius: f64, degree: u64, spec: &QuadSpec) -> Rule {
    let panels = (spec.radial / spec.order).max(2);
    let depth = grading_depth(degree).min(panels.saturating_sub(2).max(1));
    let uniform = panels.saturating_sub(depth).max(2);
    let mut breaks = vec![0.0];
    // Three geometric levels toward the origin, where the log kernel is singular.
    for k in (1..=3).rev() {
        breaks.push(0.5 * radius / uniform as f64 / (1u64 << k) as f64);
    }
    for k in 1..=uniform {
        breaks.push(0.5 * radius * k as f64 / uniform as f64);
    }
    for k in 2..=depth + 1 {
        breaks.push(radius * (1.0 - 0.5f64.powi(k as i32)));
    }
    breaks.push(radius);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    Rule::composite(&breaks, spec.order)
}

/// Angular rule on a full turn. Without foci this is the trapezoid rule with
/// enough nodes to integrate trigonometric polynomials of twice the degree
/// exactly; with foci the panels are graded toward each focus angle.
pub fn angular_rule(degree: u64, foci: &[f64], spec: &QuadSpec) -> Rule {
    if foci.is_empty() {
        let need = (4 * degree as usize + 16).min(MAX_TRAPEZOID);
        return Rule::periodic(spec.angular.max(need), 0.0);
    }
    let uniform = (spec.angular / spec.order).max(8);
    let depth = grading_depth(degree);
    let start = -PI;
    let wrap = |t: f64| start + (t - start).rem_euclid(TAU);
    let mut breaks: Vec<f64> = (0..=uniform).map(|k| start + TAU * k as f64 / uniform as f64).collect();
    let base = PI / uniform as f64;
    for &f in foci {
        breaks.push(wrap(f));
        for k in 0..=depth {
            let w = base * 0.5f64.powi(k as i32);
            breaks.push(wrap(f - w));
            breaks.push(wrap(f + w));
        }
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    Rule::composite(&breaks, spec.order)
}

/// Simpson rule on `[a, b]` with an odd number of nodes at least `n`.
pub fn simpson(a: f64, b: f64, n: usize) -> Rule {
    let n = if n % 2 == 0 { n + 1 } else { n }.max(3);
    let h = (b - a) / (n - 1) as f64;
    let mut rule = Rule::default();
    for k in 0..n {
        let w = if k == 0 || k == n - 1 {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        rule.nodes.push(a + h * k as f64);
        rule.weights.push(w * h / 3.0);
    }
    rule
}
