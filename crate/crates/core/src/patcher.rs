//! Disc patching: a countable family of holomorphic discs is threaded into a
//! single polynomial map, one disjoint disc at a time.
//!
//! Every merge fits a polynomial to the current map on `D̄_R` and to the next
//! translated disc on `D̄(c, r̂)` by weighted least squares on boundary nodes.
//! The basis is built by Arnoldi orthogonalization against those nodes, so the
//! fit stays well conditioned at high degree. Deviations are then certified
//! on the two boundary circles, which bounds them on the closed discs by the
//! maximum principle.

use std::f64::consts::TAU;

use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::holo::bounds::circle_sup;
use crate::holo::{Expr, HoloFunc, C64};
use crate::torus::ProductTarget;

/// A holomorphic disc `g : D̄_r̂ → ℂ²`, given by lifts of its coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscMap {
    pub g1: HoloFunc,
    pub g2: HoloFunc,
    pub radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscProgram {
    pub discs: Vec<DiscMap>,
    #[serde(default)]
    pub target: ProductTarget,
}

impl DiscProgram {
    pub fn validate(&self) -> Result<()> {
        if self.discs.is_empty() {
            return Err(Error::Config("disc program is empty".into()));
        }
        for (k, d) in self.discs.iter().enumerate() {
            if !(d.radius > 0.0 && d.radius.is_finite()) {
                return Err(Error::Config(format!("disc {} has radius {}", k + 1, d.radius)));
            }
            if d.g1.validity_radius().min(d.g2.validity_radius()) <= d.radius {
                return Err(Error::Config(format!(
                    "disc {} is not valid on a margin beyond its radius",
                    k + 1
                )));
            }
        }
        Ok(())
    }
}

/// Inverse Cantor pairing `j ↦ (x, y)`, with `j = 1 ↦ (1, 1)`.
pub fn cantor_unpair(j: u64) -> (u64, u64) {
    assert!(j >= 1, "pairing is indexed from 1");
    let n = j - 1;
    let mut w = (((8.0 * n as f64 + 1.0).sqrt() - 1.0) / 2.0).floor() as u64;
    // Guard the float estimate.
    while w * (w + 1) / 2 > n {
        w -= 1;
    }
    while (w + 1) * (w + 2) / 2 <= n {
        w += 1;
    }
    let y = n - w * (w + 1) / 2;
    (w - y + 1, y + 1)
}

pub fn cantor_pair(x: u64, y: u64) -> u64 {
    let (x, y) = (x - 1, y - 1);
    let w = x + y;
    w * (w + 1) / 2 + y + 1
}

/// Source used at scheduled step `j` and how many times it has been used up
/// to and including `j`. The first pairing coordinate is folded onto the
/// `sources` available, so each one recurs infinitely often.
pub fn schedule(j: u64, sources: usize) -> (usize, u64) {
    assert!(sources >= 1, "need at least one source");
    let pick = |j: u64| ((cantor_unpair(j).0 - 1) % sources as u64) as usize + 1;
    let i = pick(j);
    let rep = (1..=j).filter(|&k| pick(k) == i).count() as u64;
    (i, rep)
}

/// A closed disc with a map on it.
#[derive(Clone, Debug, PartialEq)]
pub struct Piece {
    pub g1: HoloFunc,
    pub g2: HoloFunc,
    pub center: C64,
    pub radius: f64,
}

impl Piece {
    fn eval(&self, z: C64) -> (C64, C64) {
        (self.g1.expr().eval_big(z).to_c64(), self.g2.expr().eval_big(z).to_c64())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MergeOptions {
    pub start_degree: usize,
    pub max_degree: usize,
    /// Boundary samples for certification on each circle.
    pub samples: usize,
    /// Weight of the outer regularization circle relative to the fit circles.
    pub outer_weight: f64,
    /// Doublings without a 10% gain before giving up.
    pub patience: usize,
}

impl Default for MergeOptions {
    fn default() -> Self {
        MergeOptions {
            start_degree: 8,
            max_degree: 2048,
            samples: 4096,
            outer_weight: 1e-14,
            patience: 2,
        }
    }
}

/// A certified merge.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub g1: HoloFunc,
    pub g2: HoloFunc,
    pub degree: usize,
    /// Certified `sup ‖P - F‖` on the first disc and `sup ‖P - g‖` on the
    /// second.
    pub deviation_first: f64,
    pub deviation_second: f64,
    /// The same sups re-sampled at twice the density, without correction.
    pub resampled_first: f64,
    pub resampled_second: f64,
    /// Sup of `‖P‖` on the outer circle.
    pub outer_sup: f64,
}

fn circle_nodes(center: C64, r: f64, n: usize) -> Vec<C64> {
    (0..n).map(|k| center + C64::from_polar(r, TAU * k as f64 / n as f64)).collect()
}

/// Polynomial basis orthonormal with respect to weighted nodes, kept as the
/// Hessenberg recurrence that generated it.
struct Arnoldi {
    h: Vec<Vec<C64>>,
    q0: f64,
}

impl Arnoldi {
    /// Builds `degree + 1` basis vectors on the nodes; returns the basis and
    /// the values of every basis polynomial at the nodes.
    fn build(nodes: &[C64], weights: &[f64], degree: usize) -> (Arnoldi, Vec<Vec<C64>>) {
        let total: f64 = weights.iter().sum();
        let q0 = 1.0 / total.sqrt();
        let mut q: Vec<Vec<C64>> = vec![vec![C64::new(q0, 0.0); nodes.len()]];
        let mut h: Vec<Vec<C64>> = Vec::with_capacity(degree);
        for k in 0..degree {
            let mut v: Vec<C64> = nodes.iter().zip(&q[k]).map(|(z, x)| z * x).collect();
            let mut col = vec![C64::new(0.0, 0.0); k + 2];
            // Classical Gram–Schmidt, applied twice.
            for _ in 0..2 {
                for (j, qj) in q.iter().enumerate() {
                    let c: C64 = qj.iter().zip(&v).zip(weights).map(|((a, b), w)| a.conj() * b * w).sum();
                    for (x, a) in v.iter_mut().zip(qj) {
                        *x -= c * a;
                    }
                    col[j] += c;
                }
            }
            let norm = v.iter().zip(weights).map(|(x, w)| x.norm_sqr() * w).sum::<f64>().sqrt();
            col[k + 1] = C64::new(norm, 0.0);
            for x in v.iter_mut() {
                *x /= norm;
            }
            h.push(col);
            q.push(v);
        }
        (Arnoldi { h, q0 }, q)
    }

    /// Values of `Σ d_k q_k` at the points `ys`.
    fn eval(&self, d: &[C64], ys: &[C64]) -> Vec<C64> {
        let mut basis: Vec<Vec<C64>> = vec![vec![C64::new(self.q0, 0.0); ys.len()]];
        let mut out: Vec<C64> = basis[0].iter().map(|b| b * d[0]).collect();
        for (k, col) in self.h.iter().enumerate() {
            let mut v: Vec<C64> = ys.iter().zip(&basis[k]).map(|(y, x)| y * x).collect();
            for (j, bj) in basis.iter().enumerate() {
                for (x, a) in v.iter_mut().zip(bj) {
                    *x -= col[j] * a;
                }
            }
            for x in v.iter_mut() {
                *x /= col[k + 1];
            }
            for (o, x) in out.iter_mut().zip(&v) {
                *o += d[k + 1] * x;
            }
            basis.push(v);
        }
        out
    }
}

/// Monomial coefficients of a polynomial of degree `< n` in `u = z / r`,
/// read off its values on `|z| = r`.
fn coefficients_on_circle(values: Vec<C64>) -> Vec<C64> {
    let n = values.len();
    let mut buf = values;
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    buf.iter().map(|c| c / n as f64).collect()
}

fn scaled_poly(mut coeffs: Vec<C64>, r: f64) -> HoloFunc {
    while coeffs.len() > 1 && coeffs.last().is_some_and(|c| c.norm() == 0.0) {
        coeffs.pop();
    }
    HoloFunc::new(Expr::Affine {
        a: C64::new(1.0 / r, 0.0),
        b: C64::new(0.0, 0.0),
        inner: Box::new(Expr::Poly(coeffs)),
    })
}

/// Sup of `‖(p1 - f1, p2 - f2)‖` over the circle, bracketed per coordinate.
/// Returns `(certified upper, plain sampled sup at 2× density)`.
fn certify(p: (&HoloFunc, &HoloFunc), f: (&HoloFunc, &HoloFunc), center: C64, r: f64, samples: usize) -> Result<(f64, f64)> {
    let d1 = p.0 - f.0;
    let d2 = p.1 - f.1;
    let u1 = circle_sup(&d1, center, r, samples)?.upper_f64();
    let u2 = circle_sup(&d2, center, r, samples)?.upper_f64();
    let resampled = circle_nodes(center, r, 2 * samples)
        .into_iter()
        .map(|z| {
            let a = d1.expr().eval_big(z).to_c64();
            let b = d2.expr().eval_big(z).to_c64();
            (a.norm_sqr() + b.norm_sqr()).sqrt()
        })
        .fold(0.0, f64::max);
    Ok((u1.hypot(u2), resampled))
}

/// Polynomial pair within `eps` of `first` on its disc and of `second` on its
/// disc, fitted on three circles with a weak pull to zero on the outer one.
pub fn merge_two_discs(first: &Piece, second: &Piece, outer: f64, eps: f64, opts: &MergeOptions) -> Result<Merge> {
    if !(eps > 0.0) {
        return Err(Error::param(format!("merge tolerance must be positive, got {eps}")));
    }
    if (second.center - first.center).norm() <= first.radius + second.radius {
        return Err(Error::param("the two closed discs overlap"));
    }
    if outer <= first.center.norm() + first.radius || outer <= second.center.norm() + second.radius {
        return Err(Error::param("outer radius must enclose both discs"));
    }
    let f = (&first.g1, &first.g2);

    // The current map may already be close enough on the second disc.
    let (dev2, res2) = certify(f, (&second.g1, &second.g2), second.center, second.radius, opts.samples)?;
    if dev2 <= eps && res2 <= eps {
        return Ok(Merge {
            g1: first.g1.clone(),
            g2: first.g2.clone(),
            degree: first.g1.degree().max(first.g2.degree()) as usize,
            deviation_first: 0.0,
            deviation_second: dev2,
            resampled_first: 0.0,
            resampled_second: res2,
            outer_sup: f64::NAN,
        });
    }

    let mut n = opts.start_degree.max(1);
    let mut last = String::new();
    // Worst deviation relative to eps, and how many doublings failed to cut it.
    let (mut best, mut stalled) = (f64::INFINITY, 0);
    while n <= opts.max_degree {
        let per = (2 * (n + 1)).next_power_of_two().max(64);
        let a_nodes = circle_nodes(first.center, first.radius, per);
        let b_nodes = circle_nodes(second.center, second.radius, per);
        let o_nodes = circle_nodes(C64::new(0.0, 0.0), outer, per);
        let mut nodes = Vec::with_capacity(3 * per);
        let mut weights = Vec::with_capacity(3 * per);
        let mut rhs1 = Vec::with_capacity(3 * per);
        let mut rhs2 = Vec::with_capacity(3 * per);
        for &z in &a_nodes {
            let (u, v) = first.eval(z);
            nodes.push(z);
            weights.push(1.0);
            rhs1.push(u);
            rhs2.push(v);
        }
        for &z in &b_nodes {
            let (u, v) = second.eval(z);
            nodes.push(z);
            weights.push(1.0);
            rhs1.push(u);
            rhs2.push(v);
        }
        for &z in &o_nodes {
            nodes.push(z);
            weights.push(opts.outer_weight);
            rhs1.push(C64::new(0.0, 0.0));
            rhs2.push(C64::new(0.0, 0.0));
        }
        let (basis, q) = Arnoldi::build(&nodes, &weights, n);
        let project = |b: &[C64]| -> Vec<C64> {
            q.iter()
                .map(|qk| qk.iter().zip(b).zip(&weights).map(|((a, x), w)| a.conj() * x * w).sum())
                .collect()
        };
        let (d1, d2) = (project(&rhs1), project(&rhs2));
        let m = (n + 1).next_power_of_two();
        let ring = circle_nodes(C64::new(0.0, 0.0), outer, m);
        let v1 = basis.eval(&d1, &ring);
        let v2 = basis.eval(&d2, &ring);
        let outer_sup = v1.iter().zip(&v2).map(|(a, b)| (a.norm_sqr() + b.norm_sqr()).sqrt()).fold(0.0, f64::max);
        let p1 = scaled_poly(coefficients_on_circle(v1), outer);
        let p2 = scaled_poly(coefficients_on_circle(v2), outer);
        // Keep the Bernstein safety factor near 1 at high degree.
        let samples = opts.samples.max(16 * (n + 1)).next_power_of_two();
        let (dev_a, res_a) = certify((&p1, &p2), f, first.center, first.radius, samples)?;
        let (dev_b, res_b) = certify((&p1, &p2), (&second.g1, &second.g2), second.center, second.radius, samples)?;
        if dev_a <= eps && dev_b <= eps && res_a <= eps && res_b <= eps {
            return Ok(Merge {
                g1: p1,
                g2: p2,
                degree: n,
                deviation_first: dev_a,
                deviation_second: dev_b,
                resampled_first: res_a,
                resampled_second: res_b,
                outer_sup,
            });
        }
        last = format!("degree {n}: deviations {dev_a:e} and {dev_b:e}, outer sup {outer_sup:e}");
        let worst = dev_a.max(dev_b) / eps;
        if worst < 0.9 * best {
            best = worst;
            stalled = 0;
        } else {
            stalled += 1;
            if stalled == opts.patience {
                return Err(Error::Approximation(format!(
                    "merge within {eps:e} stalled at the floating-point floor; last try {last}"
                )));
            }
        }
        n *= 2;
    }
    Err(Error::Approximation(format!(
        "no certified merge within {eps:e} up to degree {}; last try {last}",
        opts.max_degree
    )))
}

/// `z ↦ f((1 - 2^{-ℓ}) z)`.
pub fn scale_to_boundary(f: &HoloFunc, level: u32) -> Result<HoloFunc> {
    if level == 0 {
        return Err(Error::param("scaling level must be positive"));
    }
    let s = 1.0 - 0.5f64.powi(level as i32);
    Ok(f.compose_affine(C64::new(s, 0.0), C64::new(0.0, 0.0)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PatchConfig {
    pub steps: usize,
    /// `ε_i = scale · ratio^i`.
    pub eps_scale: f64,
    pub eps_ratio: f64,
    pub merge: MergeOptions,
    /// `R_{i+1} − |c_{i+1}| − r̂_{i+1}`.
    pub margin: f64,
    /// Sample count for the telescoping check on each disc.
    pub check_samples: usize,
}

impl Default for PatchConfig {
    fn default() -> Self {
        PatchConfig {
            steps: 7,
            eps_scale: 1.0,
            eps_ratio: 0.5,
            merge: MergeOptions::default(),
            margin: 0.5,
            check_samples: 4096,
        }
    }
}

impl PatchConfig {
    pub fn epsilon(&self, i: usize) -> f64 {
        self.eps_scale * self.eps_ratio.powi(i as i32)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps_scale > 0.0 && self.eps_ratio > 0.0 && self.eps_ratio < 1.0) {
            return Err(Error::Config("ε schedule must be positive and summable".into()));
        }
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return Err(Error::Config(format!("margin must be positive, got {}", self.margin)));
        }
        if self.check_samples < 16 || self.merge.samples < 16 {
            return Err(Error::Config("need at least 16 samples per circle".into()));
        }
        if self.merge.patience == 0 {
            return Err(Error::Config("merge patience must be at least 1".into()));
        }
        if self.merge.max_degree < self.merge.start_degree.max(1) {
            return Err(Error::Config("degree cap below the start degree".into()));
        }
        Ok(())
    }
}

/// One scheduled step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchStep {
    pub index: usize,
    pub source: usize,
    pub repetition: u64,
    pub center: C64,
    pub disc_radius: f64,
    /// `R_i` after the step.
    pub radius: f64,
    pub epsilon: f64,
    /// Lattice translation applied to the disc's lifts.
    pub shift: [C64; 2],
    pub g1: HoloFunc,
    pub g2: HoloFunc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub merge: Option<Merge>,
}

/// Deviation of the final map from one scheduled disc.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Deviation {
    pub index: usize,
    pub source: usize,
    pub sampled: f64,
    pub bound: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchRun {
    pub trace: Vec<PatchStep>,
    pub deviations: Vec<Deviation>,
}

impl PatchRun {
    pub fn all_hold(&self) -> bool {
        self.deviations.iter().all(|d| d.holds)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn deviation_csv(&self) -> String {
        let mut out = String::from("step,source,sampled,bound,holds\n");
        for d in &self.deviations {
            out.push_str(&format!("{},{},{:e},{:e},{}\n", d.index, d.source, d.sampled, d.bound, d.holds));
        }
        out
    }
}

#[derive(Debug)]
pub struct PatchAborted {
    pub trace: Vec<PatchStep>,
    pub error: Error,
}

/// `ĝ = g(· − c) + λ`, with `λ` a pair of lattice vectors.
fn translated(d: &DiscMap, c: C64, shift: [C64; 2]) -> (HoloFunc, HoloFunc) {
    let one = C64::new(1.0, 0.0);
    let lift = |g: &HoloFunc, l: C64| {
        let t = g.compose_affine(one, -c);
        if l == C64::new(0.0, 0.0) {
            t
        } else {
            &t + &HoloFunc::constant(l)
        }
    };
    (lift(&d.g1, shift[0]), lift(&d.g2, shift[1]))
}

/// Lattice vectors bringing the lifts of `d` at `c` nearest to `f(c)`. Both
/// lifts describe the same map into the torus.
fn lattice_shift(target: &ProductTarget, f: (&HoloFunc, &HoloFunc), d: &DiscMap, c: C64) -> [C64; 2] {
    let gap = |f: &HoloFunc, g: &HoloFunc| f.expr().eval_big(c).to_c64() - g.expr().eval_big(C64::new(0.0, 0.0)).to_c64();
    [
        target.lattice1.nearest_point(gap(f.0, &d.g1)),
        target.lattice2.nearest_point(gap(f.1, &d.g2)),
    ]
}

/// Sampled sup of `‖F - ĝ‖` over the closed disc: its boundary circle and a
/// few interior circles.
fn sampled_deviation(f: (&HoloFunc, &HoloFunc), g: (&HoloFunc, &HoloFunc), c: C64, r: f64, n: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for frac in [1.0, 0.75, 0.5, 0.25] {
        for z in circle_nodes(c, r * frac, n) {
            let a = f.0.expr().eval_big(z).to_c64() - g.0.expr().eval_big(z).to_c64();
            let b = f.1.expr().eval_big(z).to_c64() - g.1.expr().eval_big(z).to_c64();
            worst = worst.max((a.norm_sqr() + b.norm_sqr()).sqrt());
        }
    }
    let a = f.0.expr().eval_big(c).to_c64() - g.0.expr().eval_big(c).to_c64();
    let b = f.1.expr().eval_big(c).to_c64() - g.1.expr().eval_big(c).to_c64();
    worst.max((a.norm_sqr() + b.norm_sqr()).sqrt())
}

/// Gap between consecutive discs.
const GAP: f64 = 1.0;

/// Runs `cfg.steps` scheduled steps: the first installs a disc at the origin,
/// each later one merges a translated disc placed on the positive real axis.
pub fn run_patch(program: &DiscProgram, cfg: &PatchConfig) -> std::result::Result<PatchRun, Box<PatchAborted>> {
    let abort = |trace: Vec<PatchStep>, error: Error| Box::new(PatchAborted { trace, error });
    if let Err(e) = program.validate().and_then(|_| cfg.validate()) {
        return Err(abort(Vec::new(), e));
    }
    let mut trace: Vec<PatchStep> = Vec::new();
    for j in 1..=cfg.steps {
        let (source, repetition) = schedule(j as u64, program.discs.len());
        let disc = &program.discs[source - 1];
        let eps = cfg.epsilon(j);
        let step = match trace.last() {
            None => PatchStep {
                index: j,
                source,
                repetition,
                center: C64::new(0.0, 0.0),
                disc_radius: disc.radius,
                radius: disc.radius,
                epsilon: eps,
                shift: [C64::new(0.0, 0.0); 2],
                g1: disc.g1.clone(),
                g2: disc.g2.clone(),
                merge: None,
            },
            Some(prev) => {
                let center = C64::new(prev.radius + GAP + disc.radius, 0.0);
                let radius = center.re + disc.radius + cfg.margin;
                let shift = lattice_shift(&program.target, (&prev.g1, &prev.g2), disc, center);
                let (h1, h2) = translated(disc, center, shift);
                let first = Piece {
                    g1: prev.g1.clone(),
                    g2: prev.g2.clone(),
                    center: C64::new(0.0, 0.0),
                    radius: prev.radius,
                };
                let second = Piece {
                    g1: h1,
                    g2: h2,
                    center,
                    radius: disc.radius,
                };
                match merge_two_discs(&first, &second, radius, eps, &cfg.merge) {
                    Ok(m) => PatchStep {
                        index: j,
                        source,
                        repetition,
                        center,
                        disc_radius: disc.radius,
                        radius,
                        epsilon: eps,
                        shift,
                        g1: m.g1.clone(),
                        g2: m.g2.clone(),
                        merge: Some(m),
                    },
                    Err(e) => return Err(abort(trace, e)),
                }
            }
        };
        trace.push(step);
    }
    let last = trace.last().expect("at least one step");
    let fin = (&last.g1, &last.g2);
    let deviations = trace
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let disc = &program.discs[s.source - 1];
            let (h1, h2) = translated(disc, s.center, s.shift);
            let sampled = sampled_deviation(fin, (&h1, &h2), s.center, s.disc_radius, cfg.check_samples);
            let bound = s.epsilon + trace[k + 1..].iter().map(|t| t.epsilon).sum::<f64>();
            Deviation {
                index: s.index,
                source: s.source,
                sampled,
                bound,
                holds: sampled <= bound,
            }
        })
        .collect();
    Ok(PatchRun { trace, deviations })
}
