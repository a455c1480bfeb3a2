//! Nevanlinna and Ahlfors functionals of holomorphic discs in `E₁ × E₂`.
//!
//! Everything integrates the pullback density `δ = |G₁'|² + |G₂'|²` of the
//! flat form, or its square root, over polar grids from [`crate::quad`].
//! Values are accumulated in extended range since twisted maps reach moduli far
//! beyond `f64`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ext::{Big, XReal};
use crate::holo::{HoloFunc, C64};
use crate::quad::{self, QuadSpec, Rule};
use crate::torus::{ProductTarget, TorusPoint, TubeNbhd};

/// Lifts beyond this modulus cannot be reduced modulo a lattice in `f64`.
const REDUCIBLE: f64 = 4_503_599_627_370_496.0; // 2^52

/// A holomorphic disc `F = (G₁, G₂) : D̄_R → ℂ²`, read in `E₁ × E₂`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapDisc {
    pub g1: HoloFunc,
    pub g2: HoloFunc,
    pub radius: f64,
    pub target: ProductTarget,
    /// Angles where the density is known to peak; the angular grid is graded
    /// toward them.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub foci: Vec<f64>,
}

impl MapDisc {
    pub fn new(g1: HoloFunc, g2: HoloFunc, radius: f64, target: ProductTarget) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::param(format!("disc radius must be positive, got {radius}")));
        }
        let reach = g1.validity_radius().min(g2.validity_radius());
        if radius >= reach {
            return Err(Error::Domain {
                point: format!("|z| = {radius}"),
                radius: reach,
            });
        }
        if g1.is_constant() && g2.is_constant() {
            return Err(Error::Degenerate("both coordinates are constant".into()));
        }
        Ok(MapDisc {
            g1,
            g2,
            radius,
            target,
            foci: Vec::new(),
        })
    }

    pub fn with_foci(mut self, foci: Vec<f64>) -> Self {
        self.foci = foci;
        self
    }

    pub fn coordinate(&self, i: usize) -> &HoloFunc {
        if i == 0 {
            &self.g1
        } else {
            &self.g2
        }
    }

    fn degree(&self) -> u64 {
        self.g1.degree().max(self.g2.degree())
    }

    fn sample(&self, z: C64) -> Sample {
        let (v1, d1) = self.g1.expr().jet(z);
        let (v2, d2) = self.g2.expr().jet(z);
        let delta = d1.norm_sqr() + d2.norm_sqr();
        Sample {
            delta,
            root: delta.sqrt(),
            lifts: [resolve(v1), resolve(v2)],
        }
    }

    fn project(&self, lifts: &[Option<C64>; 2]) -> Option<(TorusPoint, TorusPoint)> {
        match lifts {
            [Some(w1), Some(w2)] => Some(self.target.project(*w1, *w2)),
            _ => None,
        }
    }

    /// Image point in `E₁ × E₂`, if the lifts are small enough to reduce.
    pub fn image(&self, z: C64) -> Option<(TorusPoint, TorusPoint)> {
        self.project(&[resolve(self.g1.expr().eval_big(z)), resolve(self.g2.expr().eval_big(z))])
    }

    pub fn density(&self, z: C64) -> XReal {
        self.sample(z).delta
    }
}

fn resolve(v: Big) -> Option<C64> {
    let w = v.to_c64();
    (w.norm() < REDUCIBLE).then_some(w)
}

struct Sample {
    delta: XReal,
    root: XReal,
    lifts: [Option<C64>; 2],
}

/// A bounded weight `0 ≤ ψ ≤ 1` on `E₁ × E₂`.
///
/// `None` stands for an image point whose lifts are too large to reduce.
pub trait Weight: Sync {
    fn weight(&self, x: Option<(&TorusPoint, &TorusPoint)>) -> f64;
}

impl Weight for f64 {
    fn weight(&self, _: Option<(&TorusPoint, &TorusPoint)>) -> f64 {
        *self
    }
}

/// Indicator of a tube; unresolvable points count as outside.
#[derive(Clone, Copy, Debug)]
pub struct TubeIndicator(pub TubeNbhd);

impl Weight for TubeIndicator {
    fn weight(&self, x: Option<(&TorusPoint, &TorusPoint)>) -> f64 {
        match x {
            Some(x) if self.0.contains(x).unwrap_or(false) => 1.0,
            _ => 0.0,
        }
    }
}

/// Weight given by a closure on resolved points and a constant elsewhere.
pub struct FnWeight<F> {
    pub f: F,
    pub unresolved: f64,
}

impl<F: Fn(&TorusPoint, &TorusPoint) -> f64 + Sync> Weight for FnWeight<F> {
    fn weight(&self, x: Option<(&TorusPoint, &TorusPoint)>) -> f64 {
        match x {
            Some((a, b)) => (self.f)(a, b),
            None => self.unresolved,
        }
    }
}

/// Tube membership only looks at the tube's own factor, so a huge lift in the
/// other coordinate does not matter.
fn outside(tube: Option<&TubeNbhd>, lifts: &[Option<C64>; 2]) -> bool {
    match tube {
        None => false,
        Some(t) => match lifts[t.factor.index()] {
            Some(w) => !t.contains_lift(w),
            None => true,
        },
    }
}

/// Area-type sums over the disc.
#[derive(Clone, Copy, Debug, Default)]
struct AreaSums {
    t: XReal,
    l: XReal,
    area: XReal,
    masked_t: XReal,
    masked_area: XReal,
    weighted_t: XReal,
}

impl AreaSums {
    fn add(self, o: AreaSums) -> AreaSums {
        AreaSums {
            t: self.t + o.t,
            l: self.l + o.l,
            area: self.area + o.area,
            masked_t: self.masked_t + o.masked_t,
            masked_area: self.masked_area + o.masked_area,
            weighted_t: self.weighted_t + o.weighted_t,
        }
    }
}

struct Grids {
    radial: Rule,
    angular: Rule,
}

fn grids(md: &MapDisc, spec: &QuadSpec) -> Result<Grids> {
    spec.validate()?;
    let d = md.degree();
    Ok(Grids {
        radial: quad::radial_rule(md.radius, d, spec),
        angular: quad::angular_rule(d, &md.foci, spec),
    })
}

/// One pass over the tensor grid. Rows are computed in parallel and summed in
/// radial order, so results do not depend on the thread count.
fn area_sums(md: &MapDisc, g: &Grids, tube: Option<&TubeNbhd>, psi: Option<&dyn Weight>) -> Result<AreaSums> {
    let r_big = md.radius;
    let rows: Vec<Result<AreaSums>> = g
        .radial
        .nodes
        .par_iter()
        .zip(g.radial.weights.par_iter())
        .map(|(&r, &wr)| {
            let mut ring = AreaSums::default();
            for (&th, &wt) in g.angular.nodes.iter().zip(&g.angular.weights) {
                let s = md.sample(C64::from_polar(r, th));
                let area = s.delta.scale(wt);
                ring.area = ring.area + area;
                ring.l = ring.l + s.root.scale(wt);
                if outside(tube, &s.lifts) {
                    ring.masked_area = ring.masked_area + area;
                }
                if let Some(psi) = psi {
                    let point = md.project(&s.lifts);
                    let v = psi.weight(point.as_ref().map(|(a, b)| (a, b)));
                    if !(0.0..=1.0).contains(&v) {
                        return Err(Error::param(format!("weight value {v} outside [0, 1]")));
                    }
                    ring.weighted_t = ring.weighted_t + area.scale(v);
                }
            }
            let kernel = (r_big / r).ln();
            Ok(AreaSums {
                t: ring.area.scale(wr * r * kernel),
                l: ring.l.scale(wr),
                area: ring.area.scale(wr * r),
                masked_t: ring.masked_area.scale(wr * r * kernel),
                masked_area: ring.masked_area.scale(wr * r),
                weighted_t: ring.weighted_t.scale(wr * r * kernel),
            })
        })
        .collect();
    let mut total = AreaSums::default();
    for row in rows {
        total = total.add(row?);
    }
    Ok(total)
}

fn boundary_length_with(md: &MapDisc, g: &Grids) -> XReal {
    let terms: Vec<XReal> = g
        .angular
        .nodes
        .par_iter()
        .zip(g.angular.weights.par_iter())
        .map(|(&th, &wt)| md.sample(C64::from_polar(md.radius, th)).root.scale(wt * md.radius))
        .collect();
    terms.into_iter().fold(XReal::ZERO, |a, b| a + b)
}

/// `A(t) = ∫_{D_t} δ dA`.
fn disc_area(md: &MapDisc, t: f64, angular: &Rule, spec: &QuadSpec) -> XReal {
    let radial = quad::radial_rule(t, md.degree(), spec);
    let rows: Vec<XReal> = radial
        .nodes
        .par_iter()
        .zip(radial.weights.par_iter())
        .map(|(&r, &wr)| {
            let mut ring = XReal::ZERO;
            for (&th, &wt) in angular.nodes.iter().zip(&angular.weights) {
                ring = ring + md.sample(C64::from_polar(r, th)).delta.scale(wt);
            }
            ring.scale(wr * r)
        })
        .collect();
    rows.into_iter().fold(XReal::ZERO, |a, b| a + b)
}

/// Both evaluations of the Nevanlinna mass `T_f(ω)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NevanlinnaT {
    /// `∫_{D_R} log(R/|z|) δ dA`.
    pub log_kernel: XReal,
    /// `∫_0^R dt/t ∫_{D_t} δ dA`, by Simpson's rule in `u = log t`.
    pub nested: XReal,
    pub relative_gap: f64,
}

/// Nested form of `T`. The inner cutoff `t₀` is compensated by `A(t₀)/2`,
/// exact for densities constant near the origin.
fn nested_t(md: &MapDisc, spec: &QuadSpec) -> XReal {
    // The nested integral evaluates the disc area at every log node, so it runs
    // on the smallest grid that is still exact for the polynomial integrand.
    let d = md.degree();
    let inner = QuadSpec {
        radial: quad::MIN_RADIAL.max(spec.order * 2),
        ..spec.clone()
    };
    let angular = quad::angular_rule(d, &md.foci, &QuadSpec {
        angular: quad::MIN_ANGULAR,
        ..spec.clone()
    });
    let r = md.radius;
    let u0 = (r * spec.inner_cutoff).ln();
    let u1 = r.ln();
    let rule = quad::simpson(u0, u1, spec.log_nodes);
    let mut acc = XReal::ZERO;
    for (&u, &w) in rule.nodes.iter().zip(&rule.weights) {
        acc = acc + disc_area(md, u.exp(), &angular, &inner).scale(w);
    }
    acc + disc_area(md, r * spec.inner_cutoff, &angular, &inner).scale(0.5)
}

fn rel_gap(a: XReal, b: XReal) -> f64 {
    let m = a.abs().max(b.abs());
    if m.is_zero() {
        0.0
    } else {
        (a - b).abs().div(m).to_f64()
    }
}

pub fn nevanlinna_t(md: &MapDisc, spec: &QuadSpec) -> Result<NevanlinnaT> {
    let g = grids(md, spec)?;
    let log_kernel = area_sums(md, &g, None, None)?.t;
    let nested = nested_t(md, spec);
    Ok(NevanlinnaT {
        log_kernel,
        nested,
        relative_gap: rel_gap(log_kernel, nested),
    })
}

/// `L_f(ω) = ∫_0^R ∫_0^{2π} √δ(t e^{iθ}) dθ dt`.
pub fn nevanlinna_l(md: &MapDisc, spec: &QuadSpec) -> Result<XReal> {
    let g = grids(md, spec)?;
    Ok(area_sums(md, &g, None, None)?.l)
}

/// Ahlfors area `∫_{D_R} δ dA` and boundary length `∫ √δ(R e^{iθ}) R dθ`.
pub fn ahlfors_pair(md: &MapDisc, spec: &QuadSpec) -> Result<(XReal, XReal)> {
    let g = grids(md, spec)?;
    Ok((area_sums(md, &g, None, None)?.area, boundary_length_with(md, &g)))
}

/// `T` and area restricted to points whose image lies outside the tube.
pub fn masked_masses(md: &MapDisc, tube: &TubeNbhd, spec: &QuadSpec) -> Result<(XReal, XReal)> {
    let g = grids(md, spec)?;
    let s = area_sums(md, &g, Some(tube), None)?;
    Ok((s.masked_t, s.masked_area))
}

/// `Φ_f(ψ ω) = T_f(ψ ω) / T_f(ω)`.
pub fn normalized_eval(md: &MapDisc, psi: &dyn Weight, spec: &QuadSpec) -> Result<f64> {
    let g = grids(md, spec)?;
    let s = area_sums(md, &g, None, Some(psi))?;
    if s.t.is_zero() {
        return Err(Error::Degenerate("T vanishes".into()));
    }
    Ok(s.weighted_t.div(s.t).to_f64())
}

/// All current data of a disc, with the four concentration ratios.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurrentReport {
    pub radius: f64,
    pub t: XReal,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_nested: Option<XReal>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fubini_gap: Option<f64>,
    pub l: XReal,
    pub ahlfors_area: XReal,
    pub boundary_length: XReal,
    pub masked_t: XReal,
    pub masked_area: XReal,
    pub l_over_t: f64,
    pub boundary_over_area: f64,
    pub masked_t_ratio: f64,
    pub masked_area_ratio: f64,
    pub grid: [usize; 2],
}

impl CurrentReport {
    /// The four ratios in the order L/T, boundary/area, masked T, masked area.
    pub fn ratios(&self) -> [f64; 4] {
        [
            self.l_over_t,
            self.boundary_over_area,
            self.masked_t_ratio,
            self.masked_area_ratio,
        ]
    }

    pub fn max_ratio(&self) -> f64 {
        self.ratios().into_iter().fold(0.0, f64::max)
    }

    /// True when every ratio is strictly below `tau`.
    pub fn below(&self, tau: f64) -> bool {
        self.ratios().iter().all(|&r| r < tau)
    }

    pub const CSV_HEADER: &'static str =
        "radius,T,L,area,boundary,masked_T,masked_area,L_over_T,boundary_over_area,masked_T_ratio,masked_area_ratio";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{:e},{:e},{:e},{:e}",
            self.radius,
            self.t,
            self.l,
            self.ahlfors_area,
            self.boundary_length,
            self.masked_t,
            self.masked_area,
            self.l_over_t,
            self.boundary_over_area,
            self.masked_t_ratio,
            self.masked_area_ratio
        )
    }
}

fn ratio(a: XReal, b: XReal) -> f64 {
    a.div(b).to_f64()
}

/// Assembles every functional in a single grid pass.
pub fn report(md: &MapDisc, tube: Option<&TubeNbhd>, spec: &QuadSpec) -> Result<CurrentReport> {
    let g = grids(md, spec)?;
    let s = area_sums(md, &g, tube, None)?;
    let boundary = boundary_length_with(md, &g);
    if s.t.is_zero() || s.area.is_zero() {
        return Err(Error::Degenerate("T or the Ahlfors area vanishes".into()));
    }
    let (t_nested, fubini_gap) = if spec.nested {
        let n = nested_t(md, spec);
        (Some(n), Some(rel_gap(s.t, n)))
    } else {
        (None, None)
    };
    Ok(CurrentReport {
        radius: md.radius,
        t: s.t,
        t_nested,
        fubini_gap,
        l: s.l,
        ahlfors_area: s.area,
        boundary_length: boundary,
        masked_t: s.masked_t,
        masked_area: s.masked_area,
        l_over_t: ratio(s.l, s.t),
        boundary_over_area: ratio(boundary, s.area),
        masked_t_ratio: ratio(s.masked_t, s.t),
        masked_area_ratio: ratio(s.masked_area, s.area),
        grid: [g.radial.len(), g.angular.len()],
    })
}
