//! Step-wise synthesis of an entire curve `ℂ → E₁ × E₂`.
//!
//! Starting from a polynomial seed on the unit disc, odd steps anchor the
//! first coordinate at a point of the dense sequence in `E₁` and twist the
//! second coordinate by an oscillation factor peaking there; even steps swap
//! the roles. Each step picks its exponent by a doubling sweep against the
//! measured concentration ratios, checks a stability budget with random
//! perturbations and records everything in a serializable trace.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::currents::{report, CurrentReport, MapDisc};
use crate::error::{Error, Result};
use crate::ext::{Big, XReal};
use crate::holo::{find_preimage_nearest, taylor_truncate, DiscDomain, HoloFunc, PreimageSearch, C64};
use crate::peaking::{exceptional_cap_radius, make_h, make_peaking, witness_disc, PeakingFunction, WitnessDisc};
use crate::quad::{self, QuadSpec};
use crate::torus::{Factor, ProductTarget, TorusPoint, TubeNbhd};

/// `scale · ratio^ℓ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub scale: f64,
    pub ratio: f64,
}

impl Schedule {
    pub const fn halving() -> Self {
        Schedule { scale: 1.0, ratio: 0.5 }
    }

    pub fn at(&self, step: usize) -> f64 {
        self.scale * self.ratio.powi(step as i32)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnchorConfig {
    /// Initial width of the search annulus beyond `R + 1`.
    pub width: f64,
    /// Factor by which the annulus width grows after a miss.
    pub growth: f64,
    /// Give up beyond this radius.
    pub r_max: f64,
    /// Anchors must be quiet: `|Ĝ'| ≤ max_derivative` there.
    pub max_derivative: f64,
    pub cell: f64,
}

impl Default for AnchorConfig {
    fn default() -> Self {
        AnchorConfig {
            width: 1.0,
            growth: 2.0,
            r_max: 64.0,
            max_derivative: 4.0,
            cell: 0.25,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedPair {
    pub g1: HoloFunc,
    pub g2: HoloFunc,
}

impl Default for SeedPair {
    fn default() -> Self {
        SeedPair {
            g1: HoloFunc::identity(),
            g2: HoloFunc::poly_real(&[1.0, 1.0]),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub target: ProductTarget,
    pub steps: usize,
    pub seeds: SeedPair,
    /// Ratio thresholds `τ_ℓ`.
    pub threshold: Schedule,
    /// Tube radii `ρ_ℓ`.
    pub tube_radius: Schedule,
    /// Cap radius of the peaking function as a fraction of `R_ℓ`.
    pub cap_fraction: f64,
    /// Drift budget divisor: each step may move the map by `3ε/divisor`.
    pub runge_divisor: f64,
    pub m_start: u64,
    pub m_cap: u64,
    pub quad: QuadSpec,
    pub anchor: AnchorConfig,
    pub probes: usize,
    pub probe_degree: usize,
    pub drift_samples: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            target: ProductTarget::default(),
            steps: 2,
            seeds: SeedPair::default(),
            threshold: Schedule::halving(),
            tube_radius: Schedule::halving(),
            cap_fraction: 0.45,
            runge_divisor: 2023.0,
            m_start: 2,
            m_cap: 1 << 20,
            quad: QuadSpec {
                nested: false,
                ..QuadSpec::default()
            },
            anchor: AnchorConfig::default(),
            probes: 32,
            probe_degree: 4,
            drift_samples: 4096,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.threshold.scale > 0.0 && self.threshold.ratio > 0.0 && self.threshold.ratio < 1.0) {
            return bad("thresholds must be positive and strictly decreasing".into());
        }
        if !(self.tube_radius.scale > 0.0 && self.tube_radius.ratio > 0.0) {
            return bad("tube radii must be positive".into());
        }
        if !(self.cap_fraction > 0.0 && self.cap_fraction < 0.5) {
            return bad(format!("cap fraction {} outside (0, 1/2)", self.cap_fraction));
        }
        if !(self.runge_divisor >= 3.0) {
            return bad(format!("divisor {} below 3", self.runge_divisor));
        }
        if self.m_start == 0 || self.m_cap < self.m_start {
            return bad(format!("bad exponent range {}..{}", self.m_start, self.m_cap));
        }
        if self.drift_samples < 16 {
            return bad("need at least 16 drift samples".into());
        }
        let a = &self.anchor;
        if !(a.width > 0.0 && a.growth > 1.0 && a.r_max > 2.0 && a.cell > 0.0 && a.max_derivative > 0.0) {
            return bad("bad anchor search settings".into());
        }
        self.quad.validate().map_err(|e| Error::Config(e.to_string()))?;
        for (name, g) in [("g1", &self.seeds.g1), ("g2", &self.seeds.g2)] {
            if g.is_constant() {
                return bad(format!("seed {name} is constant"));
            }
            if g.validity_radius() <= 2.0 {
                return bad(format!("seed {name} must be valid beyond radius 2"));
            }
        }
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: SynthConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Anchor and tube factor of step `ℓ`, and the coordinate that is twisted.
pub fn parity(step: usize) -> (Factor, Factor) {
    if step % 2 == 1 {
        (Factor::First, Factor::Second)
    } else {
        (Factor::Second, Factor::First)
    }
}

/// The point of `E_i` that step `ℓ` aims at.
pub fn e_point(target: &ProductTarget, step: usize) -> Result<TorusPoint> {
    let (factor, _) = parity(step);
    target.lattice(factor).dense_sequence(step.div_ceil(2) as u64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    #[serde(rename = "M")]
    pub m: u64,
    pub ratios: [f64; 4],
    pub t: XReal,
    pub area: XReal,
    pub audit_lower: XReal,
    pub audit_holds: bool,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub z: C64,
    pub lift: C64,
    pub residual: f64,
    pub torus_distance: f64,
    pub derivative: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeTrial {
    pub epsilon: f64,
    pub passed: bool,
    /// Largest ratio seen over the probes that ran.
    pub worst_ratio: f64,
}

/// What happened at one synthesis step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub factor: Factor,
    pub twisted: Factor,
    pub e_point: TorusPoint,
    pub anchor: Anchor,
    pub peak: PeakingFunction,
    pub cap_radius: f64,
    pub witness: WitnessDisc,
    pub tube: TubeNbhd,
    pub threshold: f64,
    #[serde(rename = "M")]
    pub m: u64,
    pub runge_error: f64,
    pub before: CurrentReport,
    pub after: CurrentReport,
    pub sweep: Vec<SweepRow>,
    pub probes: Vec<ProbeTrial>,
    pub epsilon: f64,
    /// Sampled sup of `‖F_ℓ - F_{ℓ-1}‖` on the previous disc.
    pub drift: f64,
    pub drift_bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepState {
    pub index: usize,
    pub g1: HoloFunc,
    pub g2: HoloFunc,
    pub radius: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record: Option<StepRecord>,
}

impl StepState {
    pub fn coordinate(&self, f: Factor) -> &HoloFunc {
        match f {
            Factor::First => &self.g1,
            Factor::Second => &self.g2,
        }
    }

    /// Angles of every peak planted so far.
    fn foci(trace: &[StepState]) -> Vec<f64> {
        trace.iter().filter_map(|s| s.record.as_ref().map(|r| r.peak.theta0)).collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpsilonLedger {
    pub divisor: f64,
    /// `ε_0 = 1, ε_1, …`.
    pub epsilons: Vec<f64>,
}

impl EpsilonLedger {
    pub fn new(divisor: f64) -> Self {
        EpsilonLedger {
            divisor,
            epsilons: vec![1.0],
        }
    }

    /// `Σ_{j ≥ ℓ} 3ε_j / divisor` over the recorded budgets.
    pub fn drift_bound(&self, step: usize) -> f64 {
        self.epsilons.iter().skip(step).map(|e| 3.0 * e / self.divisor).sum()
    }

    /// `ε_ℓ < ε_{ℓ-1}/2` and positivity.
    pub fn is_consistent(&self) -> bool {
        self.epsilons.iter().all(|&e| e > 0.0) && self.epsilons.windows(2).all(|w| w[1] < 0.5 * w[0])
    }
}

/// Sampled drift of the final map from each intermediate map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalDrift {
    pub index: usize,
    pub radius: f64,
    pub sampled: f64,
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthRun {
    pub trace: Vec<StepState>,
    pub ledger: EpsilonLedger,
    pub final_drift: Vec<FinalDrift>,
}

impl SynthRun {
    pub fn final_map(&self) -> &StepState {
        self.trace.last().expect("trace holds step 0")
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Sweep table of every step.
    pub fn sweep_csv(&self) -> String {
        let mut out = String::from(
            "step,M,L_over_T,boundary_over_area,masked_T_ratio,masked_area_ratio,T,area,audit_lower,audit_holds,passed\n",
        );
        for s in &self.trace {
            if let Some(r) = &s.record {
                for row in &r.sweep {
                    out.push_str(&sweep_line(s.index, row));
                }
            }
        }
        out
    }
}

fn sweep_line(step: usize, row: &SweepRow) -> String {
    format!(
        "{},{},{:e},{:e},{:e},{:e},{},{},{},{},{}\n",
        step,
        row.m,
        row.ratios[0],
        row.ratios[1],
        row.ratios[2],
        row.ratios[3],
        row.t,
        row.area,
        row.audit_lower,
        row.audit_holds,
        row.passed
    )
}

/// A run that stopped early, with everything computed before the failure.
#[derive(Debug)]
pub struct Aborted {
    pub trace: Vec<StepState>,
    pub ledger: EpsilonLedger,
    pub error: Error,
}

impl Aborted {
    pub fn is_threshold_unmet(&self) -> bool {
        matches!(self.error, Error::ThresholdUnmet { .. })
    }
}

pub fn step0(cfg: &SynthConfig) -> Result<StepState> {
    cfg.validate()?;
    Ok(StepState {
        index: 0,
        g1: cfg.seeds.g1.clone(),
        g2: cfg.seeds.g2.clone(),
        radius: 1.0,
        record: None,
    })
}

/// Certified polynomial replacement of both coordinates on `D̄_R`.
///
/// Expression trees built from polynomial atoms are already entire
/// polynomials and pass through unchanged with error 0.
pub fn runge_step(state: &StepState, cfg: &SynthConfig, eps: f64) -> Result<(HoloFunc, HoloFunc, f64)> {
    if !(eps > 0.0) {
        return Err(Error::param(format!("runge tolerance must be positive, got {eps}")));
    }
    let tol = eps / cfg.runge_divisor;
    let mut out = Vec::with_capacity(2);
    let mut err: f64 = 0.0;
    for g in [&state.g1, &state.g2] {
        if g.validity_radius().is_infinite() {
            out.push(g.clone());
            continue;
        }
        let margin = (0.5 * (state.radius + g.validity_radius())).min(2.0 * state.radius);
        let t = taylor_truncate(g, &DiscDomain::new(C64::new(0.0, 0.0), state.radius, margin)?, tol)?;
        if t.poly.is_constant() {
            return Err(Error::Degenerate("truncation produced a constant coordinate".into()));
        }
        err = err.max(t.error_bound);
        out.push(t.poly);
    }
    let g2 = out.pop().expect("two coordinates");
    let g1 = out.pop().expect("two coordinates");
    Ok((g1, g2, err))
}

/// Nearest point of the coset `e + Λ` to `w`.
fn coset_nearest(e: &TorusPoint) -> impl Fn(C64) -> C64 + '_ {
    move |w: C64| {
        if !(w.re.is_finite() && w.im.is_finite()) {
            return w;
        }
        e.rep + e.lattice.nearest_point(w - e.rep)
    }
}

/// An anchor `z` with `|z| > R + 1` and `g(z) ≡ e` in the torus.
pub fn find_anchor(g: &HoloFunc, prev_radius: f64, e: &TorusPoint, cfg: &SynthConfig) -> Result<Anchor> {
    if g.is_constant() {
        return Err(Error::Degenerate("anchor coordinate is constant".into()));
    }
    let a = &cfg.anchor;
    let search = PreimageSearch {
        cell: a.cell,
        max_derivative: Some(a.max_derivative),
        ..PreimageSearch::default()
    };
    let nearest = coset_nearest(e);
    let r_min = prev_radius + 1.0;
    let mut width = a.width;
    loop {
        let r_max = (r_min + width).min(a.r_max);
        match find_preimage_nearest(g, &nearest, r_min, r_max, &search) {
            Ok(p) => {
                let torus_distance = e.dist(&e.lattice.reduce(g.eval(p.z)?))?;
                return Ok(Anchor {
                    z: p.z,
                    lift: p.w,
                    residual: p.residual,
                    torus_distance,
                    derivative: p.derivative,
                });
            }
            Err(Error::NotFound(_)) if r_max < a.r_max => width *= a.growth,
            Err(Error::NotFound(msg)) => {
                return Err(Error::NotFound(format!(
                    "no quiet anchor below radius {}: {msg}",
                    a.r_max
                )))
            }
            Err(e) => return Err(e),
        }
    }
}

fn twisted_map(state: &StepState, twisted: Factor, h: &HoloFunc) -> (HoloFunc, HoloFunc) {
    match twisted {
        Factor::First => (&state.g1 * h, state.g2.clone()),
        Factor::Second => (state.g1.clone(), &state.g2 * h),
    }
}

/// `∫_{D(c, r)} δ dA` on its own polar rule.
fn witness_area(md: &MapDisc, w: &WitnessDisc) -> XReal {
    let spec = QuadSpec::default();
    let radial = quad::Rule::composite(&[0.0, 0.25 * w.radius, 0.5 * w.radius, 0.75 * w.radius, w.radius], spec.order);
    let angular = quad::Rule::periodic(128, 0.0);
    let mut acc = XReal::ZERO;
    for (&r, &wr) in radial.nodes.iter().zip(&radial.weights) {
        let mut ring = XReal::ZERO;
        for (&t, &wt) in angular.nodes.iter().zip(&angular.weights) {
            ring = ring + md.density(w.center + C64::from_polar(r, t)).scale(wt);
        }
        acc = acc + ring.scale(wr * r);
    }
    acc
}

/// The witness lower bound `T ≥ A_w · log(R / (|c| + r))`.
pub fn audit_lower_bound(md: &MapDisc, w: &WitnessDisc) -> XReal {
    witness_area(md, w).scale((md.radius / (w.center.norm() + w.radius)).ln())
}


/// Everything fixed for a step before the exponent is chosen.
pub struct StepSetup<'a> {
    pub state: &'a StepState,
    pub target: ProductTarget,
    pub twisted: Factor,
    pub radius: f64,
    pub peak: PeakingFunction,
    pub witness: WitnessDisc,
    pub tube: TubeNbhd,
    pub threshold: f64,
    pub foci: Vec<f64>,
}

impl StepSetup<'_> {
    /// The candidate map with oscillation exponent `m`.
    pub fn map(&self, m: u64) -> Result<MapDisc> {
        let h = make_h(&self.peak, m)?;
        let (g1, g2) = twisted_map(self.state, self.twisted, &h);
        Ok(MapDisc::new(g1, g2, self.radius, self.target)?.with_foci(self.foci.clone()))
    }
}

/// Doubling sweep over the exponent. Returns the first `M` whose four ratios
/// fall below the threshold, its report and the sweep log.
pub fn select_m(setup: &StepSetup, cfg: &SynthConfig, step: usize) -> Result<(u64, CurrentReport, Vec<SweepRow>)> {
    let mut rows = Vec::new();
    let mut m = cfg.m_start;
    loop {
        let md = setup.map(m)?;
        let rep = report(&md, Some(&setup.tube), &cfg.quad)?;
        let lower = audit_lower_bound(&md, &setup.witness);
        let passed = rep.below(setup.threshold);
        rows.push(SweepRow {
            m,
            ratios: rep.ratios(),
            t: rep.t,
            area: rep.ahlfors_area,
            audit_lower: lower,
            audit_holds: lower <= rep.t,
            passed,
        });
        if passed {
            return Ok((m, rep, rows));
        }
        match m.checked_mul(2) {
            Some(next) if next <= cfg.m_cap => m = next,
            _ => {
                let log: Vec<String> = rows.iter().map(|r| format!("M={} ratios={:?}", r.m, r.ratios)).collect();
                return Err(Error::ThresholdUnmet {
                    step,
                    detail: format!("sweep reached the cap {}; {}", cfg.m_cap, log.join("; ")),
                });
            }
        }
    }
}

/// Random polynomial of degree at most `degree` with sup at most `eps` on
/// `D̄_R`, certified by the coefficient bound `Σ |c_k| R^k`.
pub fn random_perturbation(rng: &mut ChaCha8Rng, degree: usize, radius: f64, eps: f64) -> HoloFunc {
    let d = rng.gen_range(0..=degree);
    let coeffs: Vec<C64> = (0..=d)
        .map(|_| C64::from_polar(rng.gen_range(0.0..1.0), rng.gen_range(0.0..TAU)))
        .collect();
    let bound: f64 = coeffs.iter().enumerate().map(|(k, c)| c.norm() * radius.powi(k as i32)).sum();
    let s = if bound > 0.0 { eps / bound } else { 0.0 };
    HoloFunc::poly(coeffs.into_iter().map(|c| c * s).collect())
}

/// Runs the perturbation probes at budget `eps` against the relaxed threshold
/// `2τ` and the doubled tube. Stops at the first failing probe.
pub fn stability_probe(
    md: &MapDisc,
    tube: &TubeNbhd,
    threshold: f64,
    eps: f64,
    cfg: &SynthConfig,
    rng: &mut ChaCha8Rng,
) -> Result<ProbeTrial> {
    let relaxed = 2.0 * threshold;
    let wide = tube.doubled();
    let mut worst: f64 = 0.0;
    if eps == 0.0 || cfg.probes == 0 {
        let rep = report(md, Some(&wide), &cfg.quad)?;
        return Ok(ProbeTrial {
            epsilon: eps,
            passed: rep.below(relaxed),
            worst_ratio: rep.max_ratio(),
        });
    }
    for _ in 0..cfg.probes {
        let p1 = random_perturbation(rng, cfg.probe_degree, md.radius, eps);
        let p2 = random_perturbation(rng, cfg.probe_degree, md.radius, eps);
        let probe = MapDisc::new(&md.g1 + &p1, &md.g2 + &p2, md.radius, md.target)?.with_foci(md.foci.clone());
        let rep = report(&probe, Some(&wide), &cfg.quad)?;
        worst = worst.max(rep.max_ratio());
        if !rep.below(relaxed) {
            return Ok(ProbeTrial {
                epsilon: eps,
                passed: false,
                worst_ratio: worst,
            });
        }
    }
    Ok(ProbeTrial {
        epsilon: eps,
        passed: true,
        worst_ratio: worst,
    })
}

/// Largest passing budget among `ε_prev / 4, ε_prev / 8, …`.
fn choose_epsilon(
    md: &MapDisc,
    tube: &TubeNbhd,
    threshold: f64,
    eps_prev: f64,
    cfg: &SynthConfig,
    rng: &mut ChaCha8Rng,
    step: usize,
) -> Result<(f64, Vec<ProbeTrial>)> {
    let mut trials = Vec::new();
    let mut eps = 0.25 * eps_prev;
    for _ in 0..40 {
        let t = stability_probe(md, tube, threshold, eps, cfg, rng)?;
        let ok = t.passed;
        trials.push(t);
        if ok {
            return Ok((eps, trials));
        }
        eps *= 0.5;
    }
    Err(Error::ThresholdUnmet {
        step,
        detail: format!("no perturbation budget down to {eps:e} passes the relaxed thresholds"),
    })
}

/// `F_ℓ - F_{ℓ-1}` at `z`: the twisted coordinate times `X^M`.
fn increment(prev: &StepState, rec: &StepRecord, z: C64) -> (Big, Big) {
    let x = Big::new(rec.peak.eval(z)).powu(rec.m);
    let d = prev.coordinate(rec.twisted).expr().eval_big(z) * x;
    match rec.twisted {
        Factor::First => (d, Big::default()),
        Factor::Second => (Big::default(), d),
    }
}

fn pair_norm(a: Big, b: Big) -> f64 {
    (a.norm_sqr() + b.norm_sqr()).sqrt().to_f64()
}

fn circle(radius: f64, n: usize) -> impl Iterator<Item = C64> {
    (0..n).map(move |k| C64::from_polar(radius, TAU * k as f64 / n as f64))
}

/// Sup over `n` samples of `|z| = R_ℓ` of `‖F_final - F_ℓ‖`, summing the
/// structural increments instead of subtracting the two maps.
pub fn sampled_drift(trace: &[StepState], from: usize, n: usize) -> f64 {
    let r = trace[from].radius;
    circle(r, n)
        .map(|z| {
            let mut acc = (Big::default(), Big::default());
            for j in from + 1..trace.len() {
                if let Some(rec) = &trace[j].record {
                    let (a, b) = increment(&trace[j - 1], rec, z);
                    acc = (acc.0 + a, acc.1 + b);
                }
            }
            pair_norm(acc.0, acc.1)
        })
        .fold(0.0, f64::max)
}

/// Executes step `ℓ ≥ 1` from the previous state.
pub fn run_step(
    prev: &StepState,
    foci_prev: &[f64],
    ledger: &EpsilonLedger,
    cfg: &SynthConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(StepState, f64)> {
    let step = prev.index + 1;
    let eps_prev = *ledger.epsilons.last().expect("ε_0 is recorded");
    let (g1, g2, runge_error) = runge_step(prev, cfg, eps_prev)?;
    let base = StepState {
        index: prev.index,
        g1,
        g2,
        radius: prev.radius,
        record: None,
    };
    let (factor, twisted) = parity(step);
    let e = e_point(&cfg.target, step)?;
    let anchor = find_anchor(base.coordinate(factor), prev.radius, &e, cfg)?;
    let radius = anchor.z.norm();
    let theta0 = anchor.z.arg();
    let peak = make_peaking(radius, theta0, cfg.cap_fraction * radius)?;
    let witness = witness_disc(&peak, base.coordinate(twisted), radius, peak.peak_value())?;
    let lattice = cfg.target.lattice(factor);
    let center = lattice.reduce(base.coordinate(factor).eval(anchor.z)?);
    let tube = TubeNbhd::new(factor, center, cfg.tube_radius.at(step))?;
    let threshold = cfg.threshold.at(step);
    let mut foci = foci_prev.to_vec();
    foci.push(theta0);

    let before_md = MapDisc::new(base.g1.clone(), base.g2.clone(), radius, cfg.target)?.with_foci(foci.clone());
    let before = report(&before_md, Some(&tube), &cfg.quad)?;

    let setup = StepSetup {
        state: &base,
        target: cfg.target,
        twisted,
        radius,
        peak,
        witness,
        tube,
        threshold,
        foci,
    };
    let (m, after, sweep) = select_m(&setup, cfg, step)?;
    if let Some(bad) = sweep.iter().find(|r| !r.audit_holds) {
        return Err(Error::Approximation(format!(
            "witness lower bound {} exceeds T = {} at M = {}",
            bad.audit_lower, bad.t, bad.m
        )));
    }
    let md = setup.map(m)?;
    let (epsilon, probes) = choose_epsilon(&md, &tube, threshold, eps_prev, cfg, rng, step)?;

    let record = StepRecord {
        factor,
        twisted,
        e_point: e,
        anchor,
        peak,
        cap_radius: exceptional_cap_radius(&peak),
        witness,
        tube,
        threshold,
        m,
        runge_error,
        before,
        after,
        sweep,
        probes,
        epsilon,
        drift: 0.0,
        drift_bound: 3.0 * eps_prev / cfg.runge_divisor,
    };
    let mut state = StepState {
        index: step,
        g1: md.g1,
        g2: md.g2,
        radius,
        record: None,
    };
    let drift = circle(prev.radius, cfg.drift_samples)
        .map(|z| {
            let (a, b) = increment(&base, &record, z);
            pair_norm(a, b)
        })
        .fold(0.0, f64::max)
        + runge_error;
    if !(drift <= record.drift_bound) {
        return Err(Error::Approximation(format!(
            "step {step} moved the map by {drift:e} on the previous disc, budget {:e}",
            record.drift_bound
        )));
    }
    state.record = Some(StepRecord { drift, ..record });
    Ok((state, epsilon))
}

/// Runs step 0 and `cfg.steps` further steps.
pub fn run(cfg: &SynthConfig) -> std::result::Result<SynthRun, Box<Aborted>> {
    let mut ledger = EpsilonLedger::new(cfg.runge_divisor);
    let mut trace = Vec::new();
    let abort = |trace: Vec<StepState>, ledger: EpsilonLedger, error: Error| Box::new(Aborted { trace, ledger, error });
    match step0(cfg) {
        Ok(s) => trace.push(s),
        Err(e) => return Err(abort(trace, ledger, e)),
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 0..cfg.steps {
        let prev = trace.last().expect("nonempty");
        let foci = StepState::foci(&trace);
        match run_step(prev, &foci, &ledger, cfg, &mut rng) {
            Ok((state, eps)) => {
                ledger.epsilons.push(eps);
                trace.push(state);
            }
            Err(e) => return Err(abort(trace, ledger, e)),
        }
    }
    let final_drift = (0..trace.len())
        .map(|l| FinalDrift {
            index: l,
            radius: trace[l].radius,
            sampled: sampled_drift(&trace, l, cfg.drift_samples),
            bound: ledger.drift_bound(l),
        })
        .collect();
    Ok(SynthRun {
        trace,
        ledger,
        final_drift,
    })
}
