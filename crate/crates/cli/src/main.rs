use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use eclab::currents::{report, CurrentReport, MapDisc};
use eclab::holo::{HoloFunc, C64};
use eclab::patcher::{run_patch, DiscProgram, PatchConfig};
use eclab::peaking::{exceptional_cap_radius, make_h, scan_exceptional, PeakingFunction};
use eclab::quad::QuadSpec;
use eclab::synth::{self, SynthConfig};
use eclab::torus::{Factor, ProductTarget, TubeNbhd};
use eclab::Error;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Parser)]
#[command(name = "eclab", version, about = "Entire curves into a product of two elliptic curves, numerically")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the step-wise curve synthesizer.
    Synthesize(Common),
    /// Patch disc programs into one polynomial map.
    Patch(Common),
    /// Current data of a single holomorphic disc.
    Measure(Common),
    /// Tabulate a peaking factor on and off its cap.
    Peek(Common),
}

#[derive(Args)]
struct Common {
    /// JSON configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// RNG seed, written into the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Set a configuration key, with dots for nesting. The value is parsed as
    /// JSON and taken as a string otherwise.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Quadrature grid as RADIALxANGULAR.
    #[arg(long, value_name = "RxΘ")]
    grid: Option<String>,
}

/// Failure with its exit code: 1 for input and I/O, 2 for unmet numerical
/// requirements.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::ThresholdUnmet { .. } | Error::Approximation(_) => 2,
            _ => 1,
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::from(e).into()
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Error::from(e).into()
    }
}

fn config_error(msg: impl Into<String>) -> Failure {
    Failure { code: 1, message: msg.into() }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TubeSpec {
    factor: Factor,
    /// Lift of the fibre point.
    center: C64,
    rho: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MeasureConfig {
    g1: HoloFunc,
    g2: HoloFunc,
    radius: f64,
    #[serde(default)]
    target: ProductTarget,
    #[serde(default)]
    tube: Option<TubeSpec>,
    #[serde(default)]
    quad: QuadSpec,
}

impl Default for MeasureConfig {
    fn default() -> Self {
        MeasureConfig {
            g1: HoloFunc::identity(),
            g2: HoloFunc::constant(C64::new(0.0, 0.0)),
            radius: 1.0,
            target: ProductTarget::default(),
            tube: None,
            quad: QuadSpec::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct PeekConfig {
    radius: f64,
    theta0: f64,
    cap: f64,
    /// Peak excess; when given, the cap is derived from it instead.
    delta1: Option<f64>,
    m: Vec<u64>,
    /// Grid points for the scans over the closed disc.
    samples: usize,
}

impl Default for PeekConfig {
    fn default() -> Self {
        PeekConfig {
            radius: 1.0,
            theta0: 0.0,
            cap: 0.2,
            delta1: None,
            m: vec![1, 10, 50, 100, 500],
            samples: 250_000,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PatchJob {
    program: DiscProgram,
    #[serde(default)]
    patch: PatchConfig,
}

impl Default for PatchJob {
    fn default() -> Self {
        PatchJob {
            program: DiscProgram {
                discs: vec![eclab::patcher::DiscMap {
                    g1: HoloFunc::constant(C64::new(0.0, 0.0)),
                    g2: HoloFunc::constant(C64::new(0.0, 0.0)),
                    radius: 1.0,
                }],
                target: ProductTarget::default(),
            },
            patch: PatchConfig::default(),
        }
    }
}

/// `serde_json` rendering, so the summary quotes numbers exactly as the
/// trace spells them.
fn num(x: f64) -> String {
    serde_json::to_string(&x).unwrap_or_else(|_| x.to_string())
}

fn set_path(root: &mut Value, key: &str, value: Value) -> Result<(), Failure> {
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| config_error(format!("override {key}: {part} is not inside an object")))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    Err(config_error(format!("empty override key {key:?}")))
}

fn parse_grid(s: &str) -> Result<(usize, usize), Failure> {
    let bad = || config_error(format!("grid must look like 512x1024, got {s:?}"));
    let (r, t) = s.split_once(['x', 'X', '×']).ok_or_else(bad)?;
    Ok((r.trim().parse().map_err(|_| bad())?, t.trim().parse().map_err(|_| bad())?))
}

/// Reads the file (or the serialized defaults), applies flags and overrides
/// and deserializes with unknown keys rejected.
fn load<T: Serialize + for<'de> Deserialize<'de>>(
    common: &Common,
    defaults: T,
    seed_key: Option<&str>,
    grid_key: Option<&str>,
) -> Result<T, Failure> {
    let mut value: Value = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| config_error(format!("{}: {e}", path.display())))?
        }
        None => serde_json::to_value(defaults)?,
    };
    if let Some(seed) = common.seed {
        let key = seed_key.ok_or_else(|| config_error("--seed does not apply to this command"))?;
        set_path(&mut value, key, seed.into())?;
    }
    if let Some(grid) = &common.grid {
        let key = grid_key.ok_or_else(|| config_error("--grid does not apply to this command"))?;
        let (r, t) = parse_grid(grid)?;
        set_path(&mut value, &format!("{key}.radial"), r.into())?;
        set_path(&mut value, &format!("{key}.angular"), t.into())?;
    }
    for o in &common.overrides {
        let (k, v) = o.split_once('=').ok_or_else(|| config_error(format!("override {o:?} is not KEY=VALUE")))?;
        let v = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
        set_path(&mut value, k.trim(), v)?;
    }
    serde_json::from_value(value).map_err(|e| config_error(format!("configuration: {e}")))
}

fn write_outputs(out: &Path, files: &[(&str, String)]) -> Result<(), Failure> {
    fs::create_dir_all(out)?;
    for (name, body) in files {
        fs::write(out.join(name), body)?;
    }
    Ok(())
}

fn ratio_line(r: &CurrentReport) -> String {
    let [a, b, c, d] = r.ratios();
    format!(
        "L/T {}, boundary/area {}, masked T {}, masked area {}",
        num(a),
        num(b),
        num(c),
        num(d)
    )
}

fn synthesize(common: &Common) -> Result<(), Failure> {
    let cfg: SynthConfig = load(common, SynthConfig::default(), Some("seed"), Some("quad"))?;
    cfg.validate()?;
    let (trace, ledger, error, csv, drift) = match synth::run(&cfg) {
        Ok(run) => {
            let csv = run.sweep_csv();
            (run.trace, run.ledger, None, csv, run.final_drift)
        }
        Err(a) => {
            let partial = synth::SynthRun { trace: a.trace, ledger: a.ledger, final_drift: Vec::new() };
            let csv = partial.sweep_csv();
            (partial.trace, partial.ledger, Some(a.error), csv, Vec::new())
        }
    };
    let mut summary = format!("steps completed: {}\n", trace.len() - 1);
    for s in &trace[1..] {
        let rec = s.record.as_ref().expect("every step after 0 has a record");
        summary.push_str(&format!(
            "step {}: M {}, R {}, threshold {}, epsilon {}, {}\n",
            s.index,
            rec.m,
            num(s.radius),
            num(rec.threshold),
            num(rec.epsilon),
            ratio_line(&rec.after)
        ));
    }
    for d in &drift {
        summary.push_str(&format!("drift on disc {}: {} within {}\n", d.index, num(d.sampled), num(d.bound)));
    }
    let mut doc = serde_json::json!({ "config": cfg, "trace": trace, "ledger": ledger, "final_drift": drift });
    if let Some(e) = &error {
        doc["error"] = Value::String(e.to_string());
        summary.push_str(&format!("stopped: {e}\n"));
    }
    write_outputs(
        &common.out,
        &[
            ("trace.json", serde_json::to_string_pretty(&doc)?),
            ("ratios.csv", csv),
            ("summary.txt", summary),
        ],
    )?;
    match error {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

fn patch(common: &Common) -> Result<(), Failure> {
    let job: PatchJob = load(common, PatchJob::default(), None, None)?;
    job.program.validate()?;
    job.patch.validate()?;
    let (trace, deviations, error) = match run_patch(&job.program, &job.patch) {
        Ok(run) => (run.trace, run.deviations, None),
        Err(a) => (a.trace, Vec::new(), Some(a.error)),
    };
    let mut summary = format!("steps completed: {}\n", trace.len());
    for s in &trace {
        summary.push_str(&format!(
            "step {}: source {}, radius {}, epsilon {}\n",
            s.index,
            s.source,
            num(s.radius),
            num(s.epsilon)
        ));
    }
    let mut csv = String::from("step,source,sampled,bound,holds\n");
    let mut holds = true;
    for d in &deviations {
        holds &= d.holds;
        csv.push_str(&format!("{},{},{:e},{:e},{}\n", d.index, d.source, d.sampled, d.bound, d.holds));
        summary.push_str(&format!("disc {}: deviation {} against {}\n", d.index, num(d.sampled), num(d.bound)));
    }
    let mut doc = serde_json::json!({ "config": job, "trace": trace, "deviations": deviations });
    if let Some(e) = &error {
        doc["error"] = Value::String(e.to_string());
        summary.push_str(&format!("stopped: {e}\n"));
    }
    write_outputs(
        &common.out,
        &[
            ("trace.json", serde_json::to_string_pretty(&doc)?),
            ("ratios.csv", csv),
            ("summary.txt", summary),
        ],
    )?;
    if let Some(e) = error {
        return Err(e.into());
    }
    if !holds {
        return Err(Failure { code: 2, message: "a telescoping bound failed".into() });
    }
    Ok(())
}

fn measure(common: &Common) -> Result<(), Failure> {
    let cfg: MeasureConfig = load(common, MeasureConfig::default(), None, Some("quad"))?;
    let md = MapDisc::new(cfg.g1.clone(), cfg.g2.clone(), cfg.radius, cfg.target)?;
    let tube = match &cfg.tube {
        Some(t) => {
            let lattice = match t.factor {
                Factor::First => cfg.target.lattice1,
                Factor::Second => cfg.target.lattice2,
            };
            Some(TubeNbhd::new(t.factor, lattice.reduce(t.center), t.rho)?)
        }
        None => None,
    };
    let rep = report(&md, tube.as_ref(), &cfg.quad)?;
    let mut summary = format!(
        "R {}: T {}, L {}, area {}, boundary {}\n",
        num(rep.radius),
        serde_json::to_string(&rep.t)?,
        serde_json::to_string(&rep.l)?,
        serde_json::to_string(&rep.ahlfors_area)?,
        serde_json::to_string(&rep.boundary_length)?
    );
    summary.push_str(&ratio_line(&rep));
    summary.push('\n');
    let doc = serde_json::json!({ "config": cfg, "report": rep });
    write_outputs(
        &common.out,
        &[
            ("trace.json", serde_json::to_string_pretty(&doc)?),
            ("ratios.csv", format!("{}\n{}\n", CurrentReport::CSV_HEADER, rep.csv_row())),
            ("summary.txt", summary),
        ],
    )
}

#[derive(Serialize)]
struct PeekRow {
    m: u64,
    /// `|H(z₀) − 1|`.
    at_peak: f64,
    /// Largest `|H − 1|` found on the grid outside the cap.
    off_cap: f64,
}

fn peek(common: &Common) -> Result<(), Failure> {
    let cfg: PeekConfig = load(common, PeekConfig::default(), None, None)?;
    if cfg.m.is_empty() || cfg.samples < 4 {
        return Err(config_error("peek needs at least one M and four samples"));
    }
    let p = match cfg.delta1 {
        Some(d) => PeakingFunction::new(cfg.radius, cfg.theta0, d)?,
        None => eclab::peaking::make_peaking(cfg.radius, cfg.theta0, cfg.cap)?,
    };
    let cap_radius = exceptional_cap_radius(&p);
    let cap = if cfg.delta1.is_some() { cap_radius } else { cfg.cap };
    let reach = scan_exceptional(&p, cfg.samples);
    let contained = reach <= cap;

    let n = ((cfg.samples as f64).sqrt().ceil() as usize).max(2);
    let h = 2.0 * cfg.radius / (n - 1) as f64;
    let z0 = p.z0();
    let off: Vec<C64> = (0..n * n)
        .map(|k| C64::new(-cfg.radius + h * (k / n) as f64, -cfg.radius + h * (k % n) as f64))
        .filter(|z| z.norm() <= cfg.radius && (z - z0).norm() >= cap)
        .collect();
    let mut rows = Vec::new();
    for &m in &cfg.m {
        let hm = make_h(&p, m)?;
        let at_peak = (hm.eval_big(z0)?.to_c64() - 1.0).norm();
        let off_cap = off.iter().map(|&z| p.eval(z).norm().powf(m as f64)).fold(0.0, f64::max);
        rows.push(PeekRow { m, at_peak, off_cap });
    }
    let mut csv = String::from("M,at_peak,off_cap\n");
    let mut summary = format!(
        "delta1 {}, cap radius {}, exceptional reach {}, contained {}\n",
        num(p.delta1),
        num(cap_radius),
        num(reach),
        contained
    );
    for r in &rows {
        csv.push_str(&format!("{},{:e},{:e}\n", r.m, r.at_peak, r.off_cap));
        summary.push_str(&format!("M {}: at peak {}, off cap {}\n", r.m, num(r.at_peak), num(r.off_cap)));
    }
    let doc = serde_json::json!({
        "config": cfg,
        "peak": p,
        "cap_radius": cap_radius,
        "exceptional_reach": reach,
        "contained": contained,
        "rows": rows,
    });
    write_outputs(
        &common.out,
        &[
            ("trace.json", serde_json::to_string_pretty(&doc)?),
            ("ratios.csv", csv),
            ("summary.txt", summary),
        ],
    )
}

fn init_threads() -> Result<(), Failure> {
    if let Ok(v) = std::env::var("ECLAB_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| config_error(format!("ECLAB_THREADS must be a positive integer, got {v:?}")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| config_error(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = init_threads().and_then(|_| match &cli.command {
        Command::Synthesize(c) => synthesize(c),
        Command::Patch(c) => patch(c),
        Command::Measure(c) => measure(c),
        Command::Peek(c) => peek(c),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("eclab: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
