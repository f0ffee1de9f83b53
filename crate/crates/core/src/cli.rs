//! The `t3sgi` command line: config loading with dot-path overrides,
//! scenario commands and atomic CSV/JSON output.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{validate_config, ConfigFile, ExperimentConfig};
use crate::error::Error;
use crate::fit::{self, FitOptions, FitParams, FringeScan, NoiseSpec, Provenance, TofSpec};
use crate::kinematics;
use crate::oracle::{self, GridSpec};
use crate::phase::{self, GaussianPacket};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_TOLERANCE: i32 = 3;
pub const EXIT_IO: i32 = 4;

/// Required agreement of the log-log slopes in `compare`.
const SLOPE_TOLERANCE: f64 = 1e-6;
/// Lowest acceptable two-branch overlap in `oracle` for a closed loop.
const OVERLAP_TOLERANCE: f64 = 1e-6;
/// Largest acceptable norm drift in `oracle`.
const NORM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Parser)]
#[command(name = "t3sgi", version, about = "Four-pulse full-loop Stern-Gerlach interferometer simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON config; defaults apply to everything it leaves out.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Config override as dot.path=value, e.g. timing.T1_us=50. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Branch trajectories, force profile, δp(t) and closure residuals.
    Trajectory {
        #[command(flatten)]
        common: Common,
        /// Number of time samples.
        #[arg(long, default_value_t = 1001)]
        samples: usize,
    },
    /// Synthetic fringe scan over T₁.
    Scan {
        #[command(flatten)]
        common: Common,
    },
    /// Fit a fringe scan, generated from the config unless --scan is given.
    Fit {
        #[command(flatten)]
        common: Common,
        /// External scan CSV with columns t1_us,p1,sigma_p1.
        #[arg(long)]
        scan: Option<PathBuf>,
    },
    /// Grid Schrödinger evolution checked against the analytic propagator.
    Oracle {
        #[command(flatten)]
        common: Common,
        /// Also run a time-step convergence study.
        #[arg(long)]
        convergence: bool,
        /// Write the final wavefunctions as binary snapshots.
        #[arg(long)]
        snapshots: bool,
    },
    /// T³ against T² phase scaling.
    Compare {
        #[command(flatten)]
        common: Common,
    },
    /// Check the config and report every violated invariant.
    Validate {
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Trajectory { common, .. }
            | Command::Scan { common }
            | Command::Fit { common, .. }
            | Command::Oracle { common, .. }
            | Command::Compare { common }
            | Command::Validate { common } => common,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Command::Trajectory { .. } => "trajectory",
            Command::Scan { .. } => "scan",
            Command::Fit { .. } => "fit",
            Command::Oracle { .. } => "oracle",
            Command::Compare { .. } => "compare",
            Command::Validate { .. } => "validate",
        }
    }
}

/// Failure of a command, carrying its exit code.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Tolerance(String),
    Io(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => EXIT_CONFIG,
            Failure::Tolerance(_) => EXIT_TOLERANCE,
            Failure::Io(_) => EXIT_IO,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "invalid config: {m}"),
            Failure::Tolerance(m) => write!(f, "tolerance check failed: {m}"),
            Failure::Io(m) => write!(f, "I/O error: {m}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(_) | Error::Csv(_) => Failure::Io(e.to_string()),
            Error::GridTooSmall { .. } | Error::DegenerateFit(_) => Failure::Tolerance(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

type CmdResult = std::result::Result<(), Failure>;

/// Parse `args` (including the program name), run the command and return
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(&cli.command) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("t3sgi {}: {f}", cli.command.name());
            f.exit_code()
        }
    }
}

/// The resolved config document plus the runtime experiment built from it.
pub struct Loaded {
    pub doc: ConfigFile,
    pub experiment: ExperimentConfig,
    /// SHA-256 of the canonical resolved config.
    pub hash: String,
}

/// Read the config (or defaults), apply overrides and resolve it.
pub fn load_config(path: Option<&Path>, overrides: &[String]) -> std::result::Result<Loaded, Failure> {
    let text = match path {
        Some(p) => fs::read_to_string(p).map_err(|e| Failure::Io(format!("{}: {e}", p.display())))?,
        None => "{}".to_string(),
    };
    let doc = ConfigFile::from_json_str(&text).map_err(|e| Failure::Config(e.to_string()))?;
    let mut value = serde_json::to_value(&doc).map_err(|e| Failure::Config(e.to_string()))?;
    for entry in overrides {
        apply_override(&mut value, entry)?;
    }
    let doc: ConfigFile = serde_json::from_value(value).map_err(|e| Failure::Config(e.to_string()))?;
    let experiment = doc.experiment().map_err(|e| Failure::Config(e.to_string()))?;
    let canonical = doc.to_json_string().map_err(|e| Failure::Config(e.to_string()))?;
    let hash = hex::encode(Sha256::digest(canonical.as_bytes()));
    Ok(Loaded { doc, experiment, hash })
}

/// Set `key=value` on a JSON document, creating intermediate objects. The
/// value is parsed as JSON and taken as a string when that fails.
pub fn apply_override(doc: &mut Value, entry: &str) -> std::result::Result<(), Failure> {
    let (key, raw) =
        entry.split_once('=').ok_or_else(|| Failure::Config(format!("override {entry:?} is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Failure::Config(format!("bad override key {key:?}")));
    }
    let value = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().to_string()));
    let mut node = doc;
    for part in &parts[..parts.len() - 1] {
        let obj = node.as_object_mut().ok_or_else(|| Failure::Config(format!("override {key:?} crosses a non-object")))?;
        node = obj.entry(part.to_string()).or_insert_with(|| json!({}));
    }
    let obj = node.as_object_mut().ok_or_else(|| Failure::Config(format!("override {key:?} crosses a non-object")))?;
    obj.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn metadata(command: &str, loaded: &Loaded, seed: u64) -> Value {
    json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "seed": seed,
        "config_sha256": loaded.hash,
    })
}

/// Write `bytes` to `dir/name` through a temporary file and a rename.
fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> std::result::Result<(), Failure> {
    let io = |e: std::io::Error| Failure::Io(format!("{}: {e}", dir.join(name).display()));
    fs::create_dir_all(dir).map_err(io)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(dir.join(name)).map_err(|e| io(e.error))?;
    Ok(())
}

fn write_json(dir: &Path, name: &str, value: &Value) -> std::result::Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::Io(e.to_string()))?;
    text.push('\n');
    write_atomic(dir, name, text.as_bytes())
}

fn write_csv(dir: &Path, name: &str, header: &[&str], rows: &[Vec<String>]) -> std::result::Result<(), Failure> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Failure::Io(e.to_string());
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(row).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Failure::Io(e.to_string()))?;
    write_atomic(dir, name, &bytes)
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("plain data serializes")
}

/// Number formatting for CSV cells: shortest round-trip representation.
fn num(x: f64) -> String {
    format!("{x}")
}

fn execute(command: &Command) -> CmdResult {
    let common = command.common();
    let loaded = load_config(common.config.as_deref(), &common.overrides)?;
    let violations = validate_config(&loaded.experiment);
    if let Command::Validate { .. } = command {
        return run_validate(common, &loaded, &violations);
    }
    if !violations.is_empty() {
        let list: Vec<String> = violations.iter().map(|v| format!("{}: {}", v.code, v.message)).collect();
        return Err(Failure::Config(list.join("; ")));
    }
    for w in loaded.experiment.timing.warnings() {
        eprintln!("warning: {w}");
    }
    match command {
        Command::Trajectory { samples, .. } => run_trajectory(common, &loaded, *samples),
        Command::Scan { .. } => run_scan(common, &loaded),
        Command::Fit { scan, .. } => run_fit(common, &loaded, scan.as_deref()),
        Command::Oracle { convergence, snapshots, .. } => run_oracle(common, &loaded, *convergence, *snapshots),
        Command::Compare { .. } => run_compare(common, &loaded),
        Command::Validate { .. } => unreachable!("handled above"),
    }
}

fn run_validate(common: &Common, loaded: &Loaded, violations: &[crate::config::Violation]) -> CmdResult {
    let report = json!({
        "metadata": metadata("validate", loaded, common.seed),
        "valid": violations.is_empty(),
        "violations": to_value(&violations),
        "warnings": loaded.experiment.timing.warnings(),
        "resolved_config": to_value(&loaded.doc),
    });
    write_json(&common.out, "validate.json", &report)?;
    for v in violations {
        eprintln!("{}: {}", v.code, v.message);
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Failure::Config(format!("{} violation(s)", violations.len())))
    }
}

fn run_trajectory(common: &Common, loaded: &Loaded, samples: usize) -> CmdResult {
    let cfg = &loaded.experiment;
    let rows: Vec<Vec<String>> = kinematics::sample_trajectories(cfg, samples)?
        .iter()
        .map(|s| {
            let m = cfg.constants.mass;
            vec![
                num(s.t * 1e6),
                num(s.z1 * 1e6),
                num(s.z2 * 1e6),
                num(s.p1 / m * 1e3),
                num(s.p2 / m * 1e3),
                num((s.p2 - s.p1) / m * 1e3),
                s.polarity.to_string(),
            ]
        })
        .collect();
    write_csv(
        &common.out,
        "trajectory.csv",
        &["t_us", "z1_um", "z2_um", "p1_over_m_mm_s", "p2_over_m_mm_s", "delta_p_over_m_mm_s", "polarity"],
        &rows,
    )?;

    let segments: Vec<Vec<String>> = cfg
        .timing
        .force_profile()
        .iter()
        .enumerate()
        .map(|(i, s)| {
            vec![
                (i + 1).to_string(),
                s.pulse.map_or_else(String::new, |p| p.to_string()),
                num(s.start * 1e6),
                num(s.end * 1e6),
                s.polarity.to_string(),
            ]
        })
        .collect();
    write_csv(&common.out, "force_profile.csv", &["segment", "pulse", "start_us", "end_us", "polarity"], &segments)?;

    let residuals = kinematics::closure_residuals(cfg);
    // per-pulse impulse and the displacement it builds up over one pulse
    let impulse = phase::delta_p0(&cfg.constants, &cfg.levels, cfg.field.a_b, cfg.timing.t1).abs();
    let displacement = impulse * cfg.timing.t1 / cfg.constants.mass;
    let closed = phase::closed_form_phase(cfg).ok();
    let report = json!({
        "metadata": metadata("trajectory", loaded, common.seed),
        "total_time_s": cfg.timing.total_time(),
        "closure": {
            "delta_p_kg_m_per_s": residuals.delta_p,
            "delta_z_m": residuals.delta_z,
            "delta_p_relative": residuals.delta_p / impulse,
            "delta_z_relative": residuals.delta_z / displacement,
            "pulse_defect": cfg.timing.closure_defect(),
        },
        "phase": {
            "kinematic_rad": kinematics::interferometer_phase(cfg)?,
            "closed_form": closed.map(|p| to_value(&p)),
        },
        "warnings": cfg.timing.warnings(),
    });
    write_json(&common.out, "closure.json", &report)
}

fn noise_spec(doc: &ConfigFile) -> NoiseSpec {
    NoiseSpec {
        charge_rel_std: doc.scan.charge_rel_std,
        atoms_per_shot: doc.scan.atoms_per_shot,
        shots_per_point: doc.scan.shots_per_point,
    }
}

fn synthetic_scan(loaded: &Loaded, seed: u64) -> std::result::Result<FringeScan, Failure> {
    let s = &loaded.doc.scan;
    let grid = fit::linear_t1_grid(s.t1_min.si(), s.t1_max.si(), s.n_points)?;
    Ok(fit::generate_scan(&loaded.experiment, &grid, &noise_spec(&loaded.doc), seed)?)
}

/// Sign changes of p1 − mean(p1) in the first and second half of a scan.
fn zero_crossings(scan: &FringeScan) -> (usize, usize) {
    let mean = scan.points.iter().map(|p| p.p1).sum::<f64>() / scan.points.len() as f64;
    let signs: Vec<bool> = scan.points.iter().map(|p| p.p1 > mean).collect();
    let half = signs.len() / 2;
    let count = |s: &[bool]| s.windows(2).filter(|w| w[0] != w[1]).count();
    (count(&signs[..=half.min(signs.len() - 1)]), count(&signs[half..]))
}

fn run_scan(common: &Common, loaded: &Loaded) -> CmdResult {
    let scan = synthetic_scan(loaded, common.seed)?;
    let mut buf = Vec::new();
    scan.write_csv(&mut buf)?;
    write_atomic(&common.out, "scan.csv", &buf)?;
    let (early, late) = zero_crossings(&scan);
    let report = json!({
        "metadata": metadata("scan", loaded, common.seed),
        "provenance": scan.provenance,
        "td_s": scan.td,
        "noise": to_value(&noise_spec(&loaded.doc)),
        "n_points": scan.points.len(),
        "zero_crossings": { "first_half": early, "second_half": late },
    });
    write_json(&common.out, "scan.json", &report)
}

fn run_fit(common: &Common, loaded: &Loaded, external: Option<&Path>) -> CmdResult {
    let cfg = &loaded.experiment;
    let doc = &loaded.doc;
    let scan = match external {
        Some(path) => {
            let file = fs::File::open(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
            FringeScan::read_csv(file, cfg.timing.td1, doc.scan.shots_per_point).map_err(|e| match e {
                Error::Io(_) => Failure::Io(e.to_string()),
                other => Failure::Config(format!("{}: {other}", path.display())),
            })?
        }
        None => synthetic_scan(loaded, common.seed)?,
    };
    let opts = FitOptions {
        initial: FitParams {
            a_b: doc.fit.initial_a_b,
            phi0: 0.0,
            visibility0: doc.fit.initial_visibility0,
            decay_time: doc.fit.initial_decay_time.si(),
        },
        max_iterations: doc.fit.max_iterations,
        tolerance: doc.fit.tolerance,
        charge_rel_std: if doc.fit.charge_averaged { doc.scan.charge_rel_std } else { 0.0 },
    };
    let result = fit::fit_scan(&scan, cfg, &opts)?;

    let t1: Vec<f64> = scan.points.iter().map(|p| p.t1).collect();
    let curve = fit::model_curve(cfg, scan.td, &result.params, &t1, opts.charge_rel_std);
    let rows: Vec<Vec<String>> = scan
        .points
        .iter()
        .zip(&curve)
        .map(|(p, m)| vec![num(p.t1 * 1e6), num(p.p1), num(p.sigma_p1), num(*m)])
        .collect();
    write_csv(&common.out, "fit_curve.csv", &["t1_us", "p1", "sigma_p1", "p1_model"], &rows)?;

    // time-of-flight estimate with one shot per scan shot
    let tof_doc = &doc.tof;
    let tof_spec = TofSpec {
        pulse_duration: tof_doc.pulse.si(),
        tof: tof_doc.tof.si(),
        position_noise: tof_doc.position_noise.si(),
        trials: tof_doc.trials,
        mu_frac: tof_doc.mu_frac,
    };
    let tof = fit::tof_gradient_estimate(cfg.field.a_b, &tof_spec, common.seed)?;
    let [da, dphi, dv, dtau] = result.uncertainties();
    let truth = match scan.provenance {
        Provenance::Synthetic => Some(to_value(&fit::true_params(cfg))),
        Provenance::External => None,
    };
    let report = json!({
        "metadata": metadata("fit", loaded, common.seed),
        "provenance": scan.provenance,
        "fit": to_value(&result),
        "uncertainty": {
            "a_B_m_per_s2": da,
            "phi0_rad": dphi,
            "visibility0": dv,
            "decay_time_s": dtau,
        },
        "model_charge_rel_std": opts.charge_rel_std,
        "truth": truth,
        "tof": to_value(&tof),
        "fit_to_tof_uncertainty_ratio": da / tof.uncertainty,
    });
    write_json(&common.out, "fit.json", &report)?;
    if result.converged {
        Ok(())
    } else {
        Err(Failure::Tolerance(format!("fit did not converge in {} iterations", result.diagnostics.iterations)))
    }
}

fn oracle_setup(loaded: &Loaded) -> std::result::Result<(GaussianPacket, GridSpec), Failure> {
    let cfg = &loaded.experiment;
    let p = &loaded.doc.packet;
    let o = &loaded.doc.oracle;
    let packet = GaussianPacket::new(p.sigma0.si(), p.center.si(), cfg.constants.mass * p.velocity.si())?;
    let mut grid = GridSpec::auto(cfg, &packet, o.n_points, o.steps_per_shortest_segment)?;
    match (o.z_min, o.z_max) {
        (Some(lo), Some(hi)) => grid = GridSpec::new(lo.si(), hi.si(), o.n_points, grid.dt)?,
        (None, None) => {}
        _ => return Err(Failure::Config("oracle: give both z_min_um and z_max_um or neither".into())),
    }
    Ok((packet, grid))
}

fn run_oracle(common: &Common, loaded: &Loaded, convergence: bool, snapshots: bool) -> CmdResult {
    let cfg = &loaded.experiment;
    let (packet, grid) = oracle_setup(loaded)?;
    let run = oracle::run_oracle(cfg, &packet, &grid)?;
    let r = run.report;
    let tolerance = loaded.doc.oracle.phase_tolerance;

    let mut failures = Vec::new();
    if r.phase_error > tolerance {
        failures.push(format!("phase_error {:e} > {tolerance:e}", r.phase_error));
    }
    if (r.overlap_numeric - r.overlap_analytic).abs() > OVERLAP_TOLERANCE.max(1e-3 * (1.0 - r.overlap_analytic)) {
        failures.push(format!("overlap {} vs model {}", r.overlap_numeric, r.overlap_analytic));
    }
    if r.norm_drift > NORM_TOLERANCE {
        failures.push(format!("norm drift {:e} > {NORM_TOLERANCE:e}", r.norm_drift));
    }

    let study = if convergence {
        let base = loaded.doc.oracle.steps_per_shortest_segment;
        let steps: Vec<usize> = [base / 4, base / 2, base, base * 2].into_iter().filter(|s| *s > 0).collect();
        let points = oracle::dt_convergence(cfg, &packet, grid.n_points, &steps)?;
        let orders = oracle::observed_orders(&points);
        Some(json!({ "points": to_value(&points), "orders": orders }))
    } else {
        None
    };

    if snapshots {
        for (name, w) in [("branch1", &run.branch1), ("branch2", &run.branch2)] {
            let (header, bytes) = w.snapshot();
            write_json(&common.out, &format!("{name}.json"), &header)?;
            write_atomic(&common.out, &format!("{name}.bin"), &bytes)?;
        }
    }

    let closed = phase::closed_form_phase(cfg).ok();
    let report = json!({
        "metadata": metadata("oracle", loaded, common.seed),
        "report": to_value(&r),
        "closed_form": closed.map(|p| to_value(&p)),
        "phase_tolerance_rad": tolerance,
        "convergence": study,
        "passed": failures.is_empty(),
        "failures": failures,
    });
    write_json(&common.out, "oracle.json", &report)?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Tolerance(failures.join("; ")))
    }
}

/// Least-squares slope of log|y| against log x over points with y ≠ 0.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> =
        x.iter().zip(y).filter(|(x, y)| **x > 0.0 && **y != 0.0).map(|(x, y)| (x.ln(), y.abs().ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

fn run_compare(common: &Common, loaded: &Loaded) -> CmdResult {
    let cfg = &loaded.experiment;
    let c = &loaded.doc.compare;
    if c.n_points < 2 || !(c.t_max.si() > 0.0) {
        return Err(Failure::Config("compare: need n_points >= 2 and t_max_us > 0".into()));
    }
    let k = &cfg.constants;
    let t2_a_b = c.t2_gradient_factor * cfg.field.a_b;
    let dp0 = phase::delta_p0(k, &cfg.levels, t2_a_b, c.t2_pulse.si());

    let times: Vec<f64> = (1..=c.n_points).map(|i| c.t_max.si() * i as f64 / c.n_points as f64).collect();
    let cubic: Vec<f64> = times.iter().map(|&t| phase::phase_t3_limit(cfg, t).abs()).collect();
    let quadratic: Vec<f64> = times.iter().map(|&t| phase::phase_t2_limit(dp0, t, k.gravity, k.hbar).abs()).collect();
    let rows: Vec<Vec<String>> = times
        .iter()
        .zip(cubic.iter().zip(&quadratic))
        .map(|(t, (a, b))| vec![num(t * 1e6), num(*a), num(*b)])
        .collect();
    write_csv(&common.out, "compare.csv", &["T_us", "abs_phase_t3_rad", "abs_phase_t2_rad"], &rows)?;

    let slope3 = log_log_slope(&times, &cubic);
    let slope2 = log_log_slope(&times, &quadratic);
    let t_op = cfg.timing.total_time();
    let t3_op = kinematics::interferometer_phase(cfg)?.abs();
    let t2_time = c.t2_time_factor * t_op;
    let t2_op = phase::phase_t2_limit(dp0, t2_time, k.gravity, k.hbar).abs();
    let report = json!({
        "metadata": metadata("compare", loaded, common.seed),
        "slope_t3": slope3,
        "slope_t2": slope2,
        "t2_delta_p0_kg_m_per_s": dp0,
        "operating_points": {
            "t3": { "T_s": t_op, "aB_m_per_s2": cfg.field.a_b, "abs_phase_rad": t3_op },
            "t2": { "T_s": t2_time, "aB_m_per_s2": t2_a_b, "pulse_s": c.t2_pulse.si(), "abs_phase_rad": t2_op },
            "t3_exceeds_t2": t3_op > t2_op,
        },
    });
    write_json(&common.out, "compare.json", &report)?;

    let mut failures = Vec::new();
    for (name, slope, expected) in [("T3", slope3, 3.0), ("T2", slope2, 2.0)] {
        if let Some(s) = slope {
            if (s - expected).abs() > SLOPE_TOLERANCE {
                failures.push(format!("{name} slope {s} != {expected}"));
            }
        }
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Tolerance(failures.join("; ")))
    }
}
