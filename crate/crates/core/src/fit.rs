//! Synthetic fringe scans, the weighted least-squares fringe fit and the
//! time-of-flight gradient estimate it is compared against.

use std::f64::consts::{PI, TAU};
use std::io::{Read, Write};

use nalgebra::{Matrix4, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use num_complex::Complex64;

use crate::phase::{closed_form_phase_at, closed_form_phase_slope};

/// Fewest scan points accepted by [`fit_scan`].
pub const MIN_FIT_POINTS: usize = 8;
/// Starting offsets tried for φ₀.
pub const PHI0_STARTS: [f64; 4] = [0.0, PI / 2.0, PI, 3.0 * PI / 2.0];

/// Shot-noise model of a scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Relative standard deviation of the per-shot charge, δQ/Q.
    pub charge_rel_std: f64,
    /// Atoms detected per shot; 0 means the population is read out exactly.
    pub atoms_per_shot: u64,
    pub shots_per_point: usize,
}

impl NoiseSpec {
    pub fn noiseless(shots_per_point: usize) -> Self {
        Self { charge_rel_std: 0.0, atoms_per_shot: 0, shots_per_point }
    }
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self { charge_rel_std: 3.6e-3, atoms_per_shot: 10_000, shots_per_point: 10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Synthetic,
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    /// Pulse length T₁, s.
    pub t1: f64,
    pub p1: f64,
    pub sigma_p1: f64,
}

/// P₁ measured against T₁ at fixed delay.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FringeScan {
    pub points: Vec<ScanPoint>,
    pub td: f64,
    pub shots_per_point: usize,
    pub provenance: Provenance,
}

impl FringeScan {
    pub fn new(points: Vec<ScanPoint>, td: f64, shots_per_point: usize, provenance: Provenance) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidParameter("scan has no points".into()));
        }
        for (i, p) in points.iter().enumerate() {
            if !(0.0..=1.0).contains(&p.p1) {
                return Err(Error::InvalidParameter(format!("point {i}: p1 = {} outside [0, 1]", p.p1)));
            }
            if !(p.sigma_p1.is_finite() && p.sigma_p1 > 0.0) {
                return Err(Error::InvalidParameter(format!("point {i}: sigma_p1 = {} must be > 0", p.sigma_p1)));
            }
            if !(p.t1.is_finite() && p.t1 >= 0.0) {
                return Err(Error::InvalidParameter(format!("point {i}: t1 = {} must be >= 0", p.t1)));
            }
        }
        if points.windows(2).any(|w| w[1].t1 <= w[0].t1) {
            return Err(Error::InvalidParameter("t1 values must be strictly increasing".into()));
        }
        if !(td.is_finite() && td >= 0.0) {
            return Err(Error::InvalidParameter(format!("td = {td} must be >= 0")));
        }
        Ok(Self { points, td, shots_per_point, provenance })
    }

    /// Writes the `t1_us,p1,sigma_p1` CSV.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t1_us", "p1", "sigma_p1"])?;
        for p in &self.points {
            w.write_record([fmt_us(p.t1), p.p1.to_string(), p.sigma_p1.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a `t1_us,p1,sigma_p1` CSV as an external scan.
    pub fn read_csv<R: Read>(input: R, td: f64, shots_per_point: usize) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            t1_us: String,
            p1: f64,
            sigma_p1: f64,
        }
        let mut points = Vec::new();
        for row in csv::Reader::from_reader(input).deserialize() {
            let row: Row = row?;
            let t1 = crate::units::text_to_si(row.t1_us.trim(), 6)
                .ok_or_else(|| Error::InvalidParameter(format!("bad t1_us value {:?}", row.t1_us)))?;
            points.push(ScanPoint { t1, p1: row.p1, sigma_p1: row.sigma_p1 });
        }
        Self::new(points, td, shots_per_point, Provenance::External)
    }
}

fn fmt_us(t: f64) -> String {
    crate::units::si_to_text(t, 6).unwrap_or_else(|| t.to_string())
}

/// `n` evenly spaced pulse lengths from `t1_min` to `t1_max`.
pub fn linear_t1_grid(t1_min: f64, t1_max: f64, n: usize) -> Result<Vec<f64>> {
    if n < 2 || !(t1_max > t1_min) || t1_min < 0.0 {
        return Err(Error::InvalidParameter(format!("bad T1 grid [{t1_min}, {t1_max}] with {n} points")));
    }
    Ok((0..n).map(|i| t1_min + (t1_max - t1_min) * i as f64 / (n - 1) as f64).collect())
}

/// Shot-averaged fringe phasor E_q[exp(i(δΦ(q·a_B) + φ₀))] and its
/// derivative with respect to a_B, for q ~ N(1, s²).
///
/// δΦ is quadratic in the gradient, δΦ(a) = G·a + M·a², so with q = 1 + ε
/// the exponent is A + b·ε + c·ε² and the Gaussian average is
/// (1 − 2ics²)^{−1/2}·exp(iA − b²s²/(2(1 − 2ics²))). For s = 0 this is
/// exp(iA) and the fit reduces to the bare cosine fringe.
fn fringe_phasor(cfg: &ExperimentConfig, a: f64, phi0: f64, t1: f64, td: f64, s: f64) -> (Complex64, Complex64) {
    let unit = closed_form_phase_at(&cfg.constants, &cfg.levels, 1.0, t1, td);
    let (g, m) = (unit.gravity_term, unit.magnetic_term);
    let i = Complex64::i();
    let phase = g * a + m * a * a + phi0;
    let d_phase = g + 2.0 * m * a;
    if s == 0.0 {
        let z = Complex64::from_polar(1.0, phase);
        return (z, z * i * d_phase);
    }
    let s2 = s * s;
    let (b, db) = (g * a + 2.0 * m * a * a, g + 4.0 * m * a);
    let (c, dc) = (m * a * a, 2.0 * m * a);
    let d = Complex64::new(1.0, -2.0 * c * s2);
    let log = i * phase - 0.5 * d.ln() - b * b * s2 / (2.0 * d);
    let d_log = i * d_phase + i * s2 * dc / d - b * db * s2 / d - i * s2 * s2 * b * b * dc / (d * d);
    let z = log.exp();
    (z, z * d_log)
}

/// Fringe model evaluated at pulse length `t1` for given parameters.
fn model(cfg: &ExperimentConfig, td: f64, params: &FitParams, t1: f64, charge_rel_std: f64) -> f64 {
    let (z, _) = fringe_phasor(cfg, params.a_b, params.phi0, t1, td, charge_rel_std);
    let v = cfg.envelope.visibility_at(params.visibility0, params.decay_time, t1, 4.0 * t1 + 2.0 * td);
    0.5 * (1.0 - v * z.re)
}

/// Standard deviation of the per-shot phase at `t1` due to charge noise,
/// to first order in δQ/Q.
pub fn phase_jitter_std(cfg: &ExperimentConfig, t1: f64, charge_rel_std: f64) -> f64 {
    let a = cfg.field.a_b;
    closed_form_phase_slope(&cfg.constants, &cfg.levels, a, t1, cfg.timing.td1).abs() * a * charge_rel_std
}

/// Simulates a scan of the closed-form fringe over `t1_grid` at the delay of
/// `cfg`. Each shot draws its own charge factor for all four pulses and a
/// binomial detection outcome.
pub fn generate_scan(cfg: &ExperimentConfig, t1_grid: &[f64], noise: &NoiseSpec, seed: u64) -> Result<FringeScan> {
    if t1_grid.is_empty() {
        return Err(Error::InvalidParameter("empty T1 grid".into()));
    }
    if noise.shots_per_point == 0 {
        return Err(Error::InvalidParameter("shots_per_point must be > 0".into()));
    }
    if !(noise.charge_rel_std.is_finite() && noise.charge_rel_std >= 0.0) {
        return Err(Error::InvalidParameter(format!("charge_rel_std = {}", noise.charge_rel_std)));
    }
    let td = cfg.timing.td1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let charge = Normal::new(1.0, noise.charge_rel_std).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let n = noise.shots_per_point as f64;
    let (nodes, weights) = gauss_hermite(GAUSS_HERMITE_NODES);
    let mut points = Vec::with_capacity(t1_grid.len());
    for &t1 in t1_grid {
        let v = cfg.envelope.visibility_at(cfg.visibility0, cfg.decay_time, t1, 4.0 * t1 + 2.0 * td);
        let fringe = |q: f64| {
            let phase = closed_form_phase_at(&cfg.constants, &cfg.levels, cfg.field.a_b * q, t1, td).total;
            (0.5 * (1.0 - v * (phase + cfg.phi0).cos())).clamp(0.0, 1.0)
        };
        let mut sum = 0.0;
        for _ in 0..noise.shots_per_point {
            let p = fringe(charge.sample(&mut rng));
            sum += if noise.atoms_per_shot == 0 {
                p
            } else {
                let b = Binomial::new(noise.atoms_per_shot, p).map_err(|e| Error::InvalidParameter(e.to_string()))?;
                b.sample(&mut rng) as f64 / noise.atoms_per_shot as f64
            };
        }

        // per-shot variance: charge-induced spread of P₁ plus the mean
        // binomial variance, both averaged over the charge distribution
        let (mut m1, mut m2, mut binomial) = (0.0, 0.0, 0.0);
        for (x, w) in nodes.iter().zip(&weights) {
            let p = fringe(1.0 + noise.charge_rel_std * x);
            m1 += w * p;
            m2 += w * p * p;
            binomial += w * p * (1.0 - p);
        }
        let mut shot_var = (m2 - m1 * m1).max(0.0);
        if noise.atoms_per_shot > 0 {
            shot_var += binomial / noise.atoms_per_shot as f64;
        }
        let sigma = (shot_var / n).sqrt().max(MIN_SIGMA_P1);
        points.push(ScanPoint { t1, p1: sum / n, sigma_p1: sigma });
    }
    FringeScan::new(points, td, noise.shots_per_point, Provenance::Synthetic)
}

/// Floor on the reported standard error, reached only without any noise.
pub const MIN_SIGMA_P1: f64 = 1e-6;
const GAUSS_HERMITE_NODES: usize = 24;

/// Nodes and weights with Σ wᵢ f(xᵢ) ≈ E[f(Z)] for Z ~ N(0, 1), from the
/// eigen-decomposition of the Hermite Jacobi matrix.
fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let jacobi = nalgebra::DMatrix::from_fn(n, n, |i, j| if i.abs_diff(j) == 1 { (i.max(j) as f64).sqrt() } else { 0.0 });
    let eig = jacobi.symmetric_eigen();
    let nodes = eig.eigenvalues.iter().copied().collect();
    let weights = (0..n).map(|k| eig.eigenvectors[(0, k)].powi(2)).collect();
    (nodes, weights)
}

/// The four fit parameters in natural units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitParams {
    #[serde(rename = "a_B_m_per_s2")]
    pub a_b: f64,
    #[serde(rename = "phi0_rad")]
    pub phi0: f64,
    pub visibility0: f64,
    #[serde(rename = "decay_time_s")]
    pub decay_time: f64,
}

impl FitParams {
    /// Unconstrained internal coordinates (ln|a_B|, φ₀, logit V₀, ln τ).
    ///
    /// The sign of a_B stays that of the starting point. This matters: since
    /// δΦ = G·a + M·a², the mirror value −a_B − G/M produces nearly the
    /// same fringe, and an unconstrained a_B occasionally lands there.
    fn to_internal(self) -> Vector4<f64> {
        let v = self.visibility0;
        Vector4::new(self.a_b.abs().ln(), self.phi0, (v / (1.0 - v)).ln(), self.decay_time.ln())
    }

    fn from_internal(x: &Vector4<f64>, sign: f64) -> Self {
        Self {
            a_b: sign * x[0].exp(),
            phi0: x[1],
            visibility0: 1.0 / (1.0 + (-x[2]).exp()),
            decay_time: x[3].exp(),
        }
    }

    /// ∂(natural)/∂(internal), diagonal.
    fn internal_scale(&self) -> Vector4<f64> {
        Vector4::new(self.a_b, 1.0, self.visibility0 * (1.0 - self.visibility0), self.decay_time)
    }
}

/// Starting point and stopping rules for [`fit_scan`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub initial: FitParams,
    pub max_iterations: usize,
    /// Relative step size and relative cost change below which the
    /// iteration stops.
    pub tolerance: f64,
    /// Known shot-to-shot δQ/Q to average the model fringe over; 0 fits the
    /// bare cosine fringe.
    #[serde(default)]
    pub charge_rel_std: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            initial: FitParams { a_b: 271.0, phi0: 0.0, visibility0: 0.6, decay_time: 60e-6 },
            max_iterations: 200,
            tolerance: 1e-10,
            charge_rel_std: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitDiagnostics {
    pub iterations: usize,
    /// Σ[(p1 − model)/σ]².
    pub chi_square: f64,
    pub degrees_of_freedom: usize,
    pub reduced_chi_square: f64,
    pub gradient_norm: f64,
    /// φ₀ start that produced the reported minimum.
    pub phi0_start: f64,
    pub n_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    #[serde(flatten)]
    pub params: FitParams,
    /// Covariance of (a_B, φ₀, V₀, τ) in SI units.
    pub covariance: [[f64; 4]; 4],
    /// RMS of the unweighted residuals p1 − model.
    pub residual_rms: f64,
    pub converged: bool,
    pub diagnostics: FitDiagnostics,
}

impl FitResult {
    pub fn a_b_uncertainty(&self) -> f64 {
        self.covariance[0][0].sqrt()
    }

    pub fn uncertainties(&self) -> [f64; 4] {
        [0, 1, 2, 3].map(|i| self.covariance[i][i].sqrt())
    }
}

struct Evaluation {
    residuals: Vec<f64>,
    /// Rows of ∂r/∂θ in natural parameters.
    jacobian: Vec<[f64; 4]>,
    cost: f64,
}

fn evaluate(scan: &FringeScan, cfg: &ExperimentConfig, p: &FitParams, charge_rel_std: f64) -> Evaluation {
    let env = cfg.envelope;
    let mut residuals = Vec::with_capacity(scan.points.len());
    let mut jacobian = Vec::with_capacity(scan.points.len());
    for pt in &scan.points {
        let total = 4.0 * pt.t1 + 2.0 * scan.td;
        let (z, dz_da) = fringe_phasor(cfg, p.a_b, p.phi0, pt.t1, scan.td, charge_rel_std);
        let v = env.visibility_at(p.visibility0, p.decay_time, pt.t1, total);
        let cos = z.re;
        let m = 0.5 * (1.0 - v * cos);
        let w = 1.0 / pt.sigma_p1;
        residuals.push((pt.p1 - m) * w);
        // r = (p − m)/σ, so ∂r/∂θ = −(∂m/∂θ)/σ
        let dm = [
            -0.5 * v * dz_da.re,
            0.5 * v * z.im,
            -0.5 * v / p.visibility0 * cos,
            0.5 * v * env.decay_exponent_slope(p.decay_time, pt.t1, total) * cos,
        ];
        jacobian.push(dm.map(|d| -d * w));
    }
    let cost = residuals.iter().map(|r| r * r).sum();
    Evaluation { residuals, jacobian, cost }
}

/// Jᵀ J and Jᵀ r in internal coordinates.
fn normal_equations(e: &Evaluation, scale: &Vector4<f64>) -> (Matrix4<f64>, Vector4<f64>) {
    let mut jtj = Matrix4::zeros();
    let mut jtr = Vector4::zeros();
    for (row, r) in e.jacobian.iter().zip(&e.residuals) {
        let j = Vector4::new(row[0], row[1], row[2], row[3]).component_mul(scale);
        jtj += j * j.transpose();
        jtr += j * *r;
    }
    (jtj, jtr)
}

struct LocalFit {
    params: FitParams,
    eval: Evaluation,
    iterations: usize,
    converged: bool,
    gradient_norm: f64,
}

fn levenberg_marquardt(scan: &FringeScan, cfg: &ExperimentConfig, start: FitParams, opts: &FitOptions) -> LocalFit {
    let mut x = start.to_internal();
    let mut params = start;
    let mut eval = evaluate(scan, cfg, &params, opts.charge_rel_std);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    let mut gradient_norm = f64::INFINITY;

    while iterations < opts.max_iterations {
        iterations += 1;
        let (jtj, jtr) = normal_equations(&eval, &params.internal_scale());
        gradient_norm = jtr.norm();
        let mut improved = false;
        while lambda < 1e16 {
            let mut a = jtj;
            for i in 0..4 {
                a[(i, i)] += lambda * jtj[(i, i)].max(1e-30);
            }
            let Some(step) = a.cholesky().map(|ch| ch.solve(&(-jtr))) else {
                lambda *= 10.0;
                continue;
            };
            let trial_x = x + step;
            let trial = FitParams::from_internal(&trial_x, start.a_b.signum());
            let trial_eval = evaluate(scan, cfg, &trial, opts.charge_rel_std);
            if trial_eval.cost.is_finite() && trial_eval.cost <= eval.cost {
                let rel_cost = (eval.cost - trial_eval.cost) / eval.cost.max(f64::MIN_POSITIVE);
                let rel_step = (0..4).map(|i| step[i].abs() / (x[i].abs() + opts.tolerance)).fold(0.0, f64::max);
                x = trial_x;
                params = trial;
                eval = trial_eval;
                lambda = (lambda / 10.0).max(1e-12);
                improved = true;
                if rel_step < opts.tolerance || rel_cost < opts.tolerance || eval.cost == 0.0 {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        // no downhill step at any damping: the current point is a minimum to
        // working precision
        if !improved {
            converged = true;
        }
        if converged {
            break;
        }
    }
    LocalFit { params, eval, iterations, converged, gradient_norm }
}

/// Weighted least-squares fit of (a_B, φ₀, V₀, τ) to `scan`, keeping the
/// best of four φ₀ starts.
pub fn fit_scan(scan: &FringeScan, model_cfg: &ExperimentConfig, opts: &FitOptions) -> Result<FitResult> {
    let n = scan.points.len();
    if n < MIN_FIT_POINTS {
        return Err(Error::InvalidParameter(format!("{n} scan points, need at least {MIN_FIT_POINTS}")));
    }
    let init = opts.initial;
    if !(init.visibility0 > 0.0 && init.visibility0 < 1.0 && init.decay_time > 0.0 && init.a_b.is_finite() && init.a_b != 0.0) {
        return Err(Error::InvalidParameter(format!("initial guess {init:?} out of domain")));
    }

    let (best, phi0_start) = PHI0_STARTS
        .iter()
        .map(|&phi0| (levenberg_marquardt(scan, model_cfg, FitParams { phi0: init.phi0 + phi0, ..init }, opts), phi0))
        .min_by(|a, b| a.0.eval.cost.total_cmp(&b.0.eval.cost))
        .expect("at least one start");

    // covariance in natural parameters
    let (jtj, _) = normal_equations(&best.eval, &Vector4::repeat(1.0));
    let inverse = jtj
        .try_inverse()
        .filter(|m| m.iter().all(|v| v.is_finite()) && (0..4).all(|i| m[(i, i)] > 0.0))
        .ok_or_else(|| Error::DegenerateFit("normal equations are singular".into()))?;
    let covariance = ((inverse + inverse.transpose()) * 0.5).into();
    let covariance: [[f64; 4]; 4] = covariance;

    let mut params = best.params;
    params.phi0 = params.phi0.rem_euclid(TAU);
    let unweighted: f64 = best
        .eval
        .residuals
        .iter()
        .zip(&scan.points)
        .map(|(r, p)| (r * p.sigma_p1).powi(2))
        .sum();
    let dof = n.saturating_sub(4);
    Ok(FitResult {
        params,
        covariance,
        residual_rms: (unweighted / n as f64).sqrt(),
        converged: best.converged,
        diagnostics: FitDiagnostics {
            iterations: best.iterations,
            chi_square: best.eval.cost,
            degrees_of_freedom: dof,
            reduced_chi_square: best.eval.cost / dof.max(1) as f64,
            gradient_norm: best.gradient_norm,
            phi0_start,
            n_points: n,
        },
    })
}

/// Scan, then fit, for trials `0..reps` with seeds `base_seed + trial`.
/// Trials run in parallel; the result order follows the trial index.
pub fn repeated_fits(
    cfg: &ExperimentConfig,
    t1_grid: &[f64],
    noise: &NoiseSpec,
    opts: &FitOptions,
    base_seed: u64,
    reps: usize,
) -> Vec<Result<FitResult>> {
    (0..reps)
        .into_par_iter()
        .map(|trial| {
            let scan = generate_scan(cfg, t1_grid, noise, base_seed.wrapping_add(trial as u64))?;
            fit_scan(&scan, cfg, opts)
        })
        .collect()
}

/// Time-of-flight inputs: a single state pushed by one gradient pulse and
/// imaged after free flight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TofSpec {
    pub pulse_duration: f64,
    pub tof: f64,
    /// Standard deviation of one centroid measurement, m.
    pub position_noise: f64,
    pub trials: usize,
    /// Moment fraction μ/μ_B of the imaged state.
    pub mu_frac: f64,
}

impl TofSpec {
    fn check(&self) -> Result<()> {
        if !(self.pulse_duration > 0.0 && self.tof > self.pulse_duration) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < pulse ({}) < tof ({})",
                self.pulse_duration, self.tof
            )));
        }
        if self.trials == 0 || !(self.position_noise >= 0.0) || self.mu_frac == 0.0 {
            return Err(Error::InvalidParameter("trials, position noise or mu_frac invalid".into()));
        }
        Ok(())
    }

    /// Displacement per unit a_B, Δz/a_B = μ·t_p·(tof − t_p/2).
    pub fn lever_arm(&self) -> f64 {
        self.mu_frac * self.pulse_duration * (self.tof - self.pulse_duration / 2.0)
    }

    /// Position noise for which `trials` repetitions give a standard error
    /// of `target` on a_B.
    pub fn noise_for_uncertainty(&self, target: f64) -> f64 {
        target * (self.trials as f64).sqrt() * self.lever_arm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TofEstimate {
    #[serde(rename = "a_B_m_per_s2")]
    pub a_b: f64,
    #[serde(rename = "uncertainty_m_per_s2")]
    pub uncertainty: f64,
    pub trials: usize,
}

/// Mean and standard error of a_B over `spec.trials` noisy TOF shots.
pub fn tof_gradient_estimate(true_a_b: f64, spec: &TofSpec, seed: u64) -> Result<TofEstimate> {
    spec.check()?;
    if spec.position_noise == 0.0 {
        return Ok(TofEstimate { a_b: true_a_b, uncertainty: 0.0, trials: spec.trials });
    }
    let lever = spec.lever_arm();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let estimates: Vec<f64> = (0..spec.trials)
        .map(|_| {
            // Δz = a_B·lever + noise, inverted as Δz/lever
            let noise = spec.position_noise * rng.sample::<f64, _>(rand_distr::StandardNormal);
            true_a_b + noise / lever
        })
        .collect();
    let n = estimates.len() as f64;
    let mean = estimates.iter().sum::<f64>() / n;
    let uncertainty = if estimates.len() > 1 {
        let var = estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        spec.position_noise / lever
    };
    Ok(TofEstimate { a_b: mean, uncertainty, trials: spec.trials })
}

/// The fit model for `cfg`, exposed for plotting the fitted curve.
pub fn model_curve(cfg: &ExperimentConfig, td: f64, params: &FitParams, t1: &[f64], charge_rel_std: f64) -> Vec<f64> {
    t1.iter().map(|&t| model(cfg, td, params, t, charge_rel_std)).collect()
}

/// True parameters of `cfg` in fit coordinates.
pub fn true_params(cfg: &ExperimentConfig) -> FitParams {
    FitParams { a_b: cfg.field.a_b, phi0: cfg.phi0, visibility0: cfg.visibility0, decay_time: cfg.decay_time }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const US: f64 = 1e-6;

    fn grid() -> Vec<f64> {
        linear_t1_grid(0.0, 70.0 * US, 71).unwrap()
    }

    #[test]
    fn noiseless_unit_visibility_is_the_bare_fringe() {
        let mut cfg = ExperimentConfig::default();
        cfg.visibility0 = 1.0;
        cfg.decay_time = f64::INFINITY;
        cfg.phi0 = 0.4;
        let scan = generate_scan(&cfg, &grid(), &NoiseSpec::noiseless(1), 1).unwrap();
        for p in &scan.points {
            let phase = closed_form_phase_at(&cfg.constants, &cfg.levels, cfg.field.a_b, p.t1, cfg.timing.td1).total;
            assert_eq!(p.p1, (0.5 * (1.0 - (phase + 0.4).cos())).clamp(0.0, 1.0));
        }
    }

    #[test]
    fn noiseless_fit_recovers_truth() {
        let cfg = ExperimentConfig::default();
        let scan = generate_scan(&cfg, &grid(), &NoiseSpec::noiseless(1), 0).unwrap();
        let fit = fit_scan(&scan, &cfg, &FitOptions::default()).unwrap();
        assert!(fit.converged);
        assert!(fit.residual_rms <= 1e-10, "{}", fit.residual_rms);
        assert!((fit.params.a_b - 273.16).abs() < 1e-8, "{:?}", fit.params);
        assert!((fit.params.visibility0 - 0.68).abs() < 1e-8);
        assert!((fit.params.decay_time - 75e-6).abs() < 1e-12);
        assert!(fit.params.phi0.min(TAU - fit.params.phi0) < 1e-8);
    }

    #[test]
    fn zero_initial_gradient_is_rejected() {
        let scan = generate_scan(&ExperimentConfig::default(), &grid(), &NoiseSpec::noiseless(1), 0).unwrap();
        let opts = FitOptions { initial: FitParams { a_b: 0.0, ..FitOptions::default().initial }, ..Default::default() };
        assert!(matches!(fit_scan(&scan, &ExperimentConfig::default(), &opts), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn fit_recovers_phase_offset() {
        let mut cfg = ExperimentConfig::default();
        cfg.phi0 = PI / 3.0;
        let scan = generate_scan(&cfg, &grid(), &NoiseSpec::default(), 11).unwrap();
        let fit = fit_scan(&scan, &cfg, &FitOptions::default()).unwrap();
        let err = (fit.params.phi0 - PI / 3.0 + PI).rem_euclid(TAU) - PI;
        assert!(err.abs() <= 3.0 * fit.uncertainties()[1], "{err} vs {}", fit.uncertainties()[1]);
        assert!((fit.params.a_b - 273.16).abs() <= 3.0 * fit.a_b_uncertainty());
    }

    #[test]
    fn charge_jitter_matches_linear_propagation() {
        let cfg = ExperimentConfig::default();
        let t1 = 70.0 * US;
        let rel = 3.6e-3;
        let expected = phase_jitter_std(&cfg, t1, rel);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let normal = Normal::new(1.0, rel).unwrap();
        let phases: Vec<f64> = (0..20_000)
            .map(|_| {
                let a = cfg.field.a_b * normal.sample(&mut rng);
                closed_form_phase_at(&cfg.constants, &cfg.levels, a, t1, cfg.timing.td1).total
            })
            .collect();
        let mean = phases.iter().sum::<f64>() / phases.len() as f64;
        let std = (phases.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (phases.len() - 1) as f64).sqrt();
        assert!(((std - expected) / expected).abs() < 0.03, "{std} vs {expected}");
        // about 0.14 rad at the longest pulse
        assert!((expected - 0.138).abs() < 0.01, "{expected}");
    }

    #[test]
    fn detection_noise_is_smallest_at_fringe_extrema() {
        let mut cfg = ExperimentConfig::default().with_a_b(0.0);
        cfg.visibility0 = 0.999;
        let noise = NoiseSpec { charge_rel_std: 0.0, atoms_per_shot: 1000, shots_per_point: 400 };
        let t1 = [10.0 * US];
        cfg.phi0 = 0.0;
        let extremum = generate_scan(&cfg, &t1, &noise, 3).unwrap().points[0].sigma_p1;
        cfg.phi0 = PI / 2.0;
        let quadrature = generate_scan(&cfg, &t1, &noise, 3).unwrap().points[0].sigma_p1;
        assert!(extremum < quadrature, "{extremum} vs {quadrature}");
    }

    #[test]
    fn averaged_fringe_matches_quadrature() {
        let cfg = ExperimentConfig::default();
        let (x, w) = gauss_hermite(GAUSS_HERMITE_NODES);
        let (a, phi0, td, s) = (273.16, 0.3, cfg.timing.td1, 0.02);
        for t1 in [10.0 * US, 40.0 * US, 70.0 * US] {
            let (z, dz) = fringe_phasor(&cfg, a, phi0, t1, td, s);
            let quad: f64 = x
                .iter()
                .zip(&w)
                .map(|(x, w)| {
                    let ph = closed_form_phase_at(&cfg.constants, &cfg.levels, a * (1.0 + s * x), t1, td).total;
                    w * (ph + phi0).cos()
                })
                .sum();
            assert!((z.re - quad).abs() < 1e-10, "{} vs {quad}", z.re);
            let h = 1e-5;
            let fd = (fringe_phasor(&cfg, a + h, phi0, t1, td, s).0 - fringe_phasor(&cfg, a - h, phi0, t1, td, s).0) / (2.0 * h);
            assert!((fd - dz).norm() < 1e-7 * dz.norm().max(1.0), "{fd} vs {dz}");
        }
        // no jitter: the bare fringe and its slope
        let t1 = 50.0 * US;
        let (z, dz) = fringe_phasor(&cfg, a, phi0, t1, td, 0.0);
        let ph = closed_form_phase_at(&cfg.constants, &cfg.levels, a, t1, td).total + phi0;
        let slope = closed_form_phase_slope(&cfg.constants, &cfg.levels, a, t1, td);
        assert!((z.re - ph.cos()).abs() < 1e-12);
        assert!((dz.re + ph.sin() * slope).abs() < 1e-10);
    }

    #[test]
    fn charge_averaged_fit_is_unbiased_on_the_mean_scan() {
        // the expected scan under charge noise, fitted with and without the
        // averaged model
        let cfg = ExperimentConfig::default();
        let noise = NoiseSpec { charge_rel_std: 3.6e-3, atoms_per_shot: 0, shots_per_point: 1 };
        let (x, w) = gauss_hermite(GAUSS_HERMITE_NODES);
        let points = grid()
            .iter()
            .map(|&t1| {
                let v = cfg.envelope.visibility_at(cfg.visibility0, cfg.decay_time, t1, 4.0 * t1 + 2.0 * cfg.timing.td1);
                let p1: f64 = x
                    .iter()
                    .zip(&w)
                    .map(|(x, w)| {
                        let a = cfg.field.a_b * (1.0 + noise.charge_rel_std * x);
                        let ph = closed_form_phase_at(&cfg.constants, &cfg.levels, a, t1, cfg.timing.td1).total;
                        w * 0.5 * (1.0 - v * ph.cos())
                    })
                    .sum();
                ScanPoint { t1, p1, sigma_p1: 1e-3 }
            })
            .collect();
        let scan = FringeScan::new(points, cfg.timing.td1, 1, Provenance::Synthetic).unwrap();
        let bare = fit_scan(&scan, &cfg, &FitOptions::default()).unwrap();
        let opts = FitOptions { charge_rel_std: noise.charge_rel_std, ..FitOptions::default() };
        let averaged = fit_scan(&scan, &cfg, &opts).unwrap();
        assert!((bare.params.a_b - 273.16).abs() > 5e-3, "{}", bare.params.a_b);
        assert!((averaged.params.a_b - 273.16).abs() < 1e-6, "{}", averaged.params.a_b);
    }

    #[test]
    fn gauss_hermite_integrates_normal_moments() {
        let (x, w) = gauss_hermite(GAUSS_HERMITE_NODES);
        let moment = |k: i32| x.iter().zip(&w).map(|(x, w)| w * x.powi(k)).sum::<f64>();
        assert!((moment(0) - 1.0).abs() < 1e-13);
        assert!(moment(1).abs() < 1e-13);
        assert!((moment(2) - 1.0).abs() < 1e-12);
        assert!((moment(4) - 3.0).abs() < 1e-11);
        assert!((moment(6) - 15.0).abs() < 1e-10);
    }

    #[test]
    fn reported_sigma_matches_shot_scatter() {
        let cfg = ExperimentConfig::default();
        let noise = NoiseSpec { shots_per_point: 1, ..NoiseSpec::default() };
        let t1 = [60.0 * US];
        let draws: Vec<ScanPoint> =
            (0..4000).map(|seed| generate_scan(&cfg, &t1, &noise, seed).unwrap().points[0]).collect();
        let mean = draws.iter().map(|p| p.p1).sum::<f64>() / draws.len() as f64;
        let sd = (draws.iter().map(|p| (p.p1 - mean).powi(2)).sum::<f64>() / (draws.len() - 1) as f64).sqrt();
        let reported = draws[0].sigma_p1;
        assert!(((sd - reported) / reported).abs() < 0.05, "{sd} vs {reported}");
    }

    #[test]
    fn scan_is_seed_deterministic() {
        let cfg = ExperimentConfig::default();
        let a = generate_scan(&cfg, &grid(), &NoiseSpec::default(), 42).unwrap();
        let b = generate_scan(&cfg, &grid(), &NoiseSpec::default(), 42).unwrap();
        let c = generate_scan(&cfg, &grid(), &NoiseSpec::default(), 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn csv_round_trip() {
        let cfg = ExperimentConfig::default();
        let scan = generate_scan(&cfg, &grid(), &NoiseSpec::default(), 7).unwrap();
        let mut buf = Vec::new();
        scan.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t1_us,p1,sigma_p1\n0,"), "{}", &text[..40]);
        let back = FringeScan::read_csv(buf.as_slice(), scan.td, scan.shots_per_point).unwrap();
        assert_eq!(back.points, scan.points);
        assert_eq!(back.provenance, Provenance::External);
    }

    #[test]
    fn scan_validation() {
        let p = |t1, p1, s| ScanPoint { t1, p1, sigma_p1: s };
        assert!(FringeScan::new(vec![], 0.0, 1, Provenance::External).is_err());
        assert!(FringeScan::new(vec![p(0.0, 1.1, 0.1)], 0.0, 1, Provenance::External).is_err());
        assert!(FringeScan::new(vec![p(0.0, 0.5, 0.0)], 0.0, 1, Provenance::External).is_err());
        assert!(FringeScan::new(vec![p(1.0, 0.5, 0.1), p(1.0, 0.5, 0.1)], 0.0, 1, Provenance::External).is_err());
        let few = generate_scan(&ExperimentConfig::default(), &[1e-6, 2e-6], &NoiseSpec::default(), 0).unwrap();
        assert!(fit_scan(&few, &ExperimentConfig::default(), &FitOptions::default()).is_err());
        assert!(generate_scan(&ExperimentConfig::default(), &[], &NoiseSpec::default(), 0).is_err());
        assert!(generate_scan(&ExperimentConfig::default(), &[1e-6], &NoiseSpec::noiseless(0), 0).is_err());
    }

    #[test]
    fn flat_scan_is_degenerate() {
        // with equal moments the phase vanishes and a_B drops out of the model
        let scan = generate_scan(&ExperimentConfig::default(), &grid(), &NoiseSpec::noiseless(1), 0).unwrap();
        let mut model_cfg = ExperimentConfig::default();
        model_cfg.levels.mu2_frac = model_cfg.levels.mu1_frac;
        assert!(matches!(fit_scan(&scan, &model_cfg, &FitOptions::default()), Err(Error::DegenerateFit(_))));
    }

    fn tof() -> TofSpec {
        TofSpec { pulse_duration: 70.0 * US, tof: 1000.0 * US, position_noise: 0.0, trials: 100, mu_frac: 1.0 }
    }

    #[test]
    fn tof_without_noise_is_exact() {
        let est = tof_gradient_estimate(273.16, &tof(), 1).unwrap();
        assert!((est.a_b - 273.16).abs() < 1e-12);
        assert_eq!(est.uncertainty, 0.0);
    }

    #[test]
    fn tof_noise_calibration_hits_target() {
        let mut spec = TofSpec { trials: 710, ..tof() };
        spec.position_noise = spec.noise_for_uncertainty(6.0);
        let est = tof_gradient_estimate(273.16, &spec, 2).unwrap();
        assert!((est.uncertainty - 6.0).abs() < 0.6, "{}", est.uncertainty);
    }

    #[test]
    fn tof_uncertainty_scales_as_inverse_sqrt_trials() {
        let mut spec = TofSpec { trials: 400, ..tof() };
        spec.position_noise = 10e-6;
        let few = tof_gradient_estimate(273.16, &spec, 3).unwrap().uncertainty;
        spec.trials = 6400;
        let many = tof_gradient_estimate(273.16, &spec, 3).unwrap().uncertainty;
        assert!((few / many - 4.0).abs() < 0.4, "{}", few / many);
    }

    #[test]
    fn tof_rejects_bad_times() {
        assert!(tof_gradient_estimate(1.0, &TofSpec { tof: 10.0 * US, ..tof() }, 0).is_err());
        assert!(tof_gradient_estimate(1.0, &TofSpec { pulse_duration: 0.0, ..tof() }, 0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn scan_points_are_valid(seed in any::<u64>(), shots in 1usize..20) {
            let noise = NoiseSpec { shots_per_point: shots, ..NoiseSpec::default() };
            let scan = generate_scan(&ExperimentConfig::default(), &grid(), &noise, seed).unwrap();
            for p in &scan.points {
                prop_assert!((0.0..=1.0).contains(&p.p1));
                prop_assert!(p.sigma_p1 > 0.0);
            }
        }

        #[test]
        fn internal_coordinates_round_trip(a in 100.0..400.0f64, phi in 0.0..6.0f64, v in 0.01..0.99f64, tau in 1e-6..1e-3f64) {
            let p = FitParams { a_b: a, phi0: phi, visibility0: v, decay_time: tau };
            let back = FitParams::from_internal(&p.to_internal(), 1.0);
            prop_assert!((back.visibility0 - v).abs() < 1e-12);
            prop_assert!(((back.decay_time - tau) / tau).abs() < 1e-12);
            prop_assert!(((back.a_b - a) / a).abs() < 1e-14);
        }
    }
}
