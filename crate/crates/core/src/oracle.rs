//! Grid-based Schrödinger evolution of each branch under its piecewise
//! linear potential, used to check the analytic phase, the displacements and
//! the Gaussian overlap model independently of the closed forms.
//!
//! The propagator is Strang split-operator (half potential kick, exact
//! kinetic step in k-space, half kick). Every force segment is covered by
//! an integer number of equal steps, so F(t) only switches on step
//! boundaries.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlannerScalar};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::kinematics::{self, ClosureResiduals};
use crate::phase::{recombination_visibility, GaussianPacket};

/// Smallest accepted grid.
pub const MIN_GRID_POINTS: usize = 1 << 10;
/// Minimum steps across the shortest force segment.
pub const MIN_STEPS_PER_SEGMENT: usize = 64;
/// Clearance required between the packet and the grid edge, in packet widths.
pub const EDGE_CLEARANCE_SIGMAS: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    pub z_min: f64,
    pub z_max: f64,
    pub n_points: usize,
    /// Target time step; each segment uses the largest step ≤ `dt` that
    /// divides it exactly.
    pub dt: f64,
}

impl GridSpec {
    pub fn new(z_min: f64, z_max: f64, n_points: usize, dt: f64) -> Result<Self> {
        if !n_points.is_power_of_two() || n_points < MIN_GRID_POINTS {
            return Err(Error::InvalidParameter(format!(
                "n_points = {n_points} must be a power of two >= {MIN_GRID_POINTS}"
            )));
        }
        if !(z_max > z_min) {
            return Err(Error::InvalidParameter(format!("empty window [{z_min}, {z_max}]")));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt = {dt} must be > 0")));
        }
        Ok(Self { z_min, z_max, n_points, dt })
    }

    /// Window that holds both branches plus a generous margin for the
    /// spreading packet, and a step of `shortest segment / steps_per_segment`.
    pub fn auto(
        cfg: &ExperimentConfig,
        packet: &GaussianPacket,
        n_points: usize,
        steps_per_segment: usize,
    ) -> Result<Self> {
        if steps_per_segment < MIN_STEPS_PER_SEGMENT {
            return Err(Error::InvalidParameter(format!(
                "steps_per_segment = {steps_per_segment} < {MIN_STEPS_PER_SEGMENT}"
            )));
        }
        Self::auto_unchecked(cfg, packet, n_points, steps_per_segment)
    }

    /// As [`GridSpec::auto`] without the lower bound on the step count, for
    /// convergence studies.
    pub fn auto_unchecked(
        cfg: &ExperimentConfig,
        packet: &GaussianPacket,
        n_points: usize,
        steps_per_segment: usize,
    ) -> Result<Self> {
        let (lo, hi) = excursion(cfg, packet)?;
        let sigma = spread_width(cfg, packet, cfg.timing.total_time());
        let margin = 2.0 * EDGE_CLEARANCE_SIGMAS * sigma;
        let shortest = cfg
            .timing
            .force_profile()
            .iter()
            .filter(|s| !s.is_empty())
            .map(|s| s.duration())
            .fold(f64::INFINITY, f64::min);
        Self::new(lo - margin, hi + margin, n_points, shortest / steps_per_segment.max(1) as f64)
    }

    pub fn spacing(&self) -> f64 {
        (self.z_max - self.z_min) / self.n_points as f64
    }

    pub fn position(&self, j: usize) -> f64 {
        self.z_min + self.spacing() * j as f64
    }

    /// Angular wavenumber of FFT bin `j`.
    pub fn wavenumber(&self, j: usize) -> f64 {
        let n = self.n_points as isize;
        let j = j as isize;
        let signed = if j < n / 2 { j } else { j - n };
        2.0 * PI * signed as f64 / (self.z_max - self.z_min)
    }
}

/// Packet width after `t` of free evolution.
fn spread_width(cfg: &ExperimentConfig, packet: &GaussianPacket, t: f64) -> f64 {
    let c = &cfg.constants;
    let growth = c.hbar * t / (2.0 * c.mass * packet.sigma0);
    (packet.sigma0.powi(2) + growth.powi(2)).sqrt()
}

/// Range of centroid positions of both branches over the sequence.
fn excursion(cfg: &ExperimentConfig, packet: &GaussianPacket) -> Result<(f64, f64)> {
    let m = cfg.constants.mass;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for s in kinematics::sample_trajectories(cfg, 512)? {
        let free = packet.center + packet.momentum * s.t / m;
        for z in [s.z1, s.z2] {
            lo = lo.min(free + z);
            hi = hi.max(free + z);
        }
    }
    Ok((lo, hi))
}

/// Final state of one branch on the grid.
#[derive(Debug, Clone)]
pub struct Wavefunction {
    pub grid: GridSpec,
    pub psi: Vec<Complex64>,
    pub time: f64,
    pub steps: usize,
    /// Largest |‖ψ‖² − 1| seen after any step.
    pub norm_drift: f64,
}

impl Wavefunction {
    pub fn norm(&self) -> f64 {
        self.psi.iter().map(Complex64::norm_sqr).sum::<f64>() * self.grid.spacing()
    }

    pub fn mean_position(&self) -> f64 {
        moments(&self.psi, &self.grid).0
    }

    pub fn position_std(&self) -> f64 {
        moments(&self.psi, &self.grid).1
    }

    /// ⟨p⟩ from the momentum-space density.
    pub fn mean_momentum(&self, hbar: f64) -> f64 {
        let mut phi = self.psi.clone();
        FftPlannerScalar::new().plan_fft_forward(phi.len()).process(&mut phi);
        let total: f64 = phi.iter().map(Complex64::norm_sqr).sum();
        let weighted: f64 = phi.iter().enumerate().map(|(j, c)| c.norm_sqr() * self.grid.wavenumber(j)).sum();
        hbar * weighted / total
    }

    /// ⟨self|other⟩.
    pub fn inner(&self, other: &Wavefunction) -> Complex64 {
        let sum: Complex64 = self.psi.iter().zip(&other.psi).map(|(a, b)| a.conj() * b).sum();
        sum * self.grid.spacing()
    }

    /// Apply D(δz, δp): translate by δz in k-space, then boost by δp.
    pub fn displaced(&self, delta_z: f64, delta_p: f64, hbar: f64) -> Wavefunction {
        let n = self.psi.len();
        let mut planner = FftPlannerScalar::new();
        let mut phi = self.psi.clone();
        planner.plan_fft_forward(n).process(&mut phi);
        for (j, c) in phi.iter_mut().enumerate() {
            *c *= Complex64::from_polar(1.0 / n as f64, -self.grid.wavenumber(j) * delta_z);
        }
        planner.plan_fft_inverse(n).process(&mut phi);
        for (j, c) in phi.iter_mut().enumerate() {
            *c *= Complex64::from_polar(1.0, delta_p * self.grid.position(j) / hbar);
        }
        Wavefunction { psi: phi, ..self.clone() }
    }

    /// Raw little-endian (re, im) pairs plus the JSON header describing them.
    pub fn snapshot(&self) -> (serde_json::Value, Vec<u8>) {
        let header = serde_json::json!({
            "n_points": self.grid.n_points,
            "z_min": self.grid.z_min,
            "z_max": self.grid.z_max,
            "t": self.time,
            "layout": "f64 little-endian (re, im) pairs",
        });
        let mut bytes = Vec::with_capacity(16 * self.psi.len());
        for c in &self.psi {
            bytes.extend_from_slice(&c.re.to_le_bytes());
            bytes.extend_from_slice(&c.im.to_le_bytes());
        }
        (header, bytes)
    }
}

fn moments(psi: &[Complex64], grid: &GridSpec) -> (f64, f64) {
    let (mut w, mut s1, mut s2) = (0.0, 0.0, 0.0);
    for (j, c) in psi.iter().enumerate() {
        let p = c.norm_sqr();
        let z = grid.position(j);
        w += p;
        s1 += p * z;
        s2 += p * z * z;
    }
    let mean = s1 / w;
    (mean, (s2 / w - mean * mean).max(0.0).sqrt())
}

fn initial_state(packet: &GaussianPacket, grid: &GridSpec, hbar: f64) -> Vec<Complex64> {
    let s = packet.sigma0;
    let amp = (2.0 * PI * s * s).powf(-0.25);
    let mut psi: Vec<Complex64> = (0..grid.n_points)
        .map(|j| {
            let z = grid.position(j);
            let envelope = amp * (-(z - packet.center).powi(2) / (4.0 * s * s)).exp();
            Complex64::from_polar(envelope, packet.momentum * z / hbar)
        })
        .collect();
    let norm = (psi.iter().map(Complex64::norm_sqr).sum::<f64>() * grid.spacing()).sqrt();
    psi.iter_mut().for_each(|c| *c /= norm);
    psi
}

/// FFT plans for one grid size. The scalar planner is used on purpose: the
/// SIMD kernels carry a systematic norm gain of about 1e-16 per transform
/// pair, which adds up over the thousands of steps of one evolution.
struct Stepper {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
}

impl Stepper {
    fn new(n: usize) -> Self {
        let mut planner = FftPlannerScalar::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let len = forward.get_inplace_scratch_len().max(inverse.get_inplace_scratch_len());
        Self { forward, inverse, scratch: vec![Complex64::new(0.0, 0.0); len] }
    }
}

/// Evolve `packet` on branch `branch` through the full pulse sequence.
pub fn evolve_packet(
    cfg: &ExperimentConfig,
    branch: u8,
    packet: &GaussianPacket,
    grid: &GridSpec,
) -> Result<Wavefunction> {
    let frac = cfg.levels.frac(branch)?;
    let c = &cfg.constants;
    let n = grid.n_points;
    let mut psi = initial_state(packet, grid, c.hbar);
    let mut stepper = Stepper::new(n);
    let inv_n = 1.0 / n as f64;
    let dz = grid.spacing();

    let mut time = 0.0;
    let mut steps = 0;
    let mut norm_drift: f64 = 0.0;
    for seg in cfg.timing.force_profile().iter().filter(|s| !s.is_empty()) {
        let magnetic = -frac * c.mass * cfg.field.a_b * f64::from(seg.polarity) * cfg.field.polarity_scale(seg.polarity);
        let force = c.mass * c.gravity + magnetic;
        let n_steps = (seg.duration() / grid.dt * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        let dt = seg.duration() / n_steps as f64;

        // exp(-i V dt / 2ħ) with V = -f z; adjacent half kicks inside a
        // segment are merged into one full kick
        let half_kick: Vec<Complex64> =
            (0..n).map(|j| Complex64::from_polar(1.0, force * grid.position(j) * dt / (2.0 * c.hbar))).collect();
        let full_kick: Vec<Complex64> =
            (0..n).map(|j| Complex64::from_polar(1.0, force * grid.position(j) * dt / c.hbar)).collect();
        let drift: Vec<Complex64> = (0..n)
            .map(|j| {
                let k = grid.wavenumber(j);
                Complex64::from_polar(1.0, -c.hbar * k * k * dt / (2.0 * c.mass))
            })
            .collect();

        for step in 0..n_steps {
            let kick = if step == 0 { &half_kick } else { &full_kick };
            psi.iter_mut().zip(kick).for_each(|(a, b)| *a *= b);
            stepper.forward.process_with_scratch(&mut psi, &mut stepper.scratch);
            // 1/n is a power of two, so this rescale is exact
            psi.iter_mut().zip(&drift).for_each(|(a, b)| *a = *a * b * inv_n);
            stepper.inverse.process_with_scratch(&mut psi, &mut stepper.scratch);
            steps += 1;
            time += dt;

            let (mean, std) = moments(&psi, grid);
            let clearance = EDGE_CLEARANCE_SIGMAS * std;
            if mean - clearance < grid.z_min || mean + clearance > grid.z_max {
                return Err(Error::GridTooSmall { time_s: time });
            }
            let norm = psi.iter().map(Complex64::norm_sqr).sum::<f64>() * dz;
            norm_drift = norm_drift.max((norm - 1.0).abs());
        }
        psi.iter_mut().zip(&half_kick).for_each(|(a, b)| *a *= b);
    }
    Ok(Wavefunction { grid: *grid, psi, time: cfg.timing.total_time(), steps, norm_drift })
}

/// Numerical and analytic results for one configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleReport {
    /// |numeric δΦ − analytic δΦ| modulo 2π, rad.
    pub phase_error: f64,
    /// Largest centroid error over both branches, m.
    pub displacement_error_z: f64,
    /// Largest mean-momentum error over both branches, kg·m/s.
    pub displacement_error_p: f64,
    pub overlap_numeric: f64,
    pub overlap_analytic: f64,
    /// Φ₂ − Φ₁ extracted from the grid states, wrapped to (−π, π].
    pub phase_numeric_wrapped: f64,
    /// Φ₂ − Φ₁ from the kinematics.
    pub phase_analytic: f64,
    pub norm_drift: f64,
    pub steps: usize,
    pub grid: GridSpec,
    pub sigma0: f64,
}

/// Both evolved branches, kept for further analysis.
#[derive(Debug, Clone)]
pub struct OracleRun {
    pub branch1: Wavefunction,
    pub branch2: Wavefunction,
    pub report: OracleReport,
}

fn wrap(angle: f64) -> f64 {
    let w = angle.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// Evolve both branches and compare with the analytic factorization
/// U_i = e^{iΦ_i} D(Z_i, P_i) U₀.
pub fn run_oracle(cfg: &ExperimentConfig, packet: &GaussianPacket, grid: &GridSpec) -> Result<OracleRun> {
    let (w1, w2) = rayon::join(|| evolve_packet(cfg, 1, packet, grid), || evolve_packet(cfg, 2, packet, grid));
    let (w1, w2) = (w1?, w2?);
    let c = &cfg.constants;
    let (m, hbar) = (c.mass, c.hbar);
    let total = cfg.timing.total_time();
    let k1 = kinematics::branch_kinematics(cfg, 1)?;
    let k2 = kinematics::branch_kinematics(cfg, 2)?;

    // free part of the motion
    let mean_z = packet.center + packet.momentum * total / m;
    let mean_p = packet.momentum;

    let mut err_z: f64 = 0.0;
    let mut err_p: f64 = 0.0;
    for (w, k) in [(&w1, &k1), (&w2, &k2)] {
        err_z = err_z.max((w.mean_position() - (mean_z + k.position_total)).abs());
        err_p = err_p.max((w.mean_momentum(hbar) - (mean_p + k.momentum_total)).abs());
    }

    // ⟨ψ₁|ψ₂⟩ = e^{i(Φ₂−Φ₁)} e^{−i(P₁Z₂ − Z₁P₂)/2ħ} ⟨φ|D(δz, δp)|φ⟩ with φ = U₀ψ(0)
    let overlap = w1.inner(&w2);
    let (z1, p1, z2, p2) = (k1.position_total, k1.momentum_total, k2.position_total, k2.momentum_total);
    let (dz, dp) = (z2 - z1, p2 - p1);
    let composition = -(p1 * z2 - z1 * p2) / (2.0 * hbar);
    let centroid = (dp * mean_z - dz * mean_p) / hbar;
    let numeric = wrap(overlap.arg() - composition - centroid);
    let analytic = k2.phi_total - k1.phi_total;
    let residuals = ClosureResiduals { delta_p: dp, delta_z: dz };

    let report = OracleReport {
        phase_error: wrap(numeric - analytic).abs(),
        displacement_error_z: err_z,
        displacement_error_p: err_p,
        overlap_numeric: overlap.norm(),
        overlap_analytic: recombination_visibility(&residuals, packet, hbar, m, total),
        phase_numeric_wrapped: numeric,
        phase_analytic: analytic,
        norm_drift: w1.norm_drift.max(w2.norm_drift),
        steps: w1.steps,
        grid: *grid,
        sigma0: packet.sigma0,
    };
    Ok(OracleRun { branch1: w1, branch2: w2, report })
}

pub fn verify_factorization(cfg: &ExperimentConfig, packet: &GaussianPacket, grid: &GridSpec) -> Result<OracleReport> {
    Ok(run_oracle(cfg, packet, grid)?.report)
}

/// Numeric overlap after displacing branch 2 by an extra (δz, δp) at
/// recombination, next to the Gaussian model's prediction.
pub fn injected_defect_overlap(run: &OracleRun, cfg: &ExperimentConfig, packet: &GaussianPacket, delta_z: f64, delta_p: f64) -> (f64, f64) {
    let c = &cfg.constants;
    let shifted = run.branch2.displaced(delta_z, delta_p, c.hbar);
    let numeric = run.branch1.inner(&shifted).norm();
    let base = kinematics::closure_residuals(cfg);
    let residuals = ClosureResiduals { delta_p: base.delta_p + delta_p, delta_z: base.delta_z + delta_z };
    let model = recombination_visibility(&residuals, packet, c.hbar, c.mass, cfg.timing.total_time());
    (numeric, model)
}

/// One row of a time-step convergence study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergencePoint {
    pub steps_per_segment: usize,
    pub dt: f64,
    pub phase_error: f64,
}

/// Phase error for each step count, finest last.
pub fn dt_convergence(
    cfg: &ExperimentConfig,
    packet: &GaussianPacket,
    n_points: usize,
    steps_per_segment: &[usize],
) -> Result<Vec<ConvergencePoint>> {
    steps_per_segment
        .iter()
        .map(|&steps| {
            let grid = GridSpec::auto_unchecked(cfg, packet, n_points, steps)?;
            let report = verify_factorization(cfg, packet, &grid)?;
            Ok(ConvergencePoint { steps_per_segment: steps, dt: grid.dt, phase_error: report.phase_error })
        })
        .collect()
}

/// Observed orders log₂(e_k / e_{k+1}) between successive halvings of dt.
pub fn observed_orders(points: &[ConvergencePoint]) -> Vec<f64> {
    points
        .windows(2)
        .map(|w| (w[0].phase_error / w[1].phase_error).ln() / (w[0].dt / w[1].dt).ln())
        .collect()
}
