//! Branch displacements and action phases for the piecewise-constant force.
//!
//! Sign conventions: z points along gravity. Both states are low-field
//! seekers (Zeeman energy +μ_i B), so the force on branch i is
//!
//! ```text
//! f_i(t) = m g − μ_i ∂B_y/∂z · s(F(t)) · F(t)
//! ```
//!
//! where `s` is the polarity-dependent nonlinearity multiplier. With this
//! force the splitting pulse pushes |2⟩ against gravity. The momentum
//! displacement is `P_i(t) = ∫ f_i`, the position displacement
//! `Z_i(t) = (1/m) ∫ (t−τ) f_i dτ`, and the action phase
//! `Φ_i(t) = (1/2ħ) ∫ Z_i f_i dτ`. On each segment `P` is linear, `Z`
//! quadratic and `Φ` cubic, and all three are integrated in closed form.

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::pulse::ForceSegment;

/// Constant-force stretch of one branch with the state at its start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KinematicSegment {
    pub start: f64,
    pub end: f64,
    /// Total force on the branch, N.
    pub force: f64,
    pub momentum0: f64,
    pub position0: f64,
    pub phase0: f64,
}

impl KinematicSegment {
    fn momentum(&self, s: f64) -> f64 {
        self.momentum0 + self.force * s
    }

    fn position(&self, s: f64, mass: f64) -> f64 {
        self.position0 + (self.momentum0 * s + 0.5 * self.force * s * s) / mass
    }

    fn phase(&self, s: f64, mass: f64, hbar: f64) -> f64 {
        let integral_z = self.position0 * s + (self.momentum0 * s * s / 2.0 + self.force * s * s * s / 6.0) / mass;
        self.phase0 + self.force * integral_z / (2.0 * hbar)
    }
}

/// P_i, Z_i and Φ_i of one branch as a piecewise polynomial on `[0, T]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchKinematics {
    pub branch: u8,
    pub segments: Vec<KinematicSegment>,
    pub total_time: f64,
    pub momentum_total: f64,
    pub position_total: f64,
    pub phi_total: f64,
    mass: f64,
    hbar: f64,
}

impl BranchKinematics {
    fn locate(&self, t: f64) -> (&KinematicSegment, f64) {
        let seg = self
            .segments
            .iter()
            .find(|s| t < s.end)
            .or_else(|| self.segments.last())
            .expect("at least one segment");
        (seg, t - seg.start)
    }

    /// P_i(t). Past T the last segment is extended.
    pub fn momentum_at(&self, t: f64) -> f64 {
        let (seg, s) = self.locate(t);
        seg.momentum(s)
    }

    /// Z_i(t).
    pub fn position_at(&self, t: f64) -> f64 {
        let (seg, s) = self.locate(t);
        seg.position(s, self.mass)
    }

    /// Φ_i(t).
    pub fn phase_at(&self, t: f64) -> f64 {
        let (seg, s) = self.locate(t);
        seg.phase(s, self.mass, self.hbar)
    }

    /// Largest jump of P and Z across internal segment boundaries, relative
    /// to the largest magnitude reached. Both are zero up to rounding.
    pub fn continuity_defect(&self) -> (f64, f64) {
        let scale_p = self.segments.iter().map(|s| s.momentum0.abs()).fold(self.momentum_total.abs(), f64::max);
        let scale_z = self.segments.iter().map(|s| s.position0.abs()).fold(self.position_total.abs(), f64::max);
        let mut dp: f64 = 0.0;
        let mut dz: f64 = 0.0;
        for w in self.segments.windows(2) {
            let d = w[0].end - w[0].start;
            dp = dp.max((w[0].momentum(d) - w[1].momentum0).abs());
            dz = dz.max((w[0].position(d, self.mass) - w[1].position0).abs());
        }
        let rel = |x: f64, scale: f64| if scale > 0.0 { x / scale } else { x };
        (rel(dp, scale_p), rel(dz, scale_z))
    }
}

/// Magnetic part of the force on branch `frac` during `seg`.
fn magnetic_force(cfg: &ExperimentConfig, frac: f64, seg: &ForceSegment) -> f64 {
    let c = &cfg.constants;
    -frac * c.mass * cfg.field.a_b * f64::from(seg.polarity) * cfg.field.polarity_scale(seg.polarity)
}

pub fn branch_kinematics(cfg: &ExperimentConfig, branch: u8) -> Result<BranchKinematics> {
    let frac = cfg.levels.frac(branch)?;
    let c = &cfg.constants;
    let mut segments = Vec::with_capacity(6);
    let (mut p, mut z, mut phi) = (0.0, 0.0, 0.0);
    for seg in cfg.timing.force_profile().iter().filter(|s| !s.is_empty()) {
        let k = KinematicSegment {
            start: seg.start,
            end: seg.end,
            force: c.mass * c.gravity + magnetic_force(cfg, frac, seg),
            momentum0: p,
            position0: z,
            phase0: phi,
        };
        let d = seg.duration();
        p = k.momentum(d);
        z = k.position(d, c.mass);
        phi = k.phase(d, c.mass, c.hbar);
        segments.push(k);
    }
    Ok(BranchKinematics {
        branch,
        segments,
        total_time: cfg.timing.total_time(),
        momentum_total: p,
        position_total: z,
        phi_total: phi,
        mass: c.mass,
        hbar: c.hbar,
    })
}

/// Φ_i(T) in radians.
pub fn action_phase(cfg: &ExperimentConfig, branch: u8) -> Result<f64> {
    Ok(branch_kinematics(cfg, branch)?.phi_total)
}

/// Interferometer phase Φ₂(T) − Φ₁(T): the phase of the |2⟩ branch
/// relative to |1⟩.
pub fn interferometer_phase(cfg: &ExperimentConfig) -> Result<f64> {
    Ok(action_phase(cfg, 2)? - action_phase(cfg, 1)?)
}

/// Relative momentum and position of the branches at recombination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClosureResiduals {
    /// P₂(T) − P₁(T), kg·m/s.
    pub delta_p: f64,
    /// Z₂(T) − Z₁(T), m.
    pub delta_z: f64,
}

/// Closure residuals from the differential force alone; gravity drops out
/// before any arithmetic happens.
pub fn closure_residuals(cfg: &ExperimentConfig) -> ClosureResiduals {
    let (frac1, frac2) = (cfg.levels.mu1_frac, cfg.levels.mu2_frac);
    let profile = cfg.timing.force_profile();
    let mut delta_p = 0.0;
    let mut delta_z = 0.0;
    for (k, seg) in profile.iter().enumerate() {
        if seg.is_empty() || seg.polarity == 0 {
            continue;
        }
        let df = magnetic_force(cfg, frac2, seg) - magnetic_force(cfg, frac1, seg);
        let d = seg.duration();
        let remaining: f64 = profile[k + 1..].iter().map(ForceSegment::duration).sum();
        delta_p += df * d;
        delta_z += df * d * (remaining + d / 2.0);
    }
    ClosureResiduals { delta_p, delta_z: delta_z / cfg.constants.mass }
}

/// Sampled trajectories of both branches, for plotting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub z1: f64,
    pub z2: f64,
    pub p1: f64,
    pub p2: f64,
    pub polarity: i8,
}

pub fn sample_trajectories(cfg: &ExperimentConfig, n_samples: usize) -> Result<Vec<TrajectorySample>> {
    let b1 = branch_kinematics(cfg, 1)?;
    let b2 = branch_kinematics(cfg, 2)?;
    let total = cfg.timing.total_time();
    let n = n_samples.max(2);
    Ok((0..n)
        .map(|j| {
            let t = total * j as f64 / (n - 1) as f64;
            TrajectorySample {
                t,
                z1: b1.position_at(t),
                z2: b2.position_at(t),
                p1: b1.momentum_at(t),
                p2: b2.momentum_at(t),
                polarity: cfg.timing.polarity_at(t),
            }
        })
        .collect())
}

/// Minimum accepted panel count for [`quadrature_phase`].
pub const MIN_QUADRATURE_STEPS: usize = 100;

/// Φ_i(T) by composite Simpson quadrature.
///
/// This path shares nothing with [`branch_kinematics`]: Z_i(τ) comes from
/// summing the ramp responses of the individual Heaviside steps of F(t),
/// and the integral runs on a uniform grid of `n_steps` panels over
/// `[0, T]`. Panels that contain a switching time are split there, since
/// the integrand jumps with the force.
pub fn quadrature_phase(cfg: &ExperimentConfig, branch: u8, n_steps: usize) -> Result<f64> {
    if n_steps < MIN_QUADRATURE_STEPS {
        return Err(Error::InvalidParameter(format!("n_steps = {n_steps} < {MIN_QUADRATURE_STEPS}")));
    }
    let frac = cfg.levels.frac(branch)?;
    let c = &cfg.constants;
    let t = &cfg.timing;
    let total = t.total_time();

    // Step k switches the magnetic force by `jump` at time `at`.
    let edges = [
        0.0,
        t.t1,
        t.t1 + t.td1,
        t.t1 + t.td1 + t.t2 + t.t3,
        t.t1 + t.td1 + t.t2 + t.t3 + t.td2,
        total,
    ];
    let strength = frac * c.mass * cfg.field.a_b;
    let up = -strength * cfg.field.polarity_scale(1);
    let down = strength * cfg.field.polarity_scale(-1);
    let steps = [(edges[0], up), (edges[1], -up), (edges[2], down), (edges[3], -down), (edges[4], up), (edges[5], -up)];
    let gravity = c.mass * c.gravity;

    let force = |tau: f64| -> f64 {
        gravity + steps.iter().filter(|&&(at, _)| at <= tau).map(|&(_, jump)| jump).sum::<f64>()
    };
    let position = |tau: f64| -> f64 {
        let ramps: f64 = steps
            .iter()
            .filter(|&&(at, _)| at < tau)
            .map(|&(at, jump)| jump * (tau - at).powi(2) / 2.0)
            .sum();
        (gravity * tau * tau / 2.0 + ramps) / c.mass
    };
    // Piece (a, b) contains no switching time, so the force is read at its
    // midpoint and Z is continuous across the endpoints.
    let simpson = |a: f64, b: f64| -> f64 {
        if b <= a {
            return 0.0;
        }
        let m = 0.5 * (a + b);
        force(m) * (b - a) / 6.0 * (position(a) + 4.0 * position(m) + position(b))
    };

    let mut breaks: Vec<f64> = edges.iter().copied().filter(|&e| e > 0.0 && e < total).collect();
    breaks.sort_by(f64::total_cmp);
    let h = total / n_steps as f64;
    let mut sum = 0.0;
    for j in 0..n_steps {
        let a = h * j as f64;
        let b = if j + 1 == n_steps { total } else { h * (j + 1) as f64 };
        let mut lo = a;
        for &e in breaks.iter().filter(|&&e| e > a && e < b) {
            sum += simpson(lo, e);
            lo = e;
        }
        sum += simpson(lo, b);
    }
    Ok(sum / (2.0 * c.hbar))
}
