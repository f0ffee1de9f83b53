//! Closed-form interferometer phase, its T³ and T² limits, the fringe
//! probability and the imperfect-closure visibility of a Gaussian packet.
//!
//! Nothing here calls into [`crate::kinematics`]; the two paths are
//! compared against each other in the tests.

use serde::Serialize;

use crate::config::{ExperimentConfig, LevelPair, PhysicalConstants};
use crate::error::{Error, Result};
use crate::kinematics::ClosureResiduals;

/// The two contributions to δΦ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhaseBreakdown {
    /// Cross term ∝ m g a_B, rad.
    #[serde(rename = "gravity_term_rad")]
    pub gravity_term: f64,
    /// Term ∝ m a_B², rad.
    #[serde(rename = "magnetic_term_rad")]
    pub magnetic_term: f64,
    #[serde(rename = "total_rad")]
    pub total: f64,
}

impl PhaseBreakdown {
    fn new(gravity_term: f64, magnetic_term: f64) -> Self {
        Self { gravity_term, magnetic_term, total: gravity_term + magnetic_term }
    }
}

/// δΦ for pulse length `t1`, delay `td` and magnetic acceleration `a_b`.
///
/// ```text
/// δΦ = (m g a_B/ħ)(Δμ/μ_B)(2T₁³ + 3T₁²T_d + T₁T_d²)
///    + (m a_B²/ħ)((μ₁² − μ₂²)/μ_B²)((2/3)T₁³ + T₁²T_d)
/// ```
pub fn closed_form_phase_at(
    constants: &PhysicalConstants,
    levels: &LevelPair,
    a_b: f64,
    t1: f64,
    td: f64,
) -> PhaseBreakdown {
    let PhysicalConstants { hbar, mass, gravity, .. } = *constants;
    let (mu1, mu2) = (levels.mu1_frac, levels.mu2_frac);
    let gravity_timing = 2.0 * t1.powi(3) + 3.0 * t1 * t1 * td + t1 * td * td;
    let magnetic_timing = 2.0 / 3.0 * t1.powi(3) + t1 * t1 * td;
    PhaseBreakdown::new(
        mass * gravity * a_b / hbar * (mu1 - mu2) * gravity_timing,
        mass * a_b * a_b / hbar * (mu1 * mu1 - mu2 * mu2) * magnetic_timing,
    )
}

/// ∂δΦ/∂a_B of [`closed_form_phase_at`].
pub fn closed_form_phase_slope(constants: &PhysicalConstants, levels: &LevelPair, a_b: f64, t1: f64, td: f64) -> f64 {
    let PhysicalConstants { hbar, mass, gravity, .. } = *constants;
    let (mu1, mu2) = (levels.mu1_frac, levels.mu2_frac);
    let gravity_timing = 2.0 * t1.powi(3) + 3.0 * t1 * t1 * td + t1 * td * td;
    let magnetic_timing = 2.0 / 3.0 * t1.powi(3) + t1 * t1 * td;
    mass * gravity / hbar * (mu1 - mu2) * gravity_timing
        + 2.0 * mass * a_b / hbar * (mu1 * mu1 - mu2 * mu2) * magnetic_timing
}

/// Closed-form δΦ for `cfg`. Only defined for the ideal sequence without
/// force nonlinearity; otherwise use
/// [`interferometer_phase`](crate::kinematics::interferometer_phase).
pub fn closed_form_phase(cfg: &ExperimentConfig) -> Result<PhaseBreakdown> {
    if !cfg.timing.is_ideal() {
        return Err(Error::ClosedFormUnavailable("timing is not the ideal sequence".into()));
    }
    if cfg.field.nonlinearity_fraction != 0.0 {
        return Err(Error::ClosedFormUnavailable("force nonlinearity is non-zero".into()));
    }
    Ok(closed_form_phase_at(&cfg.constants, &cfg.levels, cfg.field.a_b, cfg.timing.t1, cfg.timing.td1))
}

/// Pure-cubic limit (T_d = 0, T = 4T₁):
/// δΦ = (m a_B/32ħ)(Δμ/μ_B)(g + (μ₁+μ₂)/(3μ_B)·a_B)·T³.
pub fn phase_t3_limit(cfg: &ExperimentConfig, total_time: f64) -> f64 {
    let c = &cfg.constants;
    let l = &cfg.levels;
    let a_b = cfg.field.a_b;
    c.mass * a_b / (32.0 * c.hbar)
        * (l.mu1_frac - l.mu2_frac)
        * (c.gravity + (l.mu1_frac + l.mu2_frac) / 3.0 * a_b)
        * total_time.powi(3)
}

/// Delta-pulse limit: δΦ = (δp₀/4ħ)·g·T².
pub fn phase_t2_limit(delta_p0: f64, total_time: f64, gravity: f64, hbar: f64) -> f64 {
    delta_p0 / (4.0 * hbar) * gravity * total_time * total_time
}

/// Momentum transferred by one pulse, δp₀ = m a_B T₁ (μ₁ − μ₂)/μ_B.
pub fn delta_p0(constants: &PhysicalConstants, levels: &LevelPair, a_b: f64, t1: f64) -> f64 {
    constants.mass * a_b * t1 * levels.delta_frac()
}

/// P₁ = ½[1 − V cos(δΦ + φ₀)].
pub fn fringe_probability(delta_phi: f64, phi0: f64, visibility: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&visibility) {
        return Err(Error::InvalidParameter(format!("visibility {visibility} outside [0, 1]")));
    }
    Ok(0.5 * (1.0 - visibility * (delta_phi + phi0).cos()))
}

/// Minimum-uncertainty Gaussian centre-of-mass state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaussianPacket {
    /// Position standard deviation, m.
    pub sigma0: f64,
    pub center: f64,
    pub momentum: f64,
}

impl GaussianPacket {
    pub fn new(sigma0: f64, center: f64, momentum: f64) -> Result<Self> {
        if !(sigma0.is_finite() && sigma0 > 0.0) {
            return Err(Error::InvalidParameter(format!("sigma0 = {sigma0} must be > 0")));
        }
        Ok(Self { sigma0, center, momentum })
    }

    pub fn at_rest(sigma0: f64) -> Result<Self> {
        Self::new(sigma0, 0.0, 0.0)
    }
}

/// |⟨ψ|D(δz, δp)|ψ⟩| for the minimum-uncertainty packet:
/// exp[−δz²/(8σ₀²) − σ₀²δp²/(2ħ²)].
pub fn closure_visibility(residuals: &ClosureResiduals, packet: &GaussianPacket, hbar: f64) -> f64 {
    let s = packet.sigma0;
    let (dz, dp) = (residuals.delta_z, residuals.delta_p);
    (-dz * dz / (8.0 * s * s) - s * s * dp * dp / (2.0 * hbar * hbar)).exp()
}

/// Visibility when the displacement acts after `elapsed` of free
/// evolution. The packet has spread and acquired a position-momentum
/// correlation by then; moving the displacement back to t = 0 turns δz into
/// δz − δp·elapsed/m, after which [`closure_visibility`] is exact.
pub fn recombination_visibility(
    residuals: &ClosureResiduals,
    packet: &GaussianPacket,
    hbar: f64,
    mass: f64,
    elapsed: f64,
) -> f64 {
    let referred = ClosureResiduals {
        delta_p: residuals.delta_p,
        delta_z: residuals.delta_z - residuals.delta_p * elapsed / mass,
    };
    closure_visibility(&referred, packet, hbar)
}
