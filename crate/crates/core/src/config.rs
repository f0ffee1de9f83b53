//! Physical constants, the two-level system, the gradient field and the
//! experiment configuration shared by every other module.
//!
//! All runtime types hold SI values. The JSON document in [`ConfigFile`]
//! uses unit-suffixed keys (`T1_us`, `aB_m_per_s2`, `bias_G`, ...) and is
//! converted at the boundary.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pulse::PulseTiming;
use crate::units::{Gauss, GaussPerCm, Micro, Milli, Scaled};

/// Reduced Planck constant (CODATA 2018), J·s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Bohr magneton (CODATA 2018), J/T.
pub const MU_BOHR: f64 = 9.274_010_078_3e-24;
/// Atomic mass unit (CODATA 2018), kg.
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;
/// Mass of ⁸⁷Rb in atomic mass units.
pub const RB87_MASS_U: f64 = 86.909_180_520;
pub const DEFAULT_GRAVITY: f64 = 9.8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    pub hbar: f64,
    pub mu_bohr: f64,
    pub mass: f64,
    pub gravity: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            hbar: HBAR,
            mu_bohr: MU_BOHR,
            mass: RB87_MASS_U * ATOMIC_MASS_UNIT,
            gravity: DEFAULT_GRAVITY,
        }
    }
}

/// The two internal states, described by their moments in units of μ_B.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelPair {
    pub mu1_frac: f64,
    pub mu2_frac: f64,
    pub label1: String,
    pub label2: String,
}

impl LevelPair {
    pub fn new(mu1_frac: f64, mu2_frac: f64) -> Result<Self> {
        if mu1_frac == mu2_frac {
            return Err(Error::InvalidParameter("degenerate level pair: mu1_frac == mu2_frac".into()));
        }
        Ok(Self { mu1_frac, mu2_frac, ..Self::default() })
    }

    /// Moment fraction of branch 1 or 2.
    pub fn frac(&self, branch: u8) -> Result<f64> {
        match branch {
            1 => Ok(self.mu1_frac),
            2 => Ok(self.mu2_frac),
            other => Err(Error::InvalidBranch(other)),
        }
    }

    /// (μ₁ − μ₂)/μ_B.
    pub fn delta_frac(&self) -> f64 {
        self.mu1_frac - self.mu2_frac
    }
}

impl Default for LevelPair {
    /// |F=2, m_F=1⟩ and |F=2, m_F=2⟩ with g_F = 1/2.
    fn default() -> Self {
        Self {
            mu1_frac: 0.5,
            mu2_frac: 1.0,
            label1: "|F=2,mF=1>".into(),
            label2: "|F=2,mF=2>".into(),
        }
    }
}

/// Gradient strength plus the documentation-only geometry of the chip field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldModel {
    /// a_B = (μ_B/m) ∂B_y/∂z, m/s².
    pub a_b: f64,
    /// Polarity-dependent force error: +1 pulses are scaled by (1 + f),
    /// -1 pulses by (1 - f).
    pub nonlinearity_fraction: f64,
    /// Distance of the quadrupole zero below the chip, m. Not used in any
    /// computation.
    pub quadrupole_center_z0: f64,
    /// Bias field along y, T. Its phase is cancelled by the echo; kept as
    /// metadata only.
    pub bias_field: f64,
}

impl FieldModel {
    pub fn new(a_b: f64) -> Self {
        Self { a_b, ..Self::default() }
    }

    pub fn from_gradient(gradient: f64, constants: &PhysicalConstants) -> Self {
        Self::new(gradient_to_a_b(gradient, constants))
    }

    /// ∂B_y/∂z in T/m.
    pub fn gradient(&self, constants: &PhysicalConstants) -> f64 {
        a_b_to_gradient(self.a_b, constants)
    }

    /// Force-magnitude multiplier for a segment of the given polarity.
    pub fn polarity_scale(&self, polarity: i8) -> f64 {
        match polarity.signum() {
            1 => 1.0 + self.nonlinearity_fraction,
            -1 => 1.0 - self.nonlinearity_fraction,
            _ => 0.0,
        }
    }
}

impl Default for FieldModel {
    fn default() -> Self {
        Self {
            a_b: 273.16,
            nonlinearity_fraction: 0.0,
            quadrupole_center_z0: 98e-6,
            bias_field: 35e-4,
        }
    }
}

pub fn gradient_to_a_b(gradient: f64, constants: &PhysicalConstants) -> f64 {
    constants.mu_bohr / constants.mass * gradient
}

pub fn a_b_to_gradient(a_b: f64, constants: &PhysicalConstants) -> f64 {
    constants.mass * a_b / constants.mu_bohr
}

/// Functional form of the fringe-visibility decay.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Envelope {
    /// V₀·exp(−T₁/τ)
    #[default]
    ExponentialT1,
    /// V₀·exp(−T/τ) with T the total sequence time.
    ExponentialTotal,
    /// V₀·exp(−(T₁/τ)²)
    GaussianT1,
}

impl Envelope {
    pub fn visibility(self, visibility0: f64, decay_time: f64, timing: &PulseTiming) -> f64 {
        self.visibility_at(visibility0, decay_time, timing.t1, timing.total_time())
    }

    /// Visibility for pulse length `t1` and total sequence time `total`.
    /// Also defined at `t1 = 0`, where it returns `visibility0` for the
    /// T₁-based forms.
    pub fn visibility_at(self, visibility0: f64, decay_time: f64, t1: f64, total: f64) -> f64 {
        visibility0 * (-self.decay_exponent(decay_time, t1, total)).exp()
    }

    /// The exponent x in V = V₀·e^{−x}.
    pub fn decay_exponent(self, decay_time: f64, t1: f64, total: f64) -> f64 {
        match self {
            Envelope::ExponentialT1 => t1 / decay_time,
            Envelope::ExponentialTotal => total / decay_time,
            Envelope::GaussianT1 => (t1 / decay_time).powi(2),
        }
    }

    /// ∂x/∂τ of [`Envelope::decay_exponent`].
    pub fn decay_exponent_slope(self, decay_time: f64, t1: f64, total: f64) -> f64 {
        match self {
            Envelope::ExponentialT1 | Envelope::ExponentialTotal => {
                -self.decay_exponent(decay_time, t1, total) / decay_time
            }
            Envelope::GaussianT1 => -2.0 * self.decay_exponent(decay_time, t1, total) / decay_time,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub constants: PhysicalConstants,
    pub levels: LevelPair,
    pub field: FieldModel,
    pub timing: PulseTiming,
    pub visibility0: f64,
    pub decay_time: f64,
    pub phi0: f64,
    pub envelope: Envelope,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            constants: PhysicalConstants::default(),
            levels: LevelPair::default(),
            field: FieldModel::default(),
            timing: PulseTiming::build_ideal(70e-6, 2.6e-6).expect("default timing is valid"),
            visibility0: 0.68,
            decay_time: 75e-6,
            phi0: 0.0,
            envelope: Envelope::ExponentialT1,
        }
    }
}

impl ExperimentConfig {
    /// Same configuration with the ideal timing `(t1, td)`.
    pub fn with_ideal_timing(&self, t1: f64, td: f64) -> Result<Self> {
        Ok(Self { timing: PulseTiming::build_ideal(t1, td)?, ..self.clone() })
    }

    pub fn with_timing(&self, timing: PulseTiming) -> Self {
        Self { timing, ..self.clone() }
    }

    pub fn with_a_b(&self, a_b: f64) -> Self {
        let mut out = self.clone();
        out.field.a_b = a_b;
        out
    }

    pub fn with_gravity(&self, gravity: f64) -> Self {
        let mut out = self.clone();
        out.constants.gravity = gravity;
        out
    }

    /// Fringe visibility at the configured timing.
    pub fn visibility(&self) -> f64 {
        self.envelope.visibility(self.visibility0, self.decay_time, &self.timing)
    }
}

/// A single failed invariant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub code: &'static str,
    pub message: String,
}

impl Violation {
    fn new(code: &'static str, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

/// Every violated invariant of `cfg`; empty when valid.
pub fn validate_config(cfg: &ExperimentConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    let c = &cfg.constants;
    for (name, value) in [("hbar", c.hbar), ("mu_bohr", c.mu_bohr), ("mass", c.mass)] {
        if !(value.is_finite() && value > 0.0) {
            out.push(Violation::new("non_positive_constant", format!("{name} = {value} must be > 0")));
        }
    }
    // g = 0 is allowed: several checks switch gravity off.
    if !(c.gravity.is_finite() && c.gravity >= 0.0) {
        out.push(Violation::new("invalid_gravity", format!("gravity = {} must be finite and >= 0", c.gravity)));
    }
    if !(cfg.levels.mu1_frac.is_finite() && cfg.levels.mu2_frac.is_finite()) {
        out.push(Violation::new("non_finite_moment", "moment fractions must be finite"));
    } else if cfg.levels.mu1_frac == cfg.levels.mu2_frac {
        out.push(Violation::new("degenerate_level_pair", "degenerate level pair: mu1_frac == mu2_frac"));
    }
    if !(cfg.field.a_b.is_finite() && cfg.field.a_b > 0.0) {
        out.push(Violation::new("non_positive_a_b", format!("a_B = {} must be > 0", cfg.field.a_b)));
    }
    if !(0.0..=0.1).contains(&cfg.field.nonlinearity_fraction) {
        out.push(Violation::new(
            "nonlinearity_out_of_range",
            format!("nonlinearity_fraction = {} outside [0, 0.1]", cfg.field.nonlinearity_fraction),
        ));
    }
    if let Err(e) = cfg.timing.check() {
        out.push(Violation::new("invalid_timing", e.to_string()));
    }
    if !(cfg.visibility0 > 0.0 && cfg.visibility0 <= 1.0) {
        out.push(Violation::new("visibility_out_of_range", format!("visibility0 = {} outside (0, 1]", cfg.visibility0)));
    }
    if !(cfg.decay_time.is_finite() && cfg.decay_time > 0.0) {
        out.push(Violation::new("non_positive_decay_time", format!("non-positive decay time {}", cfg.decay_time)));
    }
    if !cfg.phi0.is_finite() {
        out.push(Violation::new("non_finite_phase", "phi0 must be finite"));
    }
    out
}

// ---------------------------------------------------------------------------
// JSON document

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsDoc {
    #[serde(rename = "hbar_J_s")]
    pub hbar: f64,
    #[serde(rename = "mu_bohr_J_per_T")]
    pub mu_bohr: f64,
    #[serde(rename = "mass_kg")]
    pub mass: f64,
    #[serde(rename = "g_m_per_s2")]
    pub gravity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelsDoc {
    pub mu1_frac: f64,
    pub mu2_frac: f64,
    #[serde(default)]
    pub label1: Option<String>,
    #[serde(default)]
    pub label2: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldDoc {
    #[serde(rename = "aB_m_per_s2", default, skip_serializing_if = "Option::is_none")]
    pub a_b: Option<f64>,
    #[serde(rename = "gradient_G_per_cm", default, skip_serializing_if = "Option::is_none")]
    pub gradient: Option<GaussPerCm>,
    #[serde(default)]
    pub nonlinearity_fraction: f64,
    #[serde(rename = "z0_um", default = "default_z0")]
    pub z0: Micro,
    #[serde(rename = "bias_G", default = "default_bias")]
    pub bias: Gauss,
}

fn default_z0() -> Micro {
    Scaled(FieldModel::default().quadrupole_center_z0)
}

fn default_bias() -> Gauss {
    Scaled(FieldModel::default().bias_field)
}

/// Either `{T1_us, Td_us}` for the ideal sequence or any subset of the six
/// explicit durations; missing pulse lengths default to `T1_us` and missing
/// delays to `Td_us` (or 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingDoc {
    #[serde(rename = "T1_us")]
    pub t1: Micro,
    #[serde(rename = "Td_us", default, skip_serializing_if = "Option::is_none")]
    pub td: Option<Micro>,
    #[serde(rename = "T2_us", default, skip_serializing_if = "Option::is_none")]
    pub t2: Option<Micro>,
    #[serde(rename = "T3_us", default, skip_serializing_if = "Option::is_none")]
    pub t3: Option<Micro>,
    #[serde(rename = "T4_us", default, skip_serializing_if = "Option::is_none")]
    pub t4: Option<Micro>,
    #[serde(rename = "Td1_us", default, skip_serializing_if = "Option::is_none")]
    pub td1: Option<Micro>,
    #[serde(rename = "Td2_us", default, skip_serializing_if = "Option::is_none")]
    pub td2: Option<Micro>,
}

impl TimingDoc {
    pub fn to_timing(&self) -> Result<PulseTiming> {
        if self.td.is_some() && (self.td1.is_some() || self.td2.is_some()) {
            return Err(Error::Config("timing: give either Td_us or Td1_us/Td2_us, not both".into()));
        }
        let t1 = self.t1.si();
        let td = self.td.map_or(0.0, Scaled::si);
        let pick = |v: Option<Micro>, fallback: f64| v.map_or(fallback, Scaled::si);
        PulseTiming::new(
            t1,
            pick(self.t2, t1),
            pick(self.t3, t1),
            pick(self.t4, t1),
            pick(self.td1, td),
            pick(self.td2, td),
        )
    }

    pub fn from_timing(t: &PulseTiming) -> Self {
        Self {
            t1: Scaled(t.t1),
            td: None,
            t2: Some(Scaled(t.t2)),
            t3: Some(Scaled(t.t3)),
            t4: Some(Scaled(t.t4)),
            td1: Some(Scaled(t.td1)),
            td2: Some(Scaled(t.td2)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PacketDoc {
    #[serde(rename = "sigma0_um")]
    pub sigma0: Micro,
    #[serde(rename = "center_um", default)]
    pub center: Micro,
    #[serde(rename = "velocity_mm_per_s", default)]
    pub velocity: Milli,
}

impl Default for PacketDoc {
    fn default() -> Self {
        Self { sigma0: Scaled(0.5e-6), center: Scaled(0.0), velocity: Scaled(0.0) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleDoc {
    pub n_points: usize,
    /// Explicit window; derived from the trajectory when absent.
    #[serde(rename = "z_min_um", default, skip_serializing_if = "Option::is_none")]
    pub z_min: Option<Micro>,
    #[serde(rename = "z_max_um", default, skip_serializing_if = "Option::is_none")]
    pub z_max: Option<Micro>,
    pub steps_per_shortest_segment: usize,
    #[serde(rename = "phase_tolerance_rad")]
    pub phase_tolerance: f64,
}

impl Default for OracleDoc {
    fn default() -> Self {
        Self { n_points: 1024, z_min: None, z_max: None, steps_per_shortest_segment: 64, phase_tolerance: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanDoc {
    #[serde(rename = "t1_min_us")]
    pub t1_min: Micro,
    #[serde(rename = "t1_max_us")]
    pub t1_max: Micro,
    pub n_points: usize,
    pub charge_rel_std: f64,
    /// Atoms detected per shot; 0 disables detection noise.
    pub atoms_per_shot: u64,
    pub shots_per_point: usize,
}

impl Default for ScanDoc {
    fn default() -> Self {
        Self {
            t1_min: Scaled(0.0),
            t1_max: Scaled(70e-6),
            n_points: 71,
            charge_rel_std: 3.6e-3,
            atoms_per_shot: 10_000,
            shots_per_point: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitDoc {
    #[serde(rename = "initial_aB_m_per_s2")]
    pub initial_a_b: f64,
    pub initial_visibility0: f64,
    #[serde(rename = "initial_decay_time_us")]
    pub initial_decay_time: Micro,
    pub max_iterations: usize,
    pub tolerance: f64,
    /// Average the model fringe over the scan's known charge jitter.
    #[serde(default = "default_true")]
    pub charge_averaged: bool,
}

fn default_true() -> bool {
    true
}

impl Default for FitDoc {
    fn default() -> Self {
        Self {
            initial_a_b: 271.0,
            initial_visibility0: 0.6,
            initial_decay_time: Scaled(60e-6),
            max_iterations: 200,
            tolerance: 1e-10,
            charge_averaged: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TofDoc {
    #[serde(rename = "pulse_us")]
    pub pulse: Micro,
    #[serde(rename = "tof_us")]
    pub tof: Micro,
    #[serde(rename = "position_noise_um")]
    pub position_noise: Micro,
    pub trials: usize,
    /// Moment fraction of the state used for the TOF measurement.
    pub mu_frac: f64,
}

impl Default for TofDoc {
    fn default() -> Self {
        Self {
            pulse: Scaled(70e-6),
            tof: Scaled(1e-3),
            // gives a standard error of about 6 m/s² over 710 trials
            position_noise: Scaled(10.8e-6),
            trials: 710,
            mu_frac: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareDoc {
    /// Gradient of the reference T² interferometer relative to `aB_m_per_s2`.
    pub t2_gradient_factor: f64,
    /// Maximal time of the T² interferometer relative to the T³ one.
    pub t2_time_factor: f64,
    /// Pulse length of the T² interferometer, which sets δp₀.
    #[serde(rename = "t2_pulse_us")]
    pub t2_pulse: Micro,
    #[serde(rename = "t_max_us")]
    pub t_max: Micro,
    pub n_points: usize,
}

impl Default for CompareDoc {
    fn default() -> Self {
        Self {
            t2_gradient_factor: 2.3,
            t2_time_factor: 3.2,
            t2_pulse: Scaled(5e-6),
            t_max: Scaled(1000e-6),
            n_points: 200,
        }
    }
}

/// The complete JSON configuration document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default = "default_constants_doc")]
    pub constants: ConstantsDoc,
    #[serde(default = "default_levels_doc")]
    pub levels: LevelsDoc,
    #[serde(default = "default_field_doc")]
    pub field: FieldDoc,
    #[serde(default = "default_timing_doc")]
    pub timing: TimingDoc,
    #[serde(default = "default_visibility0")]
    pub visibility0: f64,
    #[serde(rename = "decay_time_us", default = "default_decay_time")]
    pub decay_time: Micro,
    #[serde(rename = "phi0_rad", default)]
    pub phi0: f64,
    #[serde(default)]
    pub envelope: Envelope,
    #[serde(default)]
    pub packet: PacketDoc,
    #[serde(default)]
    pub oracle: OracleDoc,
    #[serde(default)]
    pub scan: ScanDoc,
    #[serde(default)]
    pub fit: FitDoc,
    #[serde(default)]
    pub tof: TofDoc,
    #[serde(default)]
    pub compare: CompareDoc,
}

fn default_constants_doc() -> ConstantsDoc {
    ConfigFile::from_experiment(&ExperimentConfig::default()).constants
}

fn default_levels_doc() -> LevelsDoc {
    ConfigFile::from_experiment(&ExperimentConfig::default()).levels
}

fn default_field_doc() -> FieldDoc {
    ConfigFile::from_experiment(&ExperimentConfig::default()).field
}

fn default_timing_doc() -> TimingDoc {
    TimingDoc { t1: Scaled(70e-6), td: Some(Scaled(2.6e-6)), t2: None, t3: None, t4: None, td1: None, td2: None }
}

fn default_visibility0() -> f64 {
    ExperimentConfig::default().visibility0
}

fn default_decay_time() -> Micro {
    Scaled(ExperimentConfig::default().decay_time)
}

impl Default for ConfigFile {
    fn default() -> Self {
        serde_json::from_str("{}").expect("empty document takes all defaults")
    }
}

impl ConfigFile {
    /// Document describing `cfg`, with default settings for every
    /// non-experiment section.
    pub fn from_experiment(cfg: &ExperimentConfig) -> Self {
        let c = &cfg.constants;
        Self {
            constants: ConstantsDoc { hbar: c.hbar, mu_bohr: c.mu_bohr, mass: c.mass, gravity: c.gravity },
            levels: LevelsDoc {
                mu1_frac: cfg.levels.mu1_frac,
                mu2_frac: cfg.levels.mu2_frac,
                label1: Some(cfg.levels.label1.clone()),
                label2: Some(cfg.levels.label2.clone()),
            },
            field: FieldDoc {
                a_b: Some(cfg.field.a_b),
                gradient: None,
                nonlinearity_fraction: cfg.field.nonlinearity_fraction,
                z0: Scaled(cfg.field.quadrupole_center_z0),
                bias: Scaled(cfg.field.bias_field),
            },
            timing: TimingDoc::from_timing(&cfg.timing),
            visibility0: cfg.visibility0,
            decay_time: Scaled(cfg.decay_time),
            phi0: cfg.phi0,
            envelope: cfg.envelope,
            packet: PacketDoc::default(),
            oracle: OracleDoc::default(),
            scan: ScanDoc::default(),
            fit: FitDoc::default(),
            tof: TofDoc::default(),
            compare: CompareDoc::default(),
        }
    }

    /// Build the runtime configuration. Structural problems (bad timing,
    /// ambiguous field strength) are errors; physical invariants are left
    /// to [`validate_config`].
    pub fn experiment(&self) -> Result<ExperimentConfig> {
        let c = &self.constants;
        let constants = PhysicalConstants { hbar: c.hbar, mu_bohr: c.mu_bohr, mass: c.mass, gravity: c.gravity };
        let defaults = LevelPair::default();
        let levels = LevelPair {
            mu1_frac: self.levels.mu1_frac,
            mu2_frac: self.levels.mu2_frac,
            label1: self.levels.label1.clone().unwrap_or(defaults.label1),
            label2: self.levels.label2.clone().unwrap_or(defaults.label2),
        };
        let a_b = match (self.field.a_b, self.field.gradient) {
            (Some(a), None) => a,
            (None, Some(g)) => gradient_to_a_b(g.si(), &constants),
            (Some(_), Some(_)) => {
                return Err(Error::Config("field: give either aB_m_per_s2 or gradient_G_per_cm, not both".into()))
            }
            (None, None) => return Err(Error::Config("field: aB_m_per_s2 or gradient_G_per_cm is required".into())),
        };
        let field = FieldModel {
            a_b,
            nonlinearity_fraction: self.field.nonlinearity_fraction,
            quadrupole_center_z0: self.field.z0.si(),
            bias_field: self.field.bias.si(),
        };
        Ok(ExperimentConfig {
            constants,
            levels,
            field,
            timing: self.timing.to_timing()?,
            visibility0: self.visibility0,
            decay_time: self.decay_time.si(),
            phi0: self.phi0,
            envelope: self.envelope,
        })
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

impl ExperimentConfig {
    pub fn to_json_string(&self) -> Result<String> {
        ConfigFile::from_experiment(self).to_json_string()
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        ConfigFile::from_json_str(text)?.experiment()
    }
}
