//! Simulation and fringe fitting for a four-pulse full-loop Stern-Gerlach
//! interferometer whose phase grows as T³.
//!
//! The crate is organised bottom-up: [`pulse`] describes the timing of the
//! gradient pulses, [`kinematics`] integrates the semiclassical branch
//! trajectories, [`phase`] holds the closed-form phase and visibility models,
//! [`oracle`] checks all of them against a grid-based wavefunction evolution
//! and [`fit`] generates and fits fringe scans. [`cli`] wires everything into
//! the `t3sgi` binary.

pub mod cli;
pub mod config;
pub mod error;
pub mod fit;
pub mod kinematics;
pub mod oracle;
pub mod phase;
pub mod pulse;
pub mod units;

pub use config::{ConfigFile, ExperimentConfig, FieldModel, LevelPair, PhysicalConstants};
pub use error::{Error, Result};
pub use pulse::{ForceSegment, PulseTiming};
