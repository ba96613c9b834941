//! Conditional phonon-number measurement by single-photon opto-mechanics.

// `!(x > 0)` style checks are there to reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cascaded;
pub mod damped;
pub mod error;
pub mod experiment;
pub mod export;
pub mod fock;
pub mod jc;
pub mod linalg;
pub mod params;
pub mod sampling;
pub mod scalar;
pub mod wigner;

pub use error::{Error, Result};
pub use experiment::{ExperimentConfig, InitialState, SamplingConfig, ThetaSchedule};
pub use fock::{FockCutoff, MechanicalState, NumberDistribution, NumberMoments};
pub use params::ModelParams;
pub use scalar::{Real, C};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub type Params = ModelParams<f64>;
pub type State = MechanicalState<f64>;
pub type Distribution = NumberDistribution<f64>;
pub type Density = damped::MechanicalDensity<f64>;
pub type Trace = experiment::CollapseTrace<f64>;
pub type Grid = wigner::PhaseSpaceGrid<f64>;
