//! Run configuration: subcommand defaults, a TOML file, then flags, in that
//! order of precedence.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use phonon_collapse::cascaded::TrajectoryOptions;
use phonon_collapse::sampling::WindowRule;
use phonon_collapse::{
    ExperimentConfig, FockCutoff, InitialState, Params, SamplingConfig, ThetaSchedule,
};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    JcSweep,
    JcCollapse,
    RateProfile,
    Collapse,
    DampedSweep,
    Wigner,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Self::JcSweep => "jc-sweep",
            Self::JcCollapse => "jc-collapse",
            Self::RateProfile => "rate-profile",
            Self::Collapse => "collapse",
            Self::DampedSweep => "damped-sweep",
            Self::Wigner => "wigner",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa2_prime: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_m: Option<f64>,
    /// Thermal occupation of the mechanical bath.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_bar: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub survival_floor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_restarts: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WignerSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub at: Option<Vec<usize>>,
    /// Points per axis; 0 disables snapshots.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JcSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_points: Option<usize>,
    /// Angles of the single-readout conditional distributions.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub panels: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schedule: Option<ThetaSchedule>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_m: Option<Vec<f64>>,
}

/// File schema. Every key is optional; the resolved form written next to the
/// outputs has every key that the subcommand reads filled in.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_max: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tail_tolerance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fock_threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub idle_dwell: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialState>,
    #[serde(default, skip_serializing_if = "is_default")]
    pub params: ParamsConfig,
    #[serde(default, skip_serializing_if = "is_default")]
    pub sampling: SamplingSection,
    #[serde(default, skip_serializing_if = "is_default")]
    pub wigner: WignerSection,
    #[serde(default, skip_serializing_if = "is_default")]
    pub jc: JcSection,
    #[serde(default, skip_serializing_if = "is_default")]
    pub sweep: SweepSection,
}

fn is_default<T: Default + PartialEq>(x: &T) -> bool {
    *x == T::default()
}

macro_rules! overlay {
    ($dst:expr, $src:expr; $($f:ident),+) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f.clone(); } )+
    };
}

impl RunConfig {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self, CliError> {
        toml::from_str(text)
            .map_err(|e| CliError::Config(format!("{origin}: {}", e.message().trim())))
    }

    /// Loads a TOML config, or the `config` table of a run manifest when the
    /// file ends in `.json`; a manifest must come from the same subcommand.
    pub fn load(path: &Path, mode: Mode) -> Result<Self, CliError> {
        let origin = path.display().to_string();
        let bytes = fs::read(path)
            .map_err(|e| CliError::Config(format!("cannot read config {origin}: {e}")))?;
        let text = String::from_utf8(bytes)
            .map_err(|_| CliError::Config(format!("{origin}: config is not UTF-8")))?;
        if path.extension().is_some_and(|e| e == "json") {
            let value: serde_json::Value = serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{origin}: {e}")))?;
            match value.get("command").and_then(|c| c.as_str()) {
                Some(c) if c == mode.name() => {}
                Some(c) => {
                    return Err(CliError::Config(format!(
                        "{origin}: key `command` is `{c}`, expected `{}`",
                        mode.name()
                    )))
                }
                None => return Err(CliError::Config(format!("{origin}: missing key `command`"))),
            }
            let config = value
                .get("config")
                .ok_or_else(|| CliError::Config(format!("{origin}: missing key `config`")))?;
            serde_json::from_value(config.clone())
                .map_err(|e| CliError::Config(format!("{origin}: {e}")))
        } else {
            Self::from_toml(&text, &origin)
        }
    }

    /// Values in `other` win.
    pub fn overlay(&mut self, other: &RunConfig) {
        overlay!(self, other; seed, trajectory, r_max, n_max, tail_tolerance, fock_threshold, idle_dwell, initial);
        overlay!(self.params, other.params; g, kappa1, kappa2, kappa2_prime, gamma, gamma_m, n_bar);
        overlay!(self.sampling, other.sampling; delta, epsilon, survival_floor, step, max_restarts);
        overlay!(self.wigner, other.wigner; at, points);
        overlay!(self.jc, other.jc; theta_min, theta_max, theta_points, panels, schedule);
        overlay!(self.sweep, other.sweep; gamma_m);
    }

    pub fn defaults(mode: Mode) -> Self {
        let p = Params::reference();
        let mut c = RunConfig {
            seed: Some(1),
            trajectory: Some(0),
            fock_threshold: Some(phonon_collapse::experiment::FOCK_THRESHOLD),
            idle_dwell: Some(0.0),
            params: ParamsConfig {
                g: Some(p.g),
                kappa1: Some(p.kappa1),
                kappa2: Some(p.kappa2),
                kappa2_prime: Some(p.kappa2_prime),
                gamma: Some(p.gamma),
                gamma_m: Some(p.gamma_m),
                n_bar: Some(p.n_bar),
            },
            ..Default::default()
        };
        let sampling = SamplingConfig::default();
        c.sampling.epsilon = Some(sampling.epsilon);
        c.sampling.survival_floor = Some(sampling.survival_floor);
        c.sampling.max_restarts = Some(sampling.max_restarts);
        match mode {
            Mode::JcSweep => {
                c.initial = Some(InitialState::Coherent { beta: 3.0 });
                c.jc.theta_min = Some(0.0);
                c.jc.theta_max = Some(PI);
                c.jc.theta_points = Some(401);
                c.jc.panels = Some(vec![PI / 6.0, PI / 3.0, PI / 2.0]);
            }
            Mode::JcCollapse => {
                c.initial = Some(InitialState::Coherent { beta: 3.0 });
            }
            Mode::RateProfile => {
                c.initial = Some(InitialState::Coherent { beta: 2.0 });
            }
            Mode::Collapse | Mode::Wigner => {
                c.initial = Some(InitialState::Coherent { beta: 2.0 });
                c.r_max = Some(100);
                c.wigner.at = Some(phonon_collapse::experiment::DEFAULT_WIGNER_AT.to_vec());
                c.wigner.points = Some(if mode == Mode::Wigner { 81 } else { 0 });
            }
            Mode::DampedSweep => {
                c.initial = Some(InitialState::Thermal { n_bar: 4.0 });
                c.params.n_bar = Some(4.0);
                c.r_max = Some(70);
                // The thermal tail above n = 40 is (4/5)^41 ≈ 1.1e-4.
                c.n_max = Some(40);
                c.tail_tolerance = Some(1e-3);
                c.sweep.gamma_m = Some(vec![0.0, 1e-5, 1e-4, 1e-3]);
            }
        }
        c
    }

    /// Fills the keys whose defaults depend on other keys.
    pub fn complete(&mut self, mode: Mode) -> Result<(), CliError> {
        let initial = self
            .initial
            .ok_or_else(|| CliError::Config("missing key `initial`".into()))?;
        if self.n_max.is_none() {
            self.n_max = Some(initial.default_cutoff().n_max());
        }
        if self.tail_tolerance.is_none() {
            self.tail_tolerance = Some(initial.default_tail_tolerance());
        }
        let p = self.params();
        if !(p.kappa2 > 0.0) {
            return Err(CliError::Config(
                "invalid parameter `params.kappa2`: must be positive".into(),
            ));
        }
        if self.sampling.delta.is_none() {
            self.sampling.delta = Some(WindowRule::for_kappa2(p.kappa2).delta);
        }
        if self.sampling.step.is_none() {
            self.sampling.step = Some(TrajectoryOptions::for_params(&p).step);
        }
        if mode == Mode::JcCollapse && self.jc.schedule.is_none() {
            self.jc.schedule = Some(ThetaSchedule::varied_default(self.seed.unwrap_or(1)));
        }
        Ok(())
    }

    /// Drops sections the subcommand never reads so the echo stays honest.
    pub fn prune(&mut self, mode: Mode) {
        let collapse_like = matches!(mode, Mode::Collapse | Mode::Wigner | Mode::DampedSweep);
        if !matches!(mode, Mode::JcSweep | Mode::JcCollapse) {
            self.jc = JcSection::default();
        }
        if mode != Mode::JcSweep {
            self.jc.theta_min = None;
            self.jc.theta_max = None;
            self.jc.theta_points = None;
            self.jc.panels = None;
        }
        if mode != Mode::DampedSweep {
            self.sweep = SweepSection::default();
        }
        if !matches!(mode, Mode::Collapse | Mode::Wigner) {
            self.wigner = WignerSection::default();
        }
        if !matches!(
            mode,
            Mode::Collapse | Mode::Wigner | Mode::DampedSweep | Mode::JcCollapse
        ) {
            self.fock_threshold = None;
        }
        if !collapse_like {
            self.seed = None;
            self.r_max = None;
            self.trajectory = None;
            self.idle_dwell = None;
            self.sampling.max_restarts = None;
        }
        if matches!(mode, Mode::JcSweep | Mode::JcCollapse) {
            self.params = ParamsConfig::default();
            self.sampling = SamplingSection::default();
        }
    }

    pub fn params(&self) -> Params {
        let d = Params::reference();
        let p = &self.params;
        Params {
            g: p.g.unwrap_or(d.g),
            kappa1: p.kappa1.unwrap_or(d.kappa1),
            kappa2: p.kappa2.unwrap_or(d.kappa2),
            kappa2_prime: p.kappa2_prime.unwrap_or(d.kappa2_prime),
            gamma: p.gamma.unwrap_or(d.gamma),
            gamma_m: p.gamma_m.unwrap_or(d.gamma_m),
            n_bar: p.n_bar.unwrap_or(d.n_bar),
        }
    }

    pub fn cutoff(&self) -> Result<FockCutoff, CliError> {
        let n = self
            .n_max
            .ok_or_else(|| CliError::Config("missing key `n_max`".into()))?;
        FockCutoff::new(n).map_err(|e| CliError::Config(format!("key `n_max`: {e}")))
    }

    pub fn experiment(&self) -> ExperimentConfig {
        let defaults = SamplingConfig::default();
        let s = &self.sampling;
        let mut c = ExperimentConfig::new(
            self.params(),
            self.initial.unwrap_or(InitialState::Coherent { beta: 2.0 }),
            self.r_max.unwrap_or(0),
            self.seed.unwrap_or(1),
        );
        c.trajectory = self.trajectory.unwrap_or(0);
        c.n_max = self.n_max;
        c.tail_tolerance = self.tail_tolerance;
        c.fock_threshold = self.fock_threshold.unwrap_or(c.fock_threshold);
        c.idle_dwell = self.idle_dwell.unwrap_or(0.0);
        c.sampling = SamplingConfig {
            delta: s.delta,
            epsilon: s.epsilon.unwrap_or(defaults.epsilon),
            survival_floor: s.survival_floor.unwrap_or(defaults.survival_floor),
            step: s.step,
            max_restarts: s.max_restarts.unwrap_or(defaults.max_restarts),
        };
        if let Some(at) = &self.wigner.at {
            c.wigner_at = at.clone();
        }
        c.wigner_points = self.wigner.points.unwrap_or(0);
        c
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Io(format!("cannot render config: {e}")))
    }
}
