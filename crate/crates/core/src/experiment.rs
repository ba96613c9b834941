//! Repeated measure, jump and re-arm protocols.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cascaded::{
    analytic_dip_g0, analytic_rate_g0, apply_jump, filter_function, refine_dip, NoCountTrajectory,
    SubspaceAmplitudes, TrajectoryOptions,
};
use crate::damped::{
    apply_jump_damped, dwell_mechanics, rearm_source, DampedOptions, DampedTrajectory,
    MechanicalDensity,
};
use crate::error::{invalid, Error, Result};
use crate::fock::{
    coherent_state_with_tolerance, thermal_distribution_with_tolerance, FockCutoff,
    MechanicalState, NumberDistribution, COHERENT_TAIL_TOLERANCE, THERMAL_TAIL_TOLERANCE,
};
use crate::jc::repeated_conditional_distribution;
use crate::params::ModelParams;
use crate::sampling::{
    find_window_or_full, first_interior_minimum, RateProfile, WindowDiagnostics, WindowRule,
    WindowedSampler,
};
use crate::scalar::{Real, C};
use crate::wigner::{wigner_transform, DensityMatrix, GridSpec, PhaseSpaceGrid};

/// Both of the two largest probabilities at or above this flag a trace as bimodal.
pub const BIMODAL_THRESHOLD: f64 = 0.2;

/// Default `is_fock` threshold.
pub const FOCK_THRESHOLD: f64 = 0.9;

/// Default measurement indices for Wigner snapshots; the final one is added.
pub const DEFAULT_WIGNER_AT: [usize; 4] = [0, 10, 30, 50];

/// Mechanical state before the first measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialState {
    /// Coherent state with real amplitude `beta`.
    Coherent {
        beta: f64,
    },
    Thermal {
        n_bar: f64,
    },
    Fock {
        n: usize,
    },
}

impl InitialState {
    pub fn mean(&self) -> f64 {
        match *self {
            Self::Coherent { beta } => beta * beta,
            Self::Thermal { n_bar } => n_bar,
            Self::Fock { n } => n as f64,
        }
    }

    pub fn default_cutoff(&self) -> FockCutoff {
        match *self {
            Self::Coherent { beta } => {
                FockCutoff::for_coherent(beta * beta, COHERENT_TAIL_TOLERANCE)
            }
            Self::Thermal { n_bar } => FockCutoff::for_thermal(n_bar, THERMAL_TAIL_TOLERANCE),
            Self::Fock { n } => FockCutoff::new(FockCutoff::for_mean(n as f64).n_max().max(n + 8))
                .expect("n + 8 >= 1"),
        }
    }

    pub fn default_tail_tolerance(&self) -> f64 {
        match self {
            Self::Thermal { .. } => THERMAL_TAIL_TOLERANCE,
            _ => COHERENT_TAIL_TOLERANCE,
        }
    }

    pub fn distribution<T: Real>(
        &self,
        cutoff: FockCutoff,
        tolerance: f64,
    ) -> Result<NumberDistribution<T>> {
        match *self {
            Self::Thermal { n_bar } => {
                thermal_distribution_with_tolerance(T::lit(n_bar), cutoff, tolerance)
            }
            _ => Ok(self
                .pure_state::<T>(cutoff, tolerance)?
                .number_distribution()),
        }
    }

    /// State-vector form. A thermal state becomes `β_n = √P_n`, which gives
    /// the same number distributions whenever damping is off.
    pub fn pure_state<T: Real>(
        &self,
        cutoff: FockCutoff,
        tolerance: f64,
    ) -> Result<MechanicalState<T>> {
        match *self {
            Self::Coherent { beta } => {
                coherent_state_with_tolerance(C::new(T::lit(beta), T::zero()), cutoff, tolerance)
            }
            Self::Thermal { .. } => Ok(MechanicalState::from_distribution(
                &self.distribution(cutoff, tolerance)?,
            )),
            Self::Fock { n } => MechanicalState::fock(n, cutoff),
        }
    }

    pub fn density<T: Real>(
        &self,
        cutoff: FockCutoff,
        tolerance: f64,
    ) -> Result<MechanicalDensity<T>> {
        match self {
            Self::Thermal { .. } => Ok(MechanicalDensity::from_distribution(
                &self.distribution(cutoff, tolerance)?,
            )),
            _ => Ok(MechanicalDensity::from_state(
                &self.pure_state(cutoff, tolerance)?,
            )),
        }
    }
}

/// Detection-time sampling settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    /// Window start offset after the dip; `None` means `0.05/κ₂`.
    pub delta: Option<f64>,
    pub epsilon: f64,
    /// No-count tables stop once the survival drops below this.
    pub survival_floor: f64,
    /// Grid step of the rate table; `None` means `0.005/κ₂`.
    pub step: Option<f64>,
    /// Discarded runs allowed per measurement before giving up.
    pub max_restarts: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            delta: None,
            epsilon: 1e-3,
            survival_floor: 1e-9,
            step: None,
            max_restarts: 10_000,
        }
    }
}

impl SamplingConfig {
    pub fn rule<T: Real>(&self, kappa2: T) -> WindowRule<T> {
        let mut rule = WindowRule::for_kappa2(kappa2);
        if let Some(d) = self.delta {
            rule.delta = T::lit(d);
        }
        rule.epsilon = T::lit(self.epsilon);
        rule
    }

    pub fn trajectory_options<T: Real>(&self, params: &ModelParams<T>) -> TrajectoryOptions<T> {
        let mut o =
            TrajectoryOptions::for_params(params).with_survival_floor(T::lit(self.survival_floor));
        if let Some(h) = self.step {
            o = o.with_step(T::lit(h));
        }
        o
    }
}

/// Everything needed to reproduce one collapse run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub params: ModelParams<f64>,
    pub initial: InitialState,
    pub r_max: usize,
    pub seed: u64,
    /// Trajectory index; selects the random streams `2k` and `2k + 1`.
    #[serde(default)]
    pub trajectory: u64,
    #[serde(default)]
    pub n_max: Option<usize>,
    #[serde(default)]
    pub tail_tolerance: Option<f64>,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default = "default_fock_threshold")]
    pub fock_threshold: f64,
    /// Measurement indices with a Wigner snapshot; the final one is always added.
    #[serde(default = "default_wigner_at")]
    pub wigner_at: Vec<usize>,
    /// Points per axis of the Wigner grid; 0 disables snapshots.
    #[serde(default)]
    pub wigner_points: usize,
    /// Pure mechanical damping inserted before each re-arm (damped path only).
    #[serde(default)]
    pub idle_dwell: f64,
}

fn default_fock_threshold() -> f64 {
    FOCK_THRESHOLD
}

fn default_wigner_at() -> Vec<usize> {
    DEFAULT_WIGNER_AT.to_vec()
}

impl ExperimentConfig {
    pub fn new(params: ModelParams<f64>, initial: InitialState, r_max: usize, seed: u64) -> Self {
        Self {
            params,
            initial,
            r_max,
            seed,
            trajectory: 0,
            n_max: None,
            tail_tolerance: None,
            sampling: SamplingConfig::default(),
            fock_threshold: FOCK_THRESHOLD,
            wigner_at: default_wigner_at(),
            wigner_points: 0,
            idle_dwell: 0.0,
        }
    }

    pub fn cutoff(&self) -> Result<FockCutoff> {
        match self.n_max {
            Some(n) => FockCutoff::new(n),
            None => Ok(self.initial.default_cutoff()),
        }
    }

    pub fn tolerance(&self) -> f64 {
        self.tail_tolerance
            .unwrap_or_else(|| self.initial.default_tail_tolerance())
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.sampling.epsilon > 0.0 && self.sampling.epsilon < 1.0) {
            return Err(invalid("sampling.epsilon", "must lie in (0, 1)"));
        }
        if let Some(d) = self.sampling.delta {
            if !(d >= 0.0) {
                return Err(invalid("sampling.delta", "must be non-negative"));
            }
        }
        if !(self.sampling.survival_floor > 0.0 && self.sampling.survival_floor < 1.0) {
            return Err(invalid("sampling.survival_floor", "must lie in (0, 1)"));
        }
        if !(self.fock_threshold > 0.0 && self.fock_threshold <= 1.0) {
            return Err(invalid("fock_threshold", "must lie in (0, 1]"));
        }
        if !(self.idle_dwell >= 0.0) {
            return Err(invalid("idle_dwell", "must be non-negative"));
        }
        Ok(())
    }

    /// Random streams for detection times and for restart decisions.
    pub fn rngs(&self) -> (ChaCha8Rng, ChaCha8Rng) {
        let mut times = ChaCha8Rng::seed_from_u64(self.seed);
        times.set_stream(2 * self.trajectory);
        let mut decisions = ChaCha8Rng::seed_from_u64(self.seed);
        decisions.set_stream(2 * self.trajectory + 1);
        (times, decisions)
    }
}

/// Summary of a number distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CollapseMetrics<T> {
    pub mean: T,
    pub variance: T,
    /// Nats.
    pub entropy: T,
    pub argmax: usize,
    pub max_prob: T,
    pub is_fock: bool,
    /// The two largest probabilities are both at least [`BIMODAL_THRESHOLD`].
    pub bimodal: bool,
    /// Mass in the two highest retained levels.
    pub edge_mass: T,
}

pub fn collapse_metrics<T: Real>(dist: &NumberDistribution<T>, threshold: T) -> CollapseMetrics<T> {
    let m = dist.moments();
    let mut sorted: Vec<T> = dist.probs().to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let floor = T::lit(BIMODAL_THRESHOLD);
    CollapseMetrics {
        mean: m.mean,
        variance: m.variance,
        entropy: m.entropy,
        argmax: m.argmax,
        max_prob: m.max_prob,
        is_fock: m.max_prob >= threshold,
        bimodal: sorted.len() > 1 && sorted[0] >= floor && sorted[1] >= floor,
        edge_mass: dist.edge_mass(),
    }
}

/// One accepted detection.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionRecord<T: Real> {
    /// Measurement index, starting at 1.
    pub r: usize,
    pub t_r: T,
    /// No-count probability at `t_r`.
    pub survival: T,
    /// Detection rate at `t_r`.
    pub jump_norm: T,
    /// Loss probability accumulated up to `t_r`.
    pub error_probability: T,
    /// Runs discarded before this detection was accepted.
    pub restarts: usize,
    /// Largest gap between the filter recursion and the state update.
    pub recursion_residual: T,
    /// `tr ρ_m²` after the jump; 1 on the pure path.
    pub purity: T,
    pub window: WindowDiagnostics,
    pub metrics: CollapseMetrics<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WignerSnapshot<T: Real> {
    pub r: usize,
    pub grid: PhaseSpaceGrid<T>,
}

/// Conditional distributions and detections of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct CollapseTrace<T: Real> {
    /// Entry 0 is the initial distribution; entry `r` follows detection `r`.
    pub distributions: Vec<NumberDistribution<T>>,
    pub metrics: Vec<CollapseMetrics<T>>,
    pub records: Vec<DetectionRecord<T>>,
    pub wigner: Vec<WignerSnapshot<T>>,
    /// Mechanical damping rate of the run.
    pub gamma_m: f64,
    pub n_max: usize,
    /// Post-jump amplitudes of the final state on the pure path.
    pub final_state: Option<MechanicalState<T>>,
    /// Final mechanical density on the damped path.
    pub final_density: Option<MechanicalDensity<T>>,
    /// Set when the run stopped early; the partial trace is kept.
    pub failure: Option<Error>,
}

impl<T: Real> CollapseTrace<T> {
    fn start(initial: NumberDistribution<T>, threshold: T, gamma_m: f64) -> Self {
        let n_max = initial.n_max();
        Self {
            metrics: vec![collapse_metrics(&initial, threshold)],
            distributions: vec![initial],
            records: Vec::new(),
            wigner: Vec::new(),
            gamma_m,
            n_max,
            final_state: None,
            final_density: None,
            failure: None,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last_distribution(&self) -> &NumberDistribution<T> {
        self.distributions.last().expect("non-empty")
    }

    pub fn final_metrics(&self) -> &CollapseMetrics<T> {
        self.metrics.last().expect("non-empty")
    }

    pub fn total_restarts(&self) -> usize {
        self.records.iter().map(|r| r.restarts).sum()
    }

    /// First measurement index at which `is_fock` holds.
    pub fn first_fock(&self) -> Option<usize> {
        self.metrics.iter().position(|m| m.is_fock)
    }

    pub fn entropies(&self) -> Vec<T> {
        self.metrics.iter().map(|m| m.entropy).collect()
    }

    pub fn ever_bimodal(&self) -> bool {
        self.metrics.iter().any(|m| m.bimodal)
    }
}

/// Trailing moving average with the given window (shorter at the start).
pub fn moving_average<T: Real>(xs: &[T], window: usize) -> Vec<T> {
    let w = window.max(1);
    (0..xs.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(w);
            let s: T = xs[lo..=i].iter().copied().sum();
            s / T::from_usize_lossy(i + 1 - lo)
        })
        .collect()
}

fn wigner_snapshot<T: Real>(
    config: &ExperimentConfig,
    r: usize,
    rho: impl FnOnce() -> DensityMatrix<T>,
) -> Result<Option<WignerSnapshot<T>>> {
    if config.wigner_points == 0 || !config.wigner_at.contains(&r) {
        return Ok(None);
    }
    let spec = GridSpec::for_mean(T::lit(config.initial.mean()), config.wigner_points);
    Ok(Some(WignerSnapshot {
        r,
        grid: wigner_transform(&rho(), &spec)?,
    }))
}

/// Draws restart decisions until a detection lands in the window.
fn accept<R: Rng>(mass: f64, max_restarts: usize, rng: &mut R) -> Result<usize> {
    let mut restarts = 0;
    while rng.random::<f64>() >= mass {
        restarts += 1;
        if restarts > max_restarts {
            return Err(Error::Numerical(format!(
                "more than {max_restarts} discarded runs in one measurement (in-window mass {mass:.3e})"
            )));
        }
    }
    Ok(restarts)
}

/// Window, sampler and loss bookkeeping for one rate table.
struct Draw<T: Real> {
    t_r: T,
    restarts: usize,
    window: WindowDiagnostics,
}

fn draw<T: Real>(
    profile: &RateProfile<T>,
    config: &ExperimentConfig,
    kappa2: T,
    time_rng: &mut ChaCha8Rng,
    decision_rng: &mut ChaCha8Rng,
) -> Result<Draw<T>> {
    let (window, fallback) = find_window_or_full(profile, &config.sampling.rule(kappa2))?;
    let sampler = WindowedSampler::new(profile, &window)?;
    let mass = sampler.mass();
    let restarts = accept(
        mass.to_f64_lossy(),
        config.sampling.max_restarts,
        decision_rng,
    )?;
    Ok(Draw {
        t_r: sampler.sample(time_rng),
        restarts,
        window: WindowDiagnostics::new(&window, mass, fallback),
    })
}

fn interpolate<T: Real>(times: &[T], values: &[T], t: T) -> T {
    let h = times[1] - times[0];
    let idx = (t / h).floor().to_usize().unwrap_or(0);
    if idx + 1 >= times.len() {
        return *values.last().expect("non-empty");
    }
    let s = (t - times[idx]) / h;
    values[idx] + (values[idx + 1] - values[idx]) * s
}

/// Undamped collapse: evolve, sample `t_r`, jump, re-arm, `r_max` times.
pub fn run_cascaded_collapse<T: Real>(config: &ExperimentConfig) -> Result<CollapseTrace<T>> {
    config.validate()?;
    if config.params.gamma_m != 0.0 {
        return Err(invalid(
            "gamma_m",
            "the state-vector path needs gamma_m = 0; use the damped path",
        ));
    }
    let params = ModelParams::<T>::from_f64(&config.params);
    let cutoff = config.cutoff()?;
    let threshold = T::lit(config.fock_threshold);
    let mut state = config.initial.pure_state::<T>(cutoff, config.tolerance())?;
    let mut trace = CollapseTrace::start(state.number_distribution(), threshold, 0.0);
    let (mut time_rng, mut decision_rng) = config.rngs();
    let options = config.sampling.trajectory_options(&params);

    if let Some(s) = wigner_snapshot(config, 0, || DensityMatrix::from_state(&state))? {
        trace.wigner.push(s);
    }
    for r in 1..=config.r_max {
        let mut step = || -> Result<(MechanicalState<T>, DetectionRecord<T>)> {
            let initial = SubspaceAmplitudes::initial(&state);
            let traj = NoCountTrajectory::simulate(&initial, &params, &options)?;
            let d = draw(
                &traj.profile()?,
                config,
                params.kappa2,
                &mut time_rng,
                &mut decision_rng,
            )?;
            let psi = initial.evolved(&params, d.t_r);
            let jump = apply_jump(&psi, &params)?;
            let prior = state.number_distribution();
            let filter = filter_function(&params, &prior, d.t_r)?;
            let post = jump.mech_state.number_distribution();
            let residual = (0..prior.probs().len())
                .map(|n| (prior.probs()[n] * filter[n] - post.probs()[n]).abs())
                .fold(T::zero(), T::max);
            let perr = interpolate(&traj.times, &traj.error_probability(), d.t_r);
            let record = DetectionRecord {
                r,
                t_r: d.t_r,
                survival: psi.norm_sqr(),
                jump_norm: jump.jump_norm,
                error_probability: perr,
                restarts: d.restarts,
                recursion_residual: residual,
                purity: T::one(),
                window: d.window,
                metrics: collapse_metrics(&post, threshold),
            };
            Ok((jump.mech_state.with_tail_mass(state.tail_mass()), record))
        };
        match step() {
            Ok((next, record)) => {
                state = next;
                trace.metrics.push(record.metrics);
                trace.distributions.push(state.number_distribution());
                trace.records.push(record);
            }
            Err(e) => {
                trace.failure = Some(e);
                break;
            }
        }
        let last = r == config.r_max;
        if let Some(s) = wigner_snapshot(config, r, || DensityMatrix::from_state(&state))? {
            trace.wigner.push(s);
        } else if last && config.wigner_points > 0 {
            let spec = GridSpec::for_mean(T::lit(config.initial.mean()), config.wigner_points);
            trace.wigner.push(WignerSnapshot {
                r,
                grid: wigner_transform(&DensityMatrix::from_state(&state), &spec)?,
            });
        }
    }
    trace.final_state = Some(state);
    Ok(trace)
}

/// Damped collapse on the density-matrix path.
pub fn run_damped_collapse<T: Real>(config: &ExperimentConfig) -> Result<CollapseTrace<T>> {
    config.validate()?;
    let params = ModelParams::<T>::from_f64(&config.params);
    let cutoff = config.cutoff()?;
    let threshold = T::lit(config.fock_threshold);
    let mut mech = config.initial.density::<T>(cutoff, config.tolerance())?;
    let initial_dist = config
        .initial
        .distribution::<T>(cutoff, config.tolerance())?;
    let tail = initial_dist.tail_mass();
    let mut trace = CollapseTrace::start(initial_dist, threshold, config.params.gamma_m);
    let (mut time_rng, mut decision_rng) = config.rngs();
    let options = DampedOptions::from_pure(&config.sampling.trajectory_options(&params));
    let dwell = T::lit(config.idle_dwell);

    if let Some(s) = wigner_snapshot(config, 0, || mech.to_density_matrix())? {
        trace.wigner.push(s);
    }
    for r in 1..=config.r_max {
        let mut step = || -> Result<(MechanicalDensity<T>, DetectionRecord<T>)> {
            let rho0 = rearm_source(&mech);
            let traj = DampedTrajectory::simulate(&rho0, &params, &options)?;
            let d = draw(
                &traj.profile()?,
                config,
                params.kappa2,
                &mut time_rng,
                &mut decision_rng,
            )?;
            let rho = traj.state_at(d.t_r)?;
            let jump = apply_jump_damped(&rho, &params)?;
            let mut next = jump.mech_density;
            if dwell > T::zero() {
                next = dwell_mechanics(&next, &params, dwell)?;
            }
            let post = next.number_distribution()?.with_tail_mass(tail);
            let perr = interpolate(&traj.times, &traj.error_probability(), d.t_r);
            let record = DetectionRecord {
                r,
                t_r: d.t_r,
                survival: rho.trace(),
                jump_norm: jump.jump_norm,
                error_probability: perr,
                restarts: d.restarts,
                recursion_residual: T::zero(),
                purity: next.purity(),
                window: d.window,
                metrics: collapse_metrics(&post, threshold),
            };
            Ok((next, record))
        };
        match step() {
            Ok((next, record)) => {
                mech = next;
                trace.metrics.push(record.metrics);
                trace
                    .distributions
                    .push(mech.number_distribution()?.with_tail_mass(tail));
                trace.records.push(record);
            }
            Err(e) => {
                trace.failure = Some(e);
                break;
            }
        }
        let last = r == config.r_max;
        if config.wigner_points > 0 && (config.wigner_at.contains(&r) || last) {
            let spec = GridSpec::for_mean(T::lit(config.initial.mean()), config.wigner_points);
            trace.wigner.push(WignerSnapshot {
                r,
                grid: wigner_transform(&mech.to_density_matrix(), &spec)?,
            });
        }
    }
    trace.final_density = Some(mech);
    Ok(trace)
}

/// One damped trace per `γ_m`, all sharing the seed and stream layout so the
/// detections consume the same uniforms.
pub fn run_damped_sweep<T: Real>(
    config: &ExperimentConfig,
    gamma_ms: &[f64],
) -> Result<Vec<CollapseTrace<T>>> {
    if gamma_ms.is_empty() {
        return Err(invalid("gamma_m", "the sweep needs at least one value"));
    }
    if !matches!(config.initial, InitialState::Thermal { .. }) {
        return Err(invalid(
            "initial",
            "the damped sweep starts from a thermal state",
        ));
    }
    gamma_ms
        .par_iter()
        .map(|&gm| {
            let mut c = config.clone();
            c.params.gamma_m = gm;
            run_damped_collapse(&c)
        })
        .collect()
}

/// Independent collapse runs, one per seed, computed in parallel.
pub fn run_batch<T: Real>(
    config: &ExperimentConfig,
    seeds: &[u64],
) -> Result<Vec<CollapseTrace<T>>> {
    seeds
        .par_iter()
        .map(|&seed| {
            let mut c = config.clone();
            c.seed = seed;
            if c.params.gamma_m == 0.0 {
                run_cascaded_collapse(&c)
            } else {
                run_damped_collapse(&c)
            }
        })
        .collect()
}

/// Angle sequence for the deterministic readout protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ThetaSchedule {
    Constant {
        theta: f64,
        count: usize,
    },
    List {
        thetas: Vec<f64>,
    },
    /// Uniform draws in `[low, high]` from a seeded generator.
    SeededUniform {
        low: f64,
        high: f64,
        count: usize,
        seed: u64,
    },
}

impl ThetaSchedule {
    /// Varied-angle default: 55 draws uniform in `[π/8, π/2]`.
    pub fn varied_default(seed: u64) -> Self {
        Self::SeededUniform {
            low: std::f64::consts::PI / 8.0,
            high: std::f64::consts::PI / 2.0,
            count: 55,
            seed,
        }
    }

    pub fn thetas(&self) -> Result<Vec<f64>> {
        match self {
            Self::Constant { theta, count } => Ok(vec![*theta; *count]),
            Self::List { thetas } => Ok(thetas.clone()),
            Self::SeededUniform {
                low,
                high,
                count,
                seed,
            } => {
                if !(low.is_finite() && high.is_finite() && low < high) {
                    return Err(invalid("theta", "need low < high"));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                Ok((0..*count).map(|_| rng.random_range(*low..*high)).collect())
            }
        }
    }
}

/// Conditional distributions along an all-`x=1` readout history.
#[derive(Debug, Clone, PartialEq)]
pub struct JcTrace<T: Real> {
    pub thetas: Vec<T>,
    pub distributions: Vec<NumberDistribution<T>>,
    pub step_probabilities: Vec<T>,
    pub history_probability: T,
    pub metrics: Vec<CollapseMetrics<T>>,
}

pub fn run_jc_protocol<T: Real>(
    initial: &NumberDistribution<T>,
    schedule: &ThetaSchedule,
    threshold: T,
) -> Result<JcTrace<T>> {
    let thetas: Vec<T> = schedule.thetas()?.into_iter().map(T::lit).collect();
    let h = repeated_conditional_distribution(initial, &thetas)?;
    let metrics = h
        .distributions
        .iter()
        .map(|d| collapse_metrics(d, threshold))
        .collect();
    Ok(JcTrace {
        thetas,
        distributions: h.distributions,
        step_probabilities: h.step_probabilities,
        history_probability: h.history_probability,
        metrics,
    })
}

/// First-measurement rate table with its decomposition and, for `g = 0` and
/// `κ₁ = 0`, the closed-form overlay.
#[derive(Debug, Clone)]
pub struct RateReport<T: Real> {
    pub trajectory: NoCountTrajectory<T>,
    pub analytic: Option<Vec<T>>,
    /// Largest `|numeric - analytic|` on the grid.
    pub analytic_max_error: Option<T>,
    /// Dip refined on the exact propagator.
    pub dip: Option<T>,
    /// Dip of the closed form.
    pub analytic_dip: Option<T>,
    pub window: Option<WindowDiagnostics>,
}

pub fn rate_profile_report<T: Real>(
    params: &ModelParams<T>,
    initial: &MechanicalState<T>,
    options: &TrajectoryOptions<T>,
    rule: &WindowRule<T>,
) -> Result<RateReport<T>> {
    let amps = SubspaceAmplitudes::initial(initial);
    let trajectory = NoCountTrajectory::simulate(&amps, params, options)?;
    let profile = trajectory.profile()?;
    let closed =
        params.g == T::zero() && params.kappa1 == T::zero() && params.kappa2_prime == T::zero();
    let analytic = if closed && params.gamma != params.kappa2 {
        Some(
            trajectory
                .times
                .iter()
                .map(|&t| analytic_rate_g0(t, params.gamma, params.kappa2))
                .collect::<Result<Vec<T>>>()?,
        )
    } else {
        None
    };
    let analytic_max_error = analytic.as_ref().map(|a| {
        a.iter()
            .zip(&trajectory.rate)
            .map(|(x, y)| (*x - *y).abs())
            .fold(T::zero(), T::max)
    });
    let grid_dip = first_interior_minimum(&profile, rule.epsilon);
    let radius = trajectory.step * T::lit(2.0);
    let dip = grid_dip.map(|g| refine_dip(&amps, params, g, radius));
    let analytic_dip = match (grid_dip, analytic.is_some()) {
        (Some(g), true) => Some(analytic_dip_g0(params.gamma, params.kappa2, g, radius)?),
        _ => None,
    };
    let window = match find_window_or_full(&profile, rule) {
        Ok((w, fallback)) => {
            let mass = WindowedSampler::new(&profile, &w)?.mass();
            Some(WindowDiagnostics::new(&w, mass, fallback))
        }
        Err(_) => None,
    };
    Ok(RateReport {
        trajectory,
        analytic,
        analytic_max_error,
        dip,
        analytic_dip,
        window,
    })
}
