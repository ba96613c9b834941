//! Single-photon no-count dynamics without mechanical damping.
//!
//! With one photon in flight the state stays in the span of
//! `|1⟩_n = |1,0,0,n⟩` (photon in the source), `|2⟩_n = |0,0,1,n⟩` (photon in
//! cavity 2) and `|3⟩_n = |0,1,0,n+1⟩` (photon in cavity 1, one extra phonon),
//! written `|source, cavity1, cavity2, mechanics⟩`. Projecting the no-count
//! generator `-iK` onto that span gives, for each phonon index `n`,
//!
//! ```text
//!        ⎡ -γ/2          0                 0           ⎤
//! A_n =  ⎢ -√(γκ₂)      -(κ₂+κ₂')/2       -i g√(n+1)   ⎥
//!        ⎣  0           -i g√(n+1)        -κ₁/2        ⎦
//! ```
//!
//! The cascaded drive and the cross term of `J†J` cancel above the diagonal,
//! so the source is never driven back by the cavity. Blocks with different
//! `n` never mix, and each block is propagated exactly by `exp(A_n t)`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fock::{MechanicalState, NumberDistribution};
use crate::linalg::{Mat3, Vec3};
use crate::params::ModelParams;
use crate::sampling::RateProfile;
use crate::scalar::{compensated_sum, Real, C};

/// Smallest detection rate for which a jump is considered possible.
pub const MIN_JUMP_RATE: f64 = 1e-15;

/// No-count generator `A_n` of phonon block `n`; `dc/dt = A_n c`.
pub fn generator_matrix<T: Real>(n: usize, params: &ModelParams<T>) -> Mat3<T> {
    let z = C::new(T::zero(), T::zero());
    let half = T::lit(0.5);
    let coupling = C::new(T::zero(), -params.g * T::from_usize_lossy(n + 1).sqrt());
    Mat3([
        [C::new(-half * params.gamma, T::zero()), z, z],
        [
            C::new(-(params.gamma * params.kappa2).sqrt(), T::zero()),
            C::new(-half * (params.kappa2 + params.kappa2_prime), T::zero()),
            coupling,
        ],
        [z, coupling, C::new(-half * params.kappa1, T::zero())],
    ])
}

/// Unnormalized no-count amplitudes `c_k^n(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceAmplitudes<T: Real> {
    blocks: Vec<Vec3<T>>,
    time: T,
}

impl<T: Real> SubspaceAmplitudes<T> {
    /// Photon in the source, both cavities empty, mechanics in `state`.
    pub fn initial(state: &MechanicalState<T>) -> Self {
        let z = C::new(T::zero(), T::zero());
        Self {
            blocks: state.amplitudes().iter().map(|&b| [b, z, z]).collect(),
            time: T::zero(),
        }
    }

    /// `c_1^n = 1` in every block; used for per-n filter functions.
    pub fn unit(n_max: usize) -> Self {
        let z = C::new(T::zero(), T::zero());
        let one = C::new(T::one(), T::zero());
        Self {
            blocks: vec![[one, z, z]; n_max + 1],
            time: T::zero(),
        }
    }

    pub fn from_blocks(blocks: Vec<Vec3<T>>, time: T) -> Self {
        Self { blocks, time }
    }

    #[inline]
    pub fn blocks(&self) -> &[Vec3<T>] {
        &self.blocks
    }

    #[inline]
    pub fn time(&self) -> T {
        self.time
    }

    #[inline]
    pub fn n_max(&self) -> usize {
        self.blocks.len() - 1
    }

    /// Squared norm: the probability of no count (and no loss) so far.
    pub fn norm_sqr(&self) -> T {
        compensated_sum(
            self.blocks
                .iter()
                .flat_map(|b| b.iter().map(|c| c.norm_sqr())),
        )
    }

    /// Populations `(Σ|c1|², Σ|c2|², Σ|c3|²)`.
    pub fn populations(&self) -> [T; 3] {
        let mut out = [T::zero(); 3];
        for (k, o) in out.iter_mut().enumerate() {
            *o = compensated_sum(self.blocks.iter().map(|b| b[k].norm_sqr()));
        }
        out
    }

    /// Exact state at `self.time + dt`.
    pub fn evolved(&self, params: &ModelParams<T>, dt: T) -> Self {
        Propagator::new(params, self.n_max(), dt).apply(self)
    }

    /// Multiplies `c_k^n` by `exp(i φ n)` in every block.
    pub fn with_phase_ramp(&self, phi: T) -> Self {
        let blocks = self
            .blocks
            .iter()
            .enumerate()
            .map(|(n, b)| {
                let f = C::from_polar(T::one(), phi * T::from_usize_lossy(n));
                [b[0] * f, b[1] * f, b[2] * f]
            })
            .collect();
        Self {
            blocks,
            time: self.time,
        }
    }

    fn check_finite(&self) -> Result<()> {
        let ok = self
            .blocks
            .iter()
            .flat_map(|b| b.iter())
            .all(|c| c.re.is_finite() && c.im.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::Numerical(format!(
                "non-finite no-count amplitude at t={}",
                self.time
            )))
        }
    }
}

/// Per-block `exp(A_n dt)` for a fixed step.
#[derive(Debug, Clone)]
pub struct Propagator<T: Real> {
    blocks: Vec<Mat3<T>>,
    dt: T,
}

impl<T: Real> Propagator<T> {
    pub fn new(params: &ModelParams<T>, n_max: usize, dt: T) -> Self {
        let blocks = (0..=n_max)
            .map(|n| {
                generator_matrix(n, params)
                    .scale(C::new(dt, T::zero()))
                    .expm()
            })
            .collect();
        Self { blocks, dt }
    }

    #[inline]
    pub fn block(&self, n: usize) -> &Mat3<T> {
        &self.blocks[n]
    }

    #[inline]
    pub fn step(&self) -> T {
        self.dt
    }

    pub fn apply(&self, state: &SubspaceAmplitudes<T>) -> SubspaceAmplitudes<T> {
        let mut out = state.clone();
        self.apply_in_place(&mut out);
        out
    }

    pub fn apply_in_place(&self, state: &mut SubspaceAmplitudes<T>) {
        for (b, u) in state.blocks.iter_mut().zip(&self.blocks) {
            *b = u.mul_vec(b);
        }
        state.time = state.time + self.dt;
    }
}

/// Advances every block by `exp(A_n dt)`.
pub fn evolve_no_count<T: Real>(
    state: &SubspaceAmplitudes<T>,
    params: &ModelParams<T>,
    dt: T,
) -> Result<SubspaceAmplitudes<T>> {
    if !(dt >= T::zero()) {
        return Err(crate::error::invalid("dt", "must be non-negative"));
    }
    let out = state.evolved(params, dt);
    out.check_finite()?;
    Ok(out)
}

/// Detection rate at D₂ split into its three contributions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateTerms<T> {
    /// `γ Σ|c1|²`
    pub source: T,
    /// `κ₂ Σ|c2|²`
    pub cavity: T,
    /// `2√(γκ₂) Σ Re(c1* c2)`
    pub interference: T,
    pub total: T,
}

/// Amplitude of `J|ψ̃⟩` in block `n`: `√γ c1 + √κ₂ c2`.
#[inline]
pub fn jump_amplitude<T: Real>(block: &Vec3<T>, params: &ModelParams<T>) -> C<T> {
    block[0] * params.gamma.sqrt() + block[1] * params.kappa2.sqrt()
}

/// `R(t) = Σ_n |√γ c1 + √κ₂ c2|²`.
pub fn detection_rate<T: Real>(state: &SubspaceAmplitudes<T>, params: &ModelParams<T>) -> T {
    compensated_sum(
        state
            .blocks
            .iter()
            .map(|b| jump_amplitude(b, params).norm_sqr()),
    )
}

pub fn rate_decomposition<T: Real>(
    state: &SubspaceAmplitudes<T>,
    params: &ModelParams<T>,
) -> RateTerms<T> {
    let [p1, p2, _] = state.populations();
    let source = params.gamma * p1;
    let cavity = params.kappa2 * p2;
    let cross = compensated_sum(state.blocks.iter().map(|b| (b[0].conj() * b[1]).re));
    let interference = T::lit(2.0) * (params.gamma * params.kappa2).sqrt() * cross;
    RateTerms {
        source,
        cavity,
        interference,
        total: detection_rate(state, params),
    }
}

/// Rate of loss through unmonitored channels: `κ₁Σ|c3|²` and `κ₂'Σ|c2|²`.
pub fn loss_rates<T: Real>(state: &SubspaceAmplitudes<T>, params: &ModelParams<T>) -> (T, T) {
    let [_, p2, p3] = state.populations();
    (params.kappa1 * p3, params.kappa2_prime * p2)
}

/// Probability that no photon has been counted or lost yet.
pub fn no_count_probability<T: Real>(state: &SubspaceAmplitudes<T>) -> T {
    state.norm_sqr()
}

/// Cavity-2 population for `g = 0`, `κ₁ = 0` starting from a source photon:
/// `4γκ₂/(κ₂-γ)² (e^{-γt/2} - e^{-κ₂t/2})²`.
pub fn analytic_cavity_population_g0<T: Real>(t: T, gamma: T, kappa2: T) -> Result<T> {
    if gamma == kappa2 {
        return Err(Error::DegenerateRates);
    }
    let half = T::lit(0.5);
    let d = (-gamma * t * half).exp() - (-kappa2 * t * half).exp();
    Ok(T::lit(4.0) * gamma * kappa2 / ((kappa2 - gamma) * (kappa2 - gamma)) * d * d)
}

/// Closed-form detection rate for `g = 0`, `κ₁ = 0`:
/// `γe^{-γt} + κ₂n₂(t) - 4γκ₂/(κ₂-γ) e^{-γt/2}(e^{-γt/2} - e^{-κ₂t/2})`.
pub fn analytic_rate_g0<T: Real>(t: T, gamma: T, kappa2: T) -> Result<T> {
    let n2 = analytic_cavity_population_g0(t, gamma, kappa2)?;
    let half = T::lit(0.5);
    let eg = (-gamma * t * half).exp();
    let ek = (-kappa2 * t * half).exp();
    Ok(gamma * (-gamma * t).exp() + kappa2 * n2
        - T::lit(4.0) * gamma * kappa2 / (kappa2 - gamma) * eg * (eg - ek))
}

/// Minimizes a unimodal `f` on `[a, b]` by golden-section search.
pub fn golden_section_min<T: Real>(f: impl Fn(T) -> T, mut a: T, mut b: T, tol: T) -> T {
    let inv_phi = (T::lit(5.0).sqrt() - T::one()) * T::lit(0.5);
    let mut c = b - (b - a) * inv_phi;
    let mut d = a + (b - a) * inv_phi;
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - (b - a) * inv_phi;
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + (b - a) * inv_phi;
            fd = f(d);
        }
    }
    (a + b) * T::lit(0.5)
}

/// Refines a rate minimum near `guess` using the exact propagator, searching
/// within `guess ± radius`.
pub fn refine_dip<T: Real>(
    initial: &SubspaceAmplitudes<T>,
    params: &ModelParams<T>,
    guess: T,
    radius: T,
) -> T {
    let rate = |t: T| detection_rate(&initial.evolved(params, t), params);
    let lo = (guess - radius).max(T::zero());
    golden_section_min(rate, lo, guess + radius, T::lit(1e-10))
}

/// Minimum of the closed-form `g = 0` rate near `guess`.
pub fn analytic_dip_g0<T: Real>(gamma: T, kappa2: T, guess: T, radius: T) -> Result<T> {
    analytic_rate_g0(guess, gamma, kappa2)?;
    let rate = |t: T| analytic_rate_g0(t, gamma, kappa2).unwrap_or(T::infinity());
    let lo = (guess - radius).max(T::zero());
    Ok(golden_section_min(rate, lo, guess + radius, T::lit(1e-10)))
}

/// Outcome of a detection at D₂.
#[derive(Debug, Clone, PartialEq)]
pub struct Jump<T: Real> {
    /// Normalized post-detection mechanical state, `β_n ∝ √γ c1^n + √κ₂ c2^n`.
    pub mech_state: MechanicalState<T>,
    /// Raw `‖J|ψ̃⟩‖²`, equal to the detection rate at the jump time.
    pub jump_norm: T,
}

/// Applies `J = √γ c + √κ₂ a₂`. The cavity-1 component is annihilated.
pub fn apply_jump<T: Real>(
    state: &SubspaceAmplitudes<T>,
    params: &ModelParams<T>,
) -> Result<Jump<T>> {
    let amps: Vec<C<T>> = state
        .blocks
        .iter()
        .map(|b| jump_amplitude(b, params))
        .collect();
    let jump_norm = compensated_sum(amps.iter().map(|a| a.norm_sqr()));
    if !(jump_norm > T::lit(MIN_JUMP_RATE)) {
        return Err(Error::ImpossibleDetection {
            time: state.time.to_f64_lossy(),
            rate: jump_norm.to_f64_lossy(),
        });
    }
    let mech_state = MechanicalState::from_amplitudes(amps)?.normalize()?;
    Ok(Jump {
        mech_state,
        jump_norm,
    })
}

/// Filter `P(n, t)`: the factor by which a detection at `t` multiplies the
/// prior number distribution, `|√γ c1^n + √κ₂ c2^n|² / Σ_m P_m |…|²` with the
/// per-block amplitudes started from `c_1^n(0) = 1`.
pub fn filter_function<T: Real>(
    params: &ModelParams<T>,
    prior: &NumberDistribution<T>,
    t: T,
) -> Result<Vec<T>> {
    let unit = SubspaceAmplitudes::unit(prior.n_max()).evolved(params, t);
    let raw: Vec<T> = unit
        .blocks
        .iter()
        .map(|b| jump_amplitude(b, params).norm_sqr())
        .collect();
    let norm = compensated_sum(raw.iter().zip(prior.probs()).map(|(r, p)| *r * *p));
    if !(norm > T::lit(MIN_JUMP_RATE)) {
        return Err(Error::ImpossibleDetection {
            time: t.to_f64_lossy(),
            rate: norm.to_f64_lossy(),
        });
    }
    Ok(raw.into_iter().map(|r| r / norm).collect())
}

/// Options for tabulating a no-count trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryOptions<T> {
    /// Initial grid step; halved until the interpolation audit passes.
    pub step: T,
    /// Stop once the no-count probability falls below this value.
    pub survival_floor: T,
    /// Hard stop.
    pub t_max: T,
    /// Required relative midpoint accuracy of linearly interpolated `R`.
    pub interpolation_tolerance: T,
}

impl<T: Real> TrajectoryOptions<T> {
    pub fn for_params(params: &ModelParams<T>) -> Self {
        Self {
            step: T::lit(0.005) / params.kappa2,
            survival_floor: T::lit(1e-12),
            t_max: T::lit(5000.0) / params.kappa2,
            interpolation_tolerance: T::lit(1e-4),
        }
    }

    pub fn with_survival_floor(mut self, floor: T) -> Self {
        self.survival_floor = floor;
        self
    }

    pub fn with_step(mut self, step: T) -> Self {
        self.step = step;
        self
    }
}

/// Tabulated no-count evolution on a uniform grid.
#[derive(Debug, Clone)]
pub struct NoCountTrajectory<T: Real> {
    pub step: T,
    pub times: Vec<T>,
    pub rate: Vec<T>,
    pub survival: Vec<T>,
    pub source_rate: Vec<T>,
    pub cavity_rate: Vec<T>,
    pub interference_rate: Vec<T>,
    /// `κ₁ Σ|c3|²`
    pub loss_kappa1: Vec<T>,
    /// `κ₂' Σ|c2|²`
    pub loss_kappa2_prime: Vec<T>,
    /// Relative midpoint error of the linear interpolant of `R`.
    pub interpolation_error: T,
}

impl<T: Real> NoCountTrajectory<T> {
    /// Tabulates `R(t)` and the survival probability from `initial`, refining
    /// the step until linear interpolation of `R` meets the tolerance.
    pub fn simulate(
        initial: &SubspaceAmplitudes<T>,
        params: &ModelParams<T>,
        options: &TrajectoryOptions<T>,
    ) -> Result<Self> {
        params.validate()?;
        let mut step = options.step;
        for _ in 0..8 {
            let traj = Self::simulate_fixed(initial, params, step, options)?;
            if traj.interpolation_error <= options.interpolation_tolerance {
                return Ok(traj);
            }
            step = step * T::lit(0.5);
        }
        Err(Error::Numerical(
            "rate profile interpolation audit did not converge".into(),
        ))
    }

    fn simulate_fixed(
        initial: &SubspaceAmplitudes<T>,
        params: &ModelParams<T>,
        step: T,
        options: &TrajectoryOptions<T>,
    ) -> Result<Self> {
        let prop = Propagator::new(params, initial.n_max(), step);
        let mut state = initial.clone();
        let mut traj = Self {
            step,
            times: Vec::new(),
            rate: Vec::new(),
            survival: Vec::new(),
            source_rate: Vec::new(),
            cavity_rate: Vec::new(),
            interference_rate: Vec::new(),
            loss_kappa1: Vec::new(),
            loss_kappa2_prime: Vec::new(),
            interpolation_error: T::zero(),
        };
        let mut i = 0usize;
        loop {
            let t = step * T::from_usize_lossy(i);
            let terms = rate_decomposition(&state, params);
            let (l1, l2) = loss_rates(&state, params);
            let survival = state.norm_sqr();
            traj.times.push(t);
            traj.rate.push(terms.total);
            traj.survival.push(survival);
            traj.source_rate.push(terms.source);
            traj.cavity_rate.push(terms.cavity);
            traj.interference_rate.push(terms.interference);
            traj.loss_kappa1.push(l1);
            traj.loss_kappa2_prime.push(l2);
            if (survival < options.survival_floor && i >= 2) || t >= options.t_max {
                break;
            }
            prop.apply_in_place(&mut state);
            state.check_finite()?;
            i += 1;
        }
        let profile = traj.profile()?;
        traj.interpolation_error = profile.interpolation_error();
        Ok(traj)
    }

    pub fn profile(&self) -> Result<RateProfile<T>> {
        RateProfile::new(self.times.clone(), self.rate.clone(), self.survival.clone())
    }

    pub fn end(&self) -> T {
        *self.times.last().expect("non-empty")
    }

    pub fn final_survival(&self) -> T {
        *self.survival.last().expect("non-empty")
    }

    /// `∫₀^T R dt` over the whole table (Simpson).
    pub fn rate_integral(&self) -> T {
        simpson(&self.rate, self.step)
    }

    /// Loss probability over the whole table:
    /// `κ₁∫Σ|c3|² dt + κ₂'∫Σ|c2|² dt`.
    pub fn error_probability_total(&self) -> T {
        simpson(&self.loss_kappa1, self.step) + simpson(&self.loss_kappa2_prime, self.step)
    }

    /// Cumulative loss probability at every grid time.
    pub fn error_probability(&self) -> Vec<T> {
        let a = cumulative(&self.loss_kappa1, self.step);
        let b = cumulative(&self.loss_kappa2_prime, self.step);
        a.into_iter().zip(b).map(|(x, y)| x + y).collect()
    }

    /// Cumulative loss probability at time `t` (linear interpolation).
    pub fn error_probability_at(&self, t: T) -> T {
        let cum = self.error_probability();
        let idx = (t / self.step).floor().to_usize().unwrap_or(0);
        if idx + 1 >= cum.len() {
            return *cum.last().expect("non-empty");
        }
        let s = (t - self.times[idx]) / self.step;
        cum[idx] + (cum[idx + 1] - cum[idx]) * s
    }

    /// Largest violation of `d‖ψ̃‖²/dt = -R - κ₁Σ|c3|² - κ₂'Σ|c2|²`, using
    /// centred differences of the tabulated survival.
    pub fn norm_decay_residual(&self) -> T {
        let two_h = self.step * T::lit(2.0);
        (1..self.times.len() - 1)
            .map(|i| {
                let lhs = (self.survival[i + 1] - self.survival[i - 1]) / two_h;
                let rhs = -(self.rate[i] + self.loss_kappa1[i] + self.loss_kappa2_prime[i]);
                (lhs - rhs).abs()
            })
            .fold(T::zero(), T::max)
    }
}

/// Composite Simpson rule on a uniform grid; an odd interval count closes
/// with a three-point end correction.
pub(crate) fn simpson<T: Real>(y: &[T], h: T) -> T {
    let n = y.len();
    if n < 2 {
        return T::zero();
    }
    if n == 2 {
        return (y[0] + y[1]) * h * T::lit(0.5);
    }
    let intervals = n - 1;
    let even = intervals - intervals % 2;
    let mut terms = Vec::with_capacity(n);
    for i in (0..even).step_by(2) {
        terms.push((y[i] + T::lit(4.0) * y[i + 1] + y[i + 2]) * h / T::lit(3.0));
    }
    if even < intervals {
        let i = n - 2;
        terms.push((-y[i - 1] + T::lit(8.0) * y[i] + T::lit(5.0) * y[i + 1]) * h / T::lit(12.0));
    }
    compensated_sum(terms)
}

/// Running integral: Simpson over whole pairs of intervals, plus the
/// three-point rule `h/12 (5y_i + 8y_{i+1} - y_{i+2})` for a trailing half pair.
pub(crate) fn cumulative<T: Real>(y: &[T], h: T) -> Vec<T> {
    let n = y.len();
    let mut out = vec![T::zero(); n];
    let third = h / T::lit(3.0);
    let twelfth = h / T::lit(12.0);
    let mut i = 0;
    while i + 1 < n {
        let half = if i + 2 < n {
            (T::lit(5.0) * y[i] + T::lit(8.0) * y[i + 1] - y[i + 2]) * twelfth
        } else if i >= 1 {
            (-y[i - 1] + T::lit(8.0) * y[i] + T::lit(5.0) * y[i + 1]) * twelfth
        } else {
            (y[i] + y[i + 1]) * h * T::lit(0.5)
        };
        out[i + 1] = out[i] + half;
        if i + 2 < n {
            out[i + 2] = out[i] + (y[i] + T::lit(4.0) * y[i + 1] + y[i + 2]) * third;
        }
        i += 2;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{coherent_state, FockCutoff};

    fn params_g0() -> ModelParams<f64> {
        ModelParams::reference().with_g(0.0).with_kappa1(0.0)
    }

    fn coherent(beta: f64, n_max: usize) -> MechanicalState<f64> {
        coherent_state(C::new(beta, 0.0), FockCutoff::new(n_max).unwrap()).unwrap()
    }

    #[test]
    fn generator_structure() {
        let p = ModelParams::<f64>::reference();
        let a0 = generator_matrix(0, &p);
        let a5 = generator_matrix(5, &p);
        assert!((a5.get(1, 2) - C::new(0.0, -6f64.sqrt())).norm() < 1e-15);
        // Only the c2–c3 coupling depends on n.
        for (i, j) in [(0, 0), (1, 0), (1, 1), (2, 2), (0, 1), (0, 2), (2, 0)] {
            assert_eq!(a0.get(i, j), a5.get(i, j));
        }
        let g0 = params_g0();
        assert_eq!(generator_matrix(0, &g0), generator_matrix(7, &g0));
    }

    #[test]
    fn generator_is_dissipative() {
        // A + A† must be negative semidefinite for the norm to decay.
        let p = ModelParams::<f64>::reference();
        for n in 0..30 {
            let a = generator_matrix(n, &p);
            let h = a + a.adjoint();
            let neg: Vec<C<f64>> = h.0.iter().flatten().map(|x| -x).collect();
            assert!(crate::linalg::shifted_cholesky(&neg, 3, 1e-12).is_ok());
        }
    }

    #[test]
    fn zero_step_is_identity() {
        let s = SubspaceAmplitudes::initial(&coherent(2.0, 20));
        let out = evolve_no_count(&s, &ModelParams::reference(), 0.0).unwrap();
        assert_eq!(out.blocks(), s.blocks());
    }

    #[test]
    fn semigroup_property() {
        let p = ModelParams::<f64>::reference();
        let s = SubspaceAmplitudes::initial(&coherent(2.0, 20));
        let full = evolve_no_count(&s, &p, 3.0).unwrap();
        let half = evolve_no_count(&evolve_no_count(&s, &p, 1.5).unwrap(), &p, 1.5).unwrap();
        for (a, b) in full.blocks().iter().zip(half.blocks()) {
            for k in 0..3 {
                assert!((a[k] - b[k]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn cavity_population_matches_closed_form() {
        let p = params_g0();
        let s = SubspaceAmplitudes::initial(
            &MechanicalState::fock(0, FockCutoff::new(2).unwrap()).unwrap(),
        );
        for &t in &[0.3, 1.0, 2.5, 7.0] {
            let c = s.evolved(&p, t);
            let n2 = analytic_cavity_population_g0(t, 0.9, 1.0).unwrap();
            assert!((c.populations()[1] - n2).abs() < 1e-12);
            assert!(c.populations()[2] == 0.0);
        }
    }

    #[test]
    fn rate_matches_analytic_and_vanishes_at_infinity() {
        let p = params_g0();
        let s = SubspaceAmplitudes::initial(&coherent(1.0, 12));
        assert!((detection_rate(&s, &p) - 0.9).abs() < 1e-15);
        for k in 0..=40 {
            let t = k as f64 * 0.5;
            let r = detection_rate(&s.evolved(&p, t), &p);
            assert!((r - analytic_rate_g0(t, 0.9, 1.0).unwrap()).abs() < 1e-12);
        }
        assert!(analytic_rate_g0(400.0, 0.9, 1.0).unwrap() < 1e-70);
        assert!(matches!(
            analytic_rate_g0(1.0, 1.0, 1.0),
            Err(Error::DegenerateRates)
        ));
    }

    #[test]
    fn decomposition_sums_and_starts_in_source() {
        let p = ModelParams::<f64>::reference();
        let s = SubspaceAmplitudes::initial(&coherent(2.0, 20));
        let t0 = rate_decomposition(&s, &p);
        assert!((t0.source - 0.9).abs() < 1e-15);
        assert_eq!((t0.cavity, t0.interference), (0.0, 0.0));
        let later = rate_decomposition(&s.evolved(&p, 2.2), &p);
        assert!((later.source + later.cavity + later.interference - later.total).abs() < 1e-14);
    }

    #[test]
    fn dip_location() {
        // √γ c1 + √κ₂ c2 vanishes where (κ₂+γ) e^{-γt/2} = 2κ₂ e^{-κ₂t/2}.
        let expect = 2.0 * (2.0f64 / 1.9).ln() / 0.1;
        let p = params_g0();
        let s = SubspaceAmplitudes::initial(&coherent(1.0, 12));
        assert!((refine_dip(&s, &p, 1.0, 0.2) - expect).abs() < 1e-6);
        assert!((analytic_dip_g0(0.9, 1.0, 1.0, 0.2).unwrap() - expect).abs() < 1e-6);
    }

    #[test]
    fn jump_at_time_zero_is_a_reflection() {
        let p = ModelParams::<f64>::reference();
        let m = coherent(2.0, 20);
        let j = apply_jump(&SubspaceAmplitudes::initial(&m), &p).unwrap();
        for (a, b) in j.mech_state.amplitudes().iter().zip(m.amplitudes()) {
            assert!((a - b).norm() < 1e-14);
        }
        assert!((j.jump_norm - 0.9).abs() < 1e-14);
    }

    #[test]
    fn jump_distribution_is_prior_times_filter() {
        let p = ModelParams::<f64>::reference();
        let m = coherent(2.0, 20);
        let t = 2.7;
        let j = apply_jump(&SubspaceAmplitudes::initial(&m).evolved(&p, t), &p).unwrap();
        let prior = m.number_distribution();
        let filter = filter_function(&p, &prior, t).unwrap();
        let post = j.mech_state.number_distribution();
        for n in 0..=20 {
            assert!((post.probs()[n] - prior.probs()[n] * filter[n]).abs() < 1e-14);
        }
    }

    #[test]
    fn uncoupled_mechanics_is_a_spectator() {
        let p = params_g0().with_kappa1(0.2);
        let m = coherent(2.0, 20);
        let prior = m.number_distribution();
        for &t in &[0.4, 2.0, 6.0] {
            let f = filter_function(&p, &prior, t).unwrap();
            assert!(f.iter().all(|x| (x - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn phase_covariance() {
        let p = ModelParams::<f64>::reference();
        let s = SubspaceAmplitudes::initial(&coherent(2.0, 20));
        let r = s.with_phase_ramp(0.77);
        for &t in &[0.5, 3.0] {
            let (a, b) = (s.evolved(&p, t), r.evolved(&p, t));
            assert!((detection_rate(&a, &p) - detection_rate(&b, &p)).abs() < 1e-14);
            let (ja, jb) = (apply_jump(&a, &p).unwrap(), apply_jump(&b, &p).unwrap());
            assert!(
                ja.mech_state
                    .number_distribution()
                    .max_abs_diff(&jb.mech_state.number_distribution())
                    < 1e-14
            );
        }
    }

    #[test]
    fn impossible_detection() {
        let p = ModelParams::<f64>::reference();
        let s = SubspaceAmplitudes::from_blocks(vec![[C::new(0.0, 0.0); 3]; 3], 1.0);
        assert!(matches!(
            apply_jump(&s, &p),
            Err(Error::ImpossibleDetection { .. })
        ));
    }

    #[test]
    fn trajectory_bookkeeping() {
        let p = ModelParams::<f64>::reference();
        let s = SubspaceAmplitudes::initial(&coherent(2.0, 20));
        let traj = NoCountTrajectory::simulate(&s, &p, &TrajectoryOptions::for_params(&p)).unwrap();
        let total = traj.rate_integral() + traj.error_probability_total() + traj.final_survival();
        assert!((total - 1.0).abs() < 1e-6, "{total}");
        let perr = traj.error_probability_total();
        assert!(perr > 0.0 && perr < 1.0);
        assert!(traj.survival.windows(2).all(|w| w[1] < w[0]));
        assert!(traj.norm_decay_residual() < 1e-4);
        assert!(traj.interpolation_error <= 1e-4);

        let lossless = params_g0();
        let t2 =
            NoCountTrajectory::simulate(&s, &lossless, &TrajectoryOptions::for_params(&lossless))
                .unwrap();
        assert!(t2.error_probability().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn survival_is_one_minus_integrated_rate() {
        let p = params_g0();
        let s = SubspaceAmplitudes::initial(&coherent(1.0, 12));
        let traj = NoCountTrajectory::simulate(&s, &p, &TrajectoryOptions::for_params(&p)).unwrap();
        let cum = cumulative(&traj.rate, traj.step);
        for i in (0..traj.times.len()).step_by(97) {
            let e = (traj.survival[i] - (1.0 - cum[i])).abs();
            assert!(e < 1e-8, "{e} at {i}");
        }
    }

    #[test]
    fn quadrature_rules() {
        let h = 0.01;
        let y: Vec<f64> = (0..=300).map(|i| (i as f64 * h).sin()).collect();
        let e = (simpson(&y, h) - (1.0 - 3f64.cos())).abs();
        assert!(e < 1e-9, "{e}");
        let y2: Vec<f64> = (0..=301).map(|i| (i as f64 * h).sin()).collect();
        assert!((simpson(&y2, h) - (1.0 - 3.01f64.cos())).abs() < 1e-9);
        let c = cumulative(&y, h);
        assert!((c[150] - (1.0 - 1.5f64.cos())).abs() < 1e-8);
    }
}
