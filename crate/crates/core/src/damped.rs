//! No-count evolution with mechanical damping.
//!
//! The conditional density matrix lives on the same single-photon manifold as
//! the pure path, `{|k⟩_n : k = 1,2,3, 0 ≤ n ≤ n_max}`, stored as 3×3 blocks
//! `ρ_{nn'}`. Damping acts through the phonon operator projected onto the
//! manifold, `b_P`, which maps block `n+1` to block `n` with weights
//! `diag(√(n+1), √(n+1), √(n+2))`. The only state it drops is `b|0,1,0,1⟩`,
//! i.e. `|3⟩_0 → |0,1,0,0⟩`, which is outside the manifold. Using `b_P` in
//! both the sandwich and the anticommutator keeps the damping trace-free.
//!
//! The no-count generator is block diagonal in `n` and is propagated exactly;
//! the mechanical dissipator goes through RK4 in the interaction picture.
//! With `γ_m = 0` a step is therefore exact, and with the photon rates set to
//! zero it is plain RK4 on a trace-preserving generator.
//!
//! Neither part couples blocks with different `n - n'`, so a state that is
//! diagonal in the phonon number stays diagonal and costs `O(n_max)`.

use serde::Serialize;

use crate::cascaded::{cumulative, simpson, SubspaceAmplitudes};
use crate::error::{invalid, Error, Result};
use crate::fock::{MechanicalState, NumberDistribution};
use crate::linalg::{shifted_cholesky, Mat3};
use crate::params::ModelParams;
use crate::sampling::RateProfile;
use crate::scalar::{compensated_sum, Real, C};
use crate::wigner::DensityMatrix;

/// Eigenvalues above `-POSITIVITY_TOLERANCE` are accepted.
pub const POSITIVITY_TOLERANCE: f64 = 1e-10;

/// Full positivity checks on banded states run every this many steps.
const DENSE_CHECK_INTERVAL: usize = 200;

const CHECKPOINT_INTERVAL: usize = 64;

#[inline]
fn zero<T: Real>() -> C<T> {
    C::new(T::zero(), T::zero())
}

/// Split damped generator: the exactly propagated no-count part `A_n` and
/// the mechanical dissipator.
#[derive(Debug, Clone)]
struct Generator<T: Real> {
    diag: Vec<Mat3<T>>,
    /// `-½γ_m[(N̄+1) b_P†b_P + N̄ b_P b_P†]` on the diagonal of block `n`.
    anti: Vec<[T; 3]>,
    /// `γ_m (N̄+1)`
    down: T,
    /// `γ_m N̄`
    up: T,
    /// `b_P` from block `n+1` to block `n`, for `n < n_max`.
    lower: Vec<[T; 3]>,
}

impl<T: Real> Generator<T> {
    fn new(params: &ModelParams<T>, n_max: usize) -> Self {
        let down = params.gamma_m * (params.n_bar + T::one());
        let up = params.gamma_m * params.n_bar;
        let lower: Vec<[T; 3]> = (0..n_max)
            .map(|n| {
                let a = T::from_usize_lossy(n + 1).sqrt();
                [a, a, T::from_usize_lossy(n + 2).sqrt()]
            })
            .collect();
        let half = T::lit(0.5);
        let anti = (0..=n_max)
            .map(|n| {
                let mut d = [T::zero(); 3];
                for (k, x) in d.iter_mut().enumerate() {
                    // b†b in block n; |3⟩_0 keeps its decay even though the
                    // target |0,1,0,0⟩ is not tracked.
                    let bdb = if n >= 1 {
                        lower[n - 1][k] * lower[n - 1][k]
                    } else if k == 2 {
                        T::one()
                    } else {
                        T::zero()
                    };
                    let bbd = if n < n_max {
                        lower[n][k] * lower[n][k]
                    } else {
                        T::zero()
                    };
                    *x = -half * (down * bdb + up * bbd);
                }
                d
            })
            .collect();
        let diag = (0..=n_max)
            .map(|n| crate::cascaded::generator_matrix(n, params))
            .collect();
        Self {
            diag,
            anti,
            down,
            up,
            lower,
        }
    }

    fn has_damping(&self) -> bool {
        self.down > T::zero() || self.up > T::zero()
    }

    fn propagators(&self, dt: T) -> Vec<Mat3<T>> {
        self.diag
            .iter()
            .map(|a| a.scale(C::new(dt, T::zero())).expm())
            .collect()
    }
}

/// Unnormalized conditional state on the single-photon manifold.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalDensity<T: Real> {
    dim: usize,
    /// Largest `|n - n'|` with a non-zero block.
    band: usize,
    /// Blocks within the band; row `n` holds `n' = n - band ..= n + band`.
    blocks: Vec<Mat3<T>>,
    time: T,
}

impl<T: Real> ConditionalDensity<T> {
    fn empty(dim: usize, band: usize, time: T) -> Self {
        Self {
            dim,
            band,
            blocks: vec![Mat3::zero(); dim * (2 * band + 1)],
            time,
        }
    }

    /// `|ψ̃⟩⟨ψ̃|` for a pure no-count state.
    pub fn from_pure(state: &SubspaceAmplitudes<T>) -> Self {
        let b = state.blocks();
        let dim = b.len();
        let mut out = Self::empty(dim, dim - 1, state.time());
        for n in 0..dim {
            for m in 0..dim {
                let blk = out.slot_mut(n, m);
                for k in 0..3 {
                    for j in 0..3 {
                        blk.0[k][j] = b[n][k] * b[m][j].conj();
                    }
                }
            }
        }
        out
    }

    /// Builds a state from a row-major `dim × dim` array of blocks.
    pub fn from_dense_blocks(dim: usize, blocks: &[Mat3<T>], time: T) -> Result<Self> {
        if blocks.len() != dim * dim || dim == 0 {
            return Err(Error::Dimension {
                expected: dim * dim,
                got: blocks.len(),
            });
        }
        let mut out = Self::empty(dim, dim - 1, time);
        for n in 0..dim {
            for m in 0..dim {
                *out.slot_mut(n, m) = blocks[n * dim + m];
            }
        }
        Ok(out)
    }

    #[inline]
    fn slot(&self, n: usize, m: usize) -> usize {
        n * (2 * self.band + 1) + m + self.band - n
    }

    #[inline]
    fn slot_mut(&mut self, n: usize, m: usize) -> &mut Mat3<T> {
        let i = self.slot(n, m);
        &mut self.blocks[i]
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn n_max(&self) -> usize {
        self.dim - 1
    }

    #[inline]
    pub fn band(&self) -> usize {
        self.band
    }

    #[inline]
    pub fn time(&self) -> T {
        self.time
    }

    /// Block `ρ_{nm}`; zero outside the band.
    #[inline]
    pub fn block(&self, n: usize, m: usize) -> Mat3<T> {
        if n.abs_diff(m) > self.band {
            Mat3::zero()
        } else {
            self.blocks[self.slot(n, m)]
        }
    }

    fn band_range(&self, n: usize) -> std::ops::Range<usize> {
        n.saturating_sub(self.band)..(n + self.band + 1).min(self.dim)
    }

    pub fn trace(&self) -> T {
        compensated_sum((0..self.dim).flat_map(|n| {
            let b = self.block(n, n);
            (0..3).map(move |k| b.0[k][k].re)
        }))
    }

    /// `(Σ_n ρ_{(n,1)(n,1)}, Σ_n ρ_{(n,2)(n,2)}, Σ_n ρ_{(n,3)(n,3)})`.
    pub fn populations(&self) -> [T; 3] {
        let mut out = [T::zero(); 3];
        for (k, o) in out.iter_mut().enumerate() {
            *o = compensated_sum((0..self.dim).map(|n| self.block(n, n).0[k][k].re));
        }
        out
    }

    /// Dense `3(n_max+1)` square matrix, index `3n + (k-1)`.
    pub fn to_dense(&self) -> Vec<C<T>> {
        let d = 3 * self.dim;
        let mut out = vec![zero(); d * d];
        for n in 0..self.dim {
            for m in self.band_range(n) {
                let b = self.block(n, m);
                for k in 0..3 {
                    for j in 0..3 {
                        out[(3 * n + k) * d + 3 * m + j] = b.0[k][j];
                    }
                }
            }
        }
        out
    }

    /// Largest `|ρ - ρ†|` entry.
    pub fn hermiticity_error(&self) -> T {
        let mut worst = T::zero();
        for n in 0..self.dim {
            for m in self.band_range(n) {
                let (a, b) = (self.block(n, m), self.block(m, n));
                for k in 0..3 {
                    for j in 0..3 {
                        worst = worst.max((a.0[k][j] - b.0[j][k].conj()).norm());
                    }
                }
            }
        }
        worst
    }

    /// Certifies that the smallest eigenvalue is above `-tolerance`.
    pub fn check_positivity(&self, tolerance: T) -> Result<()> {
        let fail = |value: T| Error::Positivity {
            time: self.time.to_f64_lossy(),
            value: value.to_f64_lossy(),
        };
        if self.band == 0 {
            for n in 0..self.dim {
                let flat: Vec<C<T>> = self.block(n, n).0.iter().flatten().copied().collect();
                shifted_cholesky(&flat, 3, tolerance).map_err(fail)?;
            }
            Ok(())
        } else {
            shifted_cholesky(&self.to_dense(), 3 * self.dim, tolerance).map_err(fail)
        }
    }

    /// Rate of counts at D₂: `tr(JρJ†)` with `J = √γ c + √κ₂ a₂`.
    pub fn detection_rate(&self, params: &ModelParams<T>) -> T {
        let w = [params.gamma.sqrt(), params.kappa2.sqrt()];
        compensated_sum((0..self.dim).map(|n| sandwich(self.block(n, n), w).re))
    }

    /// `(κ₁ Σρ_33 + γ_m(N̄+1) ρ_33(0,0), κ₂' Σρ_22)`. The second part of the
    /// first entry is the flux into |0,1,0,0⟩, a photon in cavity 1 that can
    /// no longer be counted.
    pub fn loss_rates(&self, params: &ModelParams<T>) -> (T, T) {
        let [_, p2, p3] = self.populations();
        let escape = params.gamma_m * (params.n_bar + T::one()) * self.block(0, 0).0[2][2].re;
        (params.kappa1 * p3 + escape, params.kappa2_prime * p2)
    }

    fn map_blocks(&self, f: impl Fn(usize, usize) -> Mat3<T>) -> Self {
        let mut out = Self::empty(self.dim, self.band, self.time);
        for n in 0..self.dim {
            for m in self.band_range(n) {
                *out.slot_mut(n, m) = f(n, m);
            }
        }
        out
    }

    /// `E_n ρ_{nn'} E_{n'}†`.
    fn propagate(&self, e: &[Mat3<T>]) -> Self {
        self.map_blocks(|n, m| e[n] * self.block(n, m) * e[m].adjoint())
    }

    /// `γ_m(N̄+1) D[b_P]ρ + γ_m N̄ D[b_P†]ρ`.
    fn dissipator(&self, g: &Generator<T>) -> Self {
        let n_max = self.dim - 1;
        self.map_blocks(|n, m| {
            let own = self.block(n, m);
            let mut out = Mat3::zero();
            for k in 0..3 {
                for j in 0..3 {
                    out.0[k][j] = own.0[k][j] * (g.anti[n][k] + g.anti[m][j]);
                }
            }
            if n < n_max && m < n_max && g.down > T::zero() {
                let (wn, wm) = (&g.lower[n], &g.lower[m]);
                let src = self.block(n + 1, m + 1);
                for k in 0..3 {
                    for j in 0..3 {
                        out.0[k][j] = out.0[k][j] + src.0[k][j] * (g.down * wn[k] * wm[j]);
                    }
                }
            }
            if n >= 1 && m >= 1 && g.up > T::zero() {
                let (wn, wm) = (&g.lower[n - 1], &g.lower[m - 1]);
                let src = self.block(n - 1, m - 1);
                for k in 0..3 {
                    for j in 0..3 {
                        out.0[k][j] = out.0[k][j] + src.0[k][j] * (g.up * wn[k] * wm[j]);
                    }
                }
            }
            out
        })
    }

    /// `self + s·other` on the band.
    fn axpy(&self, s: T, other: &Self) -> Self {
        let s = C::new(s, T::zero());
        self.map_blocks(|n, m| self.block(n, m) + other.block(n, m).scale(s))
    }

    fn check_finite(&self) -> Result<()> {
        let ok = self
            .blocks
            .iter()
            .flat_map(|b| b.0.iter().flatten())
            .all(|c| c.re.is_finite() && c.im.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::Numerical(format!(
                "non-finite damped density at t={}",
                self.time
            )))
        }
    }
}

/// `wᵀ B w` over the source and cavity-2 rows of a block.
#[inline]
fn sandwich<T: Real>(b: Mat3<T>, w: [T; 2]) -> C<T> {
    let mut s = zero();
    for k in 0..2 {
        for j in 0..2 {
            s = s + b.0[k][j] * (w[k] * w[j]);
        }
    }
    s
}

/// One fixed step of RK4 in the interaction picture of the block-diagonal part.
#[derive(Debug, Clone)]
pub struct DampedStepper<T: Real> {
    generator: Generator<T>,
    full: Vec<Mat3<T>>,
    half: Vec<Mat3<T>>,
    h: T,
}

impl<T: Real> DampedStepper<T> {
    pub fn new(params: &ModelParams<T>, n_max: usize, h: T) -> Self {
        let generator = Generator::new(params, n_max);
        let full = generator.propagators(h);
        let half = generator.propagators(h * T::lit(0.5));
        Self {
            generator,
            full,
            half,
            h,
        }
    }

    #[inline]
    pub fn step_size(&self) -> T {
        self.h
    }

    pub fn step(&self, rho: &ConditionalDensity<T>) -> ConditionalDensity<T> {
        let h = self.h;
        let mut out = if !self.generator.has_damping() {
            rho.propagate(&self.full)
        } else {
            let g = &self.generator;
            let half_h = h * T::lit(0.5);
            let y_i = rho.propagate(&self.half);
            let k1 = rho.dissipator(g).propagate(&self.half);
            let k2 = y_i.axpy(half_h, &k1).dissipator(g);
            let k3 = y_i.axpy(half_h, &k2).dissipator(g);
            let k4 = y_i.axpy(h, &k3).propagate(&self.half).dissipator(g);
            let sixth = h / T::lit(6.0);
            let third = h / T::lit(3.0);
            let inner = y_i.axpy(sixth, &k1).axpy(third, &k2).axpy(third, &k3);
            inner.propagate(&self.half).axpy(sixth, &k4)
        };
        out.time = rho.time + h;
        out
    }
}

/// Largest step the damped integrator accepts:
/// `min(0.01/κ₂, 0.1/(γ_m(N̄+1)(n_max+1)))`.
pub fn max_damped_step<T: Real>(params: &ModelParams<T>, n_max: usize) -> T {
    let mut h = T::infinity();
    if params.kappa2 > T::zero() {
        h = T::lit(0.01) / params.kappa2;
    }
    let thermal = params.gamma_m * (params.n_bar + T::one()) * T::from_usize_lossy(n_max + 1);
    if thermal > T::zero() {
        h = h.min(T::lit(0.1) / thermal);
    }
    h
}

/// Advances `rho` by `dt`, subdividing into equal steps no longer than the
/// stepper limit, and checks positivity at the end.
pub fn evolve_no_count_damped<T: Real>(
    rho: &ConditionalDensity<T>,
    params: &ModelParams<T>,
    dt: T,
) -> Result<ConditionalDensity<T>> {
    params.validate_rates()?;
    if !(dt >= T::zero()) || !dt.is_finite() {
        return Err(invalid("dt", "must be finite and non-negative"));
    }
    if dt == T::zero() {
        return Ok(rho.clone());
    }
    let h_max = max_damped_step(params, rho.n_max());
    let steps = if h_max.is_finite() {
        (dt / h_max).ceil().to_usize().unwrap_or(1).max(1)
    } else {
        1
    };
    let stepper = DampedStepper::new(params, rho.n_max(), dt / T::from_usize_lossy(steps));
    let mut out = rho.clone();
    for _ in 0..steps {
        out = stepper.step(&out);
    }
    out.time = rho.time + dt;
    out.check_finite()?;
    out.check_positivity(T::lit(POSITIVITY_TOLERANCE))?;
    Ok(out)
}

pub fn detection_rate_damped<T: Real>(rho: &ConditionalDensity<T>, params: &ModelParams<T>) -> T {
    rho.detection_rate(params)
}

/// Normalized mechanical density matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MechanicalDensity<T: Real> {
    dim: usize,
    #[serde(skip)]
    rho: Vec<C<T>>,
}

impl<T: Real> MechanicalDensity<T> {
    /// Validates shape and Hermiticity, then normalizes the trace.
    pub fn new(dim: usize, rho: Vec<C<T>>) -> Result<Self> {
        if rho.len() != dim * dim || dim < 2 {
            return Err(Error::Dimension {
                expected: dim * dim,
                got: rho.len(),
            });
        }
        let out = Self { dim, rho };
        if out.hermiticity_error() > T::lit(1e-10) {
            return Err(invalid("rho_m", "not Hermitian"));
        }
        out.normalized()
    }

    pub fn from_distribution(dist: &NumberDistribution<T>) -> Self {
        let dim = dist.probs().len();
        let mut rho = vec![zero(); dim * dim];
        for (n, &p) in dist.probs().iter().enumerate() {
            rho[n * dim + n] = C::new(p, T::zero());
        }
        Self { dim, rho }
    }

    pub fn from_state(state: &MechanicalState<T>) -> Self {
        let dm = DensityMatrix::from_state(state);
        let dim = dm.dim();
        let rho = (0..dim * dim).map(|i| dm.get(i / dim, i % dim)).collect();
        Self { dim, rho }
    }

    fn normalized(mut self) -> Result<Self> {
        let tr = self.trace();
        if !(tr > T::zero()) || !tr.is_finite() {
            return Err(Error::ZeroMass {
                mass: tr.to_f64_lossy(),
            });
        }
        for r in &mut self.rho {
            *r = *r / tr;
        }
        Ok(self)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn n_max(&self) -> usize {
        self.dim - 1
    }

    #[inline]
    pub fn get(&self, n: usize, m: usize) -> C<T> {
        self.rho[n * self.dim + m]
    }

    pub fn entries(&self) -> &[C<T>] {
        &self.rho
    }

    pub fn trace(&self) -> T {
        compensated_sum((0..self.dim).map(|n| self.get(n, n).re))
    }

    /// `tr ρ²`.
    pub fn purity(&self) -> T {
        compensated_sum(self.rho.iter().map(|x| x.norm_sqr()))
    }

    pub fn hermiticity_error(&self) -> T {
        let mut worst = T::zero();
        for n in 0..self.dim {
            for m in 0..self.dim {
                worst = worst.max((self.get(n, m) - self.get(m, n).conj()).norm());
            }
        }
        worst
    }

    /// Largest `|n - n'|` with a non-zero entry.
    pub fn band(&self) -> usize {
        let mut band = 0;
        for n in 0..self.dim {
            for m in 0..self.dim {
                if self.get(n, m) != zero() {
                    band = band.max(n.abs_diff(m));
                }
            }
        }
        band
    }

    /// Occupation probabilities; roundoff negatives are clamped to zero.
    pub fn number_distribution(&self) -> Result<NumberDistribution<T>> {
        NumberDistribution::from_weights(
            (0..self.dim)
                .map(|n| self.get(n, n).re.max(T::zero()))
                .collect(),
        )
    }

    pub fn check_positivity(&self, tolerance: T) -> Result<()> {
        shifted_cholesky(&self.rho, self.dim, tolerance).map_err(|v| Error::Positivity {
            time: f64::NAN,
            value: v.to_f64_lossy(),
        })
    }

    pub fn to_density_matrix(&self) -> DensityMatrix<T> {
        DensityMatrix::new(self.dim, self.rho.clone()).expect("square by construction")
    }
}

/// Outcome of a detection on the damped path.
#[derive(Debug, Clone, PartialEq)]
pub struct DampedJump<T: Real> {
    pub mech_density: MechanicalDensity<T>,
    /// `tr(JρJ†)`, the detection rate at the jump time.
    pub jump_norm: T,
}

/// `ρ_m[n,n'] ∝ Σ_{k,k' ∈ {1,2}} w_k w_k' ρ[(n,k),(n',k')]` with `w = (√γ, √κ₂)`.
pub fn apply_jump_damped<T: Real>(
    rho: &ConditionalDensity<T>,
    params: &ModelParams<T>,
) -> Result<DampedJump<T>> {
    let jump_norm = rho.detection_rate(params);
    if !(jump_norm > T::lit(crate::cascaded::MIN_JUMP_RATE)) {
        return Err(Error::ImpossibleDetection {
            time: rho.time.to_f64_lossy(),
            rate: jump_norm.to_f64_lossy(),
        });
    }
    let w = [params.gamma.sqrt(), params.kappa2.sqrt()];
    let dim = rho.dim;
    let mut m = vec![zero(); dim * dim];
    for n in 0..dim {
        for k in rho.band_range(n) {
            m[n * dim + k] = sandwich(rho.block(n, k), w);
        }
    }
    let mech_density = MechanicalDensity { dim, rho: m }.normalized()?;
    Ok(DampedJump {
        mech_density,
        jump_norm,
    })
}

/// Photon back in the source, cavities empty, mechanics as given.
pub fn rearm_source<T: Real>(mech: &MechanicalDensity<T>) -> ConditionalDensity<T> {
    let dim = mech.dim;
    let mut out = ConditionalDensity::empty(dim, mech.band(), T::zero());
    for n in 0..dim {
        for m in 0..dim {
            if n.abs_diff(m) <= out.band {
                out.slot_mut(n, m).0[0][0] = mech.get(n, m);
            }
        }
    }
    out
}

/// Lets the mechanics alone relax for `tau` with the photon absent.
pub fn dwell_mechanics<T: Real>(
    mech: &MechanicalDensity<T>,
    params: &ModelParams<T>,
    tau: T,
) -> Result<MechanicalDensity<T>> {
    let bath_only = ModelParams {
        g: T::zero(),
        kappa1: T::zero(),
        kappa2: T::zero(),
        kappa2_prime: T::zero(),
        gamma: T::zero(),
        gamma_m: params.gamma_m,
        n_bar: params.n_bar,
    };
    let rho = evolve_no_count_damped(&rearm_source(mech), &bath_only, tau)?;
    let dim = rho.dim;
    let m = (0..dim * dim)
        .map(|i| rho.block(i / dim, i % dim).0[0][0])
        .collect();
    MechanicalDensity { dim, rho: m }.normalized()
}

/// Options for tabulating a damped no-count trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DampedOptions<T> {
    /// Requested grid step; reduced to the stepper limit when needed.
    pub step: T,
    pub survival_floor: T,
    pub t_max: T,
    pub interpolation_tolerance: T,
}

impl<T: Real> DampedOptions<T> {
    pub fn from_pure(o: &crate::cascaded::TrajectoryOptions<T>) -> Self {
        Self {
            step: o.step,
            survival_floor: o.survival_floor,
            t_max: o.t_max,
            interpolation_tolerance: o.interpolation_tolerance,
        }
    }
}

/// Tabulated damped no-count evolution with periodic checkpoints.
#[derive(Debug, Clone)]
pub struct DampedTrajectory<T: Real> {
    pub step: T,
    pub times: Vec<T>,
    pub rate: Vec<T>,
    pub survival: Vec<T>,
    pub loss_kappa1: Vec<T>,
    pub loss_kappa2_prime: Vec<T>,
    pub interpolation_error: T,
    checkpoints: Vec<ConditionalDensity<T>>,
    stepper: DampedStepper<T>,
    params: ModelParams<T>,
}

impl<T: Real> DampedTrajectory<T> {
    pub fn simulate(
        initial: &ConditionalDensity<T>,
        params: &ModelParams<T>,
        options: &DampedOptions<T>,
    ) -> Result<Self> {
        params.validate()?;
        let mut step = options.step;
        let cap = max_damped_step(params, initial.n_max());
        while step > cap {
            step = step * T::lit(0.5);
        }
        for _ in 0..8 {
            let traj = Self::simulate_fixed(initial, params, step, options)?;
            if traj.interpolation_error <= options.interpolation_tolerance {
                return Ok(traj);
            }
            step = step * T::lit(0.5);
        }
        Err(Error::Numerical(
            "damped rate profile interpolation audit did not converge".into(),
        ))
    }

    fn simulate_fixed(
        initial: &ConditionalDensity<T>,
        params: &ModelParams<T>,
        step: T,
        options: &DampedOptions<T>,
    ) -> Result<Self> {
        let stepper = DampedStepper::new(params, initial.n_max(), step);
        let tol = T::lit(POSITIVITY_TOLERANCE);
        let mut rho = initial.clone();
        let mut traj = Self {
            step,
            times: Vec::new(),
            rate: Vec::new(),
            survival: Vec::new(),
            loss_kappa1: Vec::new(),
            loss_kappa2_prime: Vec::new(),
            interpolation_error: T::zero(),
            checkpoints: Vec::new(),
            stepper,
            params: *params,
        };
        let mut i = 0usize;
        loop {
            if i % CHECKPOINT_INTERVAL == 0 {
                traj.checkpoints.push(rho.clone());
            }
            let t = step * T::from_usize_lossy(i);
            let survival = rho.trace();
            let (l1, l2) = rho.loss_rates(params);
            traj.times.push(t);
            traj.rate.push(rho.detection_rate(params));
            traj.survival.push(survival);
            traj.loss_kappa1.push(l1);
            traj.loss_kappa2_prime.push(l2);
            if (survival < options.survival_floor && i >= 2) || t >= options.t_max {
                break;
            }
            rho = traj.stepper.step(&rho);
            i += 1;
            if rho.band == 0 || i % DENSE_CHECK_INTERVAL == 0 {
                rho.check_finite()?;
                rho.check_positivity(tol)?;
            }
        }
        traj.interpolation_error = traj.profile()?.interpolation_error();
        Ok(traj)
    }

    pub fn profile(&self) -> Result<RateProfile<T>> {
        RateProfile::new(self.times.clone(), self.rate.clone(), self.survival.clone())
    }

    pub fn final_survival(&self) -> T {
        *self.survival.last().expect("non-empty")
    }

    pub fn rate_integral(&self) -> T {
        simpson(&self.rate, self.step)
    }

    pub fn error_probability_total(&self) -> T {
        simpson(&self.loss_kappa1, self.step) + simpson(&self.loss_kappa2_prime, self.step)
    }

    pub fn error_probability(&self) -> Vec<T> {
        let a = cumulative(&self.loss_kappa1, self.step);
        let b = cumulative(&self.loss_kappa2_prime, self.step);
        a.into_iter().zip(b).map(|(x, y)| x + y).collect()
    }

    /// Conditional state at `t`: whole steps from the nearest checkpoint, then
    /// one partial step.
    pub fn state_at(&self, t: T) -> Result<ConditionalDensity<T>> {
        if !(t >= T::zero()) {
            return Err(invalid("t", "must be non-negative"));
        }
        let whole = (t / self.step)
            .floor()
            .to_usize()
            .unwrap_or(0)
            .min(self.times.len() - 1);
        let cp = (whole / CHECKPOINT_INTERVAL).min(self.checkpoints.len() - 1);
        let mut rho = self.checkpoints[cp].clone();
        for _ in cp * CHECKPOINT_INTERVAL..whole {
            rho = self.stepper.step(&rho);
        }
        rho.time = self.times[whole];
        let rest = t - self.times[whole];
        if rest > T::zero() {
            let partial = DampedStepper::new(&self.params, rho.n_max(), rest);
            rho = partial.step(&rho);
            rho.time = t;
        }
        rho.check_finite()?;
        Ok(rho)
    }
}
