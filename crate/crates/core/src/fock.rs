//! Truncated Fock-space primitives for the mechanical mode.
//!
//! All constructors renormalize over the retained levels `0..=n_max` and keep
//! the probability mass that fell above the cutoff in `tail_mass`.

use num_complex::Complex;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::scalar::{compensated_sum, Real, C};

/// Default tail tolerance for coherent states.
pub const COHERENT_TAIL_TOLERANCE: f64 = 1e-8;
/// Default tail tolerance for thermal states.
pub const THERMAL_TAIL_TOLERANCE: f64 = 1e-6;

/// Highest retained phonon number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct FockCutoff {
    n_max: usize,
}

impl FockCutoff {
    pub fn new(n_max: usize) -> Result<Self> {
        if n_max < 1 {
            return Err(invalid("n_max", "must be at least 1"));
        }
        Ok(Self { n_max })
    }

    /// `ceil(n̄ + 6·sqrt(n̄ + 1))`, never below 4.
    pub fn for_mean(n_bar: f64) -> Self {
        let n = (n_bar + 6.0 * (n_bar + 1.0).sqrt()).ceil() as usize;
        Self { n_max: n.max(4) }
    }

    /// [`FockCutoff::for_mean`], raised until the Poisson tail beyond the
    /// cutoff is below `tolerance`.
    pub fn for_coherent(n_bar: f64, tolerance: f64) -> Self {
        let mut n = Self::for_mean(n_bar).n_max;
        while poisson_tail(n_bar, n) > tolerance && n < 100_000 {
            n += 1;
        }
        Self { n_max: n }
    }

    /// Smallest cutoff whose geometric tail `(N̄/(1+N̄))^(n_max+1)` is below
    /// `tolerance`, and that also satisfies `N̄ <= n_max / 4`.
    pub fn for_thermal(n_bar: f64, tolerance: f64) -> Self {
        if n_bar <= 0.0 {
            return Self { n_max: 4 };
        }
        let q = n_bar / (1.0 + n_bar);
        let n = (tolerance.ln() / q.ln()).ceil() as usize;
        let n = n.max((4.0 * n_bar).ceil() as usize).max(4);
        Self { n_max: n }
    }

    #[inline]
    pub fn n_max(&self) -> usize {
        self.n_max
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n_max + 1
    }
}

/// `Σ_{k > n_max} e^{-n̄} n̄^k / k!`, summed directly.
fn poisson_tail(n_bar: f64, n_max: usize) -> f64 {
    let mut log_w = -n_bar;
    for k in 1..=n_max + 1 {
        log_w += n_bar.ln() - (k as f64).ln();
    }
    let mut w = if n_bar > 0.0 { log_w.exp() } else { 0.0 };
    let mut tail = 0.0;
    let mut k = n_max + 1;
    while w > 0.0 && (w > 1e-18 * tail || (k as f64) < n_bar) && k < n_max + 100_000 {
        tail += w;
        k += 1;
        w *= n_bar / k as f64;
    }
    tail
}

/// Pure mechanical state in the number basis.
#[derive(Debug, Clone, PartialEq)]
pub struct MechanicalState<T: Real> {
    amplitudes: Vec<C<T>>,
    normalized: bool,
    tail_mass: T,
}

impl<T: Real> MechanicalState<T> {
    /// Wraps raw amplitudes. They are not renormalized.
    pub fn from_amplitudes(amplitudes: Vec<C<T>>) -> Result<Self> {
        if amplitudes.len() < 2 {
            return Err(invalid("amplitudes", "need at least two levels"));
        }
        if amplitudes
            .iter()
            .any(|a| !a.re.is_finite() || !a.im.is_finite())
        {
            return Err(Error::Numerical("non-finite amplitude".into()));
        }
        let norm = norm_sqr(&amplitudes);
        let normalized = (norm - T::one()).abs() <= T::lit(1e-12).max(T::EPS * T::lit(64.0));
        Ok(Self {
            amplitudes,
            normalized,
            tail_mass: T::zero(),
        })
    }

    /// Number state `|n⟩`.
    pub fn fock(n: usize, cutoff: FockCutoff) -> Result<Self> {
        if n > cutoff.n_max() {
            return Err(invalid(
                "n",
                format!("{n} exceeds n_max={}", cutoff.n_max()),
            ));
        }
        let mut amplitudes = vec![C::new(T::zero(), T::zero()); cutoff.dim()];
        amplitudes[n] = C::new(T::one(), T::zero());
        Ok(Self {
            amplitudes,
            normalized: true,
            tail_mass: T::zero(),
        })
    }

    /// Real non-negative amplitudes `sqrt(P(n))`. For dynamics that only ever
    /// depend on the number distribution this stands in for a diagonal mixed
    /// state.
    pub fn from_distribution(dist: &NumberDistribution<T>) -> Self {
        let amplitudes = dist
            .probs()
            .iter()
            .map(|&p| C::new(p.sqrt(), T::zero()))
            .collect();
        Self {
            amplitudes,
            normalized: true,
            tail_mass: dist.tail_mass(),
        }
    }

    #[inline]
    pub fn amplitudes(&self) -> &[C<T>] {
        &self.amplitudes
    }

    #[inline]
    pub fn n_max(&self) -> usize {
        self.amplitudes.len() - 1
    }

    pub fn cutoff(&self) -> FockCutoff {
        FockCutoff {
            n_max: self.n_max(),
        }
    }

    #[inline]
    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Mass discarded above the cutoff when the state was built.
    #[inline]
    pub fn tail_mass(&self) -> T {
        self.tail_mass
    }

    pub(crate) fn with_tail_mass(mut self, tail: T) -> Self {
        self.tail_mass = tail;
        self
    }

    pub fn norm_sqr(&self) -> T {
        norm_sqr(&self.amplitudes)
    }

    pub fn normalize(mut self) -> Result<Self> {
        let norm = self.norm_sqr();
        if !(norm > T::zero()) || !norm.is_finite() {
            return Err(Error::Numerical(format!(
                "cannot normalize state with squared norm {norm:e}"
            )));
        }
        let s = T::one() / norm.sqrt();
        for a in &mut self.amplitudes {
            *a = *a * s;
        }
        self.normalized = true;
        Ok(self)
    }

    /// `|β_n|² / Σ|β_m|²`.
    pub fn number_distribution(&self) -> NumberDistribution<T> {
        let norm = self.norm_sqr();
        let probs = self
            .amplitudes
            .iter()
            .map(|a| a.norm_sqr() / norm)
            .collect();
        NumberDistribution {
            probs,
            tail_mass: self.tail_mass,
        }
    }

    /// Multiplies `β_n` by `exp(i φ_n)`.
    pub fn with_phases(&self, phases: &[T]) -> Self {
        let amplitudes = self
            .amplitudes
            .iter()
            .zip(phases.iter().chain(std::iter::repeat(&T::zero())))
            .map(|(a, &phi)| *a * Complex::from_polar(T::one(), phi))
            .collect();
        Self {
            amplitudes,
            normalized: self.normalized,
            tail_mass: self.tail_mass,
        }
    }

    /// Dense density matrix `|ψ⟩⟨ψ|`, row-major.
    pub fn density_matrix(&self) -> Vec<C<T>> {
        let d = self.amplitudes.len();
        let mut rho = Vec::with_capacity(d * d);
        for a in &self.amplitudes {
            for b in &self.amplitudes {
                rho.push(*a * b.conj());
            }
        }
        rho
    }
}

fn norm_sqr<T: Real>(amps: &[C<T>]) -> T {
    compensated_sum(amps.iter().map(|a| a.norm_sqr()))
}

/// Probability distribution over phonon number.
#[derive(Debug, Clone, PartialEq)]
pub struct NumberDistribution<T: Real> {
    probs: Vec<T>,
    tail_mass: T,
}

impl<T: Real> NumberDistribution<T> {
    /// Builds a distribution from non-negative weights, renormalizing them.
    pub fn from_weights(weights: Vec<T>) -> Result<Self> {
        if weights.len() < 2 {
            return Err(invalid("weights", "need at least two levels"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < T::zero()) {
            return Err(invalid("weights", "must be finite and non-negative"));
        }
        let total = compensated_sum(weights.iter().copied());
        if !(total > T::zero()) {
            return Err(Error::Numerical("distribution has zero mass".into()));
        }
        Ok(Self {
            probs: weights.into_iter().map(|w| w / total).collect(),
            tail_mass: T::zero(),
        })
    }

    /// Point mass at `n`.
    pub fn delta(n: usize, cutoff: FockCutoff) -> Result<Self> {
        if n > cutoff.n_max() {
            return Err(invalid(
                "n",
                format!("{n} exceeds n_max={}", cutoff.n_max()),
            ));
        }
        let mut probs = vec![T::zero(); cutoff.dim()];
        probs[n] = T::one();
        Ok(Self {
            probs,
            tail_mass: T::zero(),
        })
    }

    #[inline]
    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    #[inline]
    pub fn n_max(&self) -> usize {
        self.probs.len() - 1
    }

    #[inline]
    pub fn tail_mass(&self) -> T {
        self.tail_mass
    }

    pub(crate) fn with_tail_mass(mut self, tail: T) -> Self {
        self.tail_mass = tail;
        self
    }

    /// Probability held in the top two retained levels, `n > n_max - 2`.
    pub fn edge_mass(&self) -> T {
        let start = self.probs.len().saturating_sub(2);
        compensated_sum(self.probs[start..].iter().copied())
    }

    pub fn total(&self) -> T {
        compensated_sum(self.probs.iter().copied())
    }

    pub fn moments(&self) -> NumberMoments<T> {
        number_moments(self)
    }

    /// Largest absolute per-level difference; the shorter vector is padded
    /// with zeros.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        let n = self.probs.len().max(other.probs.len());
        (0..n)
            .map(|i| {
                let a = self.probs.get(i).copied().unwrap_or_else(T::zero);
                let b = other.probs.get(i).copied().unwrap_or_else(T::zero);
                (a - b).abs()
            })
            .fold(T::zero(), T::max)
    }
}

/// Summary statistics of a [`NumberDistribution`]. Entropy is in nats.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NumberMoments<T> {
    pub mean: T,
    pub variance: T,
    pub entropy: T,
    pub argmax: usize,
    pub max_prob: T,
}

pub fn number_moments<T: Real>(dist: &NumberDistribution<T>) -> NumberMoments<T> {
    let p = dist.probs();
    let mean = compensated_sum(
        p.iter()
            .enumerate()
            .map(|(n, &w)| T::from_usize_lossy(n) * w),
    );
    let variance = compensated_sum(p.iter().enumerate().map(|(n, &w)| {
        let d = T::from_usize_lossy(n) - mean;
        d * d * w
    }));
    let entropy = -compensated_sum(p.iter().filter(|&&w| w > T::zero()).map(|&w| w * w.ln()));
    let (argmax, max_prob) =
        p.iter()
            .copied()
            .enumerate()
            .fold((0, T::neg_infinity()), |best, (n, w)| {
                if w > best.1 {
                    (n, w)
                } else {
                    best
                }
            });
    NumberMoments {
        mean,
        variance: variance.max(T::zero()),
        entropy: entropy.max(T::zero()),
        argmax,
        max_prob,
    }
}

fn check_tail<T: Real>(cutoff: FockCutoff, tail: T, tolerance: f64) -> Result<()> {
    let tail = tail.to_f64_lossy();
    if tail > tolerance {
        return Err(Error::Truncation {
            n_max: cutoff.n_max(),
            tail,
            tolerance,
        });
    }
    Ok(())
}

/// Coherent state `e^{-|β|²/2} Σ βⁿ/√n! |n⟩`, renormalized over the cutoff.
pub fn coherent_state<T: Real>(beta: C<T>, cutoff: FockCutoff) -> Result<MechanicalState<T>> {
    coherent_state_with_tolerance(beta, cutoff, COHERENT_TAIL_TOLERANCE)
}

pub fn coherent_state_with_tolerance<T: Real>(
    beta: C<T>,
    cutoff: FockCutoff,
    tolerance: f64,
) -> Result<MechanicalState<T>> {
    let mean = beta.norm_sqr();
    if !mean.is_finite() {
        return Err(invalid("beta", "must be finite"));
    }
    if mean > T::from_usize_lossy(cutoff.n_max()) / T::lit(3.0) {
        return Err(invalid(
            "beta",
            format!(
                "|beta|^2 = {mean} exceeds n_max/3 for n_max={}",
                cutoff.n_max()
            ),
        ));
    }
    let mut amplitudes = Vec::with_capacity(cutoff.dim());
    let mut a = C::new((-mean / T::lit(2.0)).exp(), T::zero());
    amplitudes.push(a);
    for n in 1..=cutoff.n_max() {
        a = a * beta / T::from_usize_lossy(n).sqrt();
        amplitudes.push(a);
    }
    // Tail: keep the recursion going past the cutoff instead of 1 - Σ.
    let mut tail = T::zero();
    let mut n = cutoff.n_max() + 1;
    loop {
        a = a * beta / T::from_usize_lossy(n).sqrt();
        let w = a.norm_sqr();
        tail = tail + w;
        if (w <= T::EPS * tail.max(T::min_positive_value()) && T::from_usize_lossy(n) > mean)
            || n > cutoff.n_max() + 10_000
            || w == T::zero()
        {
            break;
        }
        n += 1;
    }
    check_tail(cutoff, tail, tolerance)?;
    Ok(MechanicalState::from_amplitudes(amplitudes)?
        .normalize()?
        .with_tail_mass(tail))
}

/// Poisson distribution `e^{-|β|²} |β|^{2n} / n!`.
pub fn poisson_distribution<T: Real>(
    beta_abs: T,
    cutoff: FockCutoff,
) -> Result<NumberDistribution<T>> {
    let state = coherent_state(C::new(beta_abs.abs(), T::zero()), cutoff)?;
    Ok(state.number_distribution())
}

/// Bose–Einstein distribution `N̄ⁿ / (1+N̄)^{n+1}`.
pub fn thermal_distribution<T: Real>(
    n_bar: T,
    cutoff: FockCutoff,
) -> Result<NumberDistribution<T>> {
    thermal_distribution_with_tolerance(n_bar, cutoff, THERMAL_TAIL_TOLERANCE)
}

pub fn thermal_distribution_with_tolerance<T: Real>(
    n_bar: T,
    cutoff: FockCutoff,
    tolerance: f64,
) -> Result<NumberDistribution<T>> {
    if !(n_bar >= T::zero()) || !n_bar.is_finite() {
        return Err(invalid("n_bar", "must be finite and non-negative"));
    }
    if n_bar > T::from_usize_lossy(cutoff.n_max()) / T::lit(4.0) {
        return Err(invalid(
            "n_bar",
            format!("{n_bar} exceeds n_max/4 for n_max={}", cutoff.n_max()),
        ));
    }
    let q = n_bar / (T::one() + n_bar);
    let mut w = T::one() / (T::one() + n_bar);
    let mut weights = Vec::with_capacity(cutoff.dim());
    for _ in 0..cutoff.dim() {
        weights.push(w);
        w = w * q;
    }
    let tail = q.powi(cutoff.dim() as i32);
    check_tail(cutoff, tail, tolerance)?;
    Ok(NumberDistribution::from_weights(weights)?.with_tail_mass(tail))
}
