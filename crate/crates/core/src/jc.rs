//! Deterministic-interaction-time readout of a dual-rail qubit coupled to the
//! mechanics through a Jaynes–Cummings exchange.
//!
//! With the qubit prepared in `|1⟩` and read out after an interaction angle
//! `θ = gτ`, the mechanics is acted on by
//!
//! * `E(1) = cos(θ sqrt(b b†))`, diagonal in the number basis;
//! * `E(0) = -i b† (b b†)^{-1/2} sin(θ sqrt(b b†))`, mapping `|n⟩ → |n+1⟩`.
//!
//! Both effects `E†E` are diagonal, so the outcome statistics and the
//! conditional number distribution depend only on the input distribution.

use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::fock::{MechanicalState, NumberDistribution};
use crate::scalar::{compensated_sum, Real, C};

/// Smallest outcome probability accepted before the outcome is declared impossible.
pub const IMPOSSIBLE_OUTCOME: f64 = 1e-15;
/// Smallest cumulative history probability before repeated conditioning is refused.
pub const HISTORY_UNDERFLOW: f64 = 1e-300;

/// Interaction angle `θ = gτ`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct InteractionAngle<T>(T);

impl<T: Real> InteractionAngle<T> {
    pub fn new(theta: T) -> Result<Self> {
        if !theta.is_finite() || theta < T::zero() {
            return Err(invalid("theta", "must be finite and non-negative"));
        }
        Ok(Self(theta))
    }

    #[inline]
    pub fn value(self) -> T {
        self.0
    }

    /// `θ sqrt(n + 1)`.
    #[inline]
    fn phase(self, n: usize) -> T {
        self.0 * T::from_usize_lossy(n + 1).sqrt()
    }
}

/// Qubit readout result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Readout {
    /// Photon found in cavity 1; a phonon was created.
    Zero,
    /// Photon still in cavity 2.
    One,
}

impl Readout {
    pub fn bit(self) -> u8 {
        match self {
            Readout::Zero => 0,
            Readout::One => 1,
        }
    }
}

/// `E(x)` for a fixed angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JcMeasurementOperator<T> {
    pub theta: InteractionAngle<T>,
    pub outcome: Readout,
}

impl<T: Real> JcMeasurementOperator<T> {
    pub fn new(theta: InteractionAngle<T>, outcome: Readout) -> Self {
        Self { theta, outcome }
    }

    /// Diagonal element `⟨n|E†(x)E(x)|n⟩`.
    pub fn effect(&self, n: usize) -> T {
        let s = self.theta.phase(n);
        match self.outcome {
            Readout::One => s.cos().powi(2),
            Readout::Zero => s.sin().powi(2),
        }
    }

    /// `E(x)|ψ⟩` on the truncated space. For `x = 0` the image of the top
    /// level leaves the space and is returned as the second value (its squared norm).
    pub fn apply(&self, amplitudes: &[C<T>]) -> (Vec<C<T>>, T) {
        let dim = amplitudes.len();
        match self.outcome {
            Readout::One => (
                amplitudes
                    .iter()
                    .enumerate()
                    .map(|(n, a)| *a * self.theta.phase(n).cos())
                    .collect(),
                T::zero(),
            ),
            Readout::Zero => {
                let mut out = vec![C::new(T::zero(), T::zero()); dim];
                let minus_i = C::new(T::zero(), -T::one());
                for n in 0..dim - 1 {
                    out[n + 1] = minus_i * amplitudes[n] * self.theta.phase(n).sin();
                }
                let lost = (amplitudes[dim - 1] * self.theta.phase(dim - 1).sin()).norm_sqr();
                (out, lost)
            }
        }
    }
}

/// Result of one readout.
#[derive(Debug, Clone, PartialEq)]
pub struct JcMeasurement<T: Real> {
    pub post_state: MechanicalState<T>,
    pub probability: T,
}

/// `p(x) = ⟨ψ|E†(x)E(x)|ψ⟩` and the normalized post-measurement state.
pub fn apply_jc_measurement<T: Real>(
    state: &MechanicalState<T>,
    theta: InteractionAngle<T>,
    outcome: Readout,
) -> Result<JcMeasurement<T>> {
    let op = JcMeasurementOperator::new(theta, outcome);
    let norm = state.norm_sqr();
    let probability = compensated_sum(
        state
            .amplitudes()
            .iter()
            .enumerate()
            .map(|(n, a)| op.effect(n) * a.norm_sqr()),
    ) / norm;
    if !(probability >= T::lit(IMPOSSIBLE_OUTCOME)) {
        return Err(Error::ImpossibleOutcome {
            outcome: outcome.bit(),
            probability: probability.to_f64_lossy(),
        });
    }
    let (image, lost) = op.apply(state.amplitudes());
    let tail = state.tail_mass() + lost / norm;
    let post_state = MechanicalState::from_amplitudes(image)?
        .normalize()?
        .with_tail_mass(tail);
    Ok(JcMeasurement {
        post_state,
        probability,
    })
}

/// `p(1)(θ) = Σ cos²(θ sqrt(n+1)) P(n)` for each angle.
pub fn outcome_probability_curve<T: Real>(
    dist: &NumberDistribution<T>,
    thetas: &[T],
) -> Result<Vec<T>> {
    thetas
        .iter()
        .map(|&theta| {
            let op = JcMeasurementOperator::new(InteractionAngle::new(theta)?, Readout::One);
            Ok(compensated_sum(
                dist.probs()
                    .iter()
                    .enumerate()
                    .map(|(n, &p)| op.effect(n) * p),
            ))
        })
        .collect()
}

/// Conditional distributions along an all-`x=1` readout history.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalHistory<T: Real> {
    /// `distributions[0]` is the input; entry `k` follows the k-th readout.
    pub distributions: Vec<NumberDistribution<T>>,
    /// Probability of each readout given the previous ones.
    pub step_probabilities: Vec<T>,
    /// `p(1, 1, …, 1)`.
    pub history_probability: T,
}

fn underflow_floor<T: Real>() -> T {
    T::lit(HISTORY_UNDERFLOW).max(T::min_positive_value())
}

/// Applies `x = 1` conditioning once per angle in `thetas`.
pub fn repeated_conditional_distribution<T: Real>(
    initial: &NumberDistribution<T>,
    thetas: &[T],
) -> Result<ConditionalHistory<T>> {
    let mut distributions = Vec::with_capacity(thetas.len() + 1);
    let mut step_probabilities = Vec::with_capacity(thetas.len());
    distributions.push(initial.clone());
    let mut history = T::one();
    for (k, &theta) in thetas.iter().enumerate() {
        let op = JcMeasurementOperator::new(InteractionAngle::new(theta)?, Readout::One);
        let prev = distributions.last().expect("non-empty");
        let weights: Vec<T> = prev
            .probs()
            .iter()
            .enumerate()
            .map(|(n, &p)| op.effect(n) * p)
            .collect();
        let p1 = compensated_sum(weights.iter().copied());
        history = history * p1;
        if !(p1 >= T::lit(IMPOSSIBLE_OUTCOME)) {
            return Err(Error::ImpossibleOutcome {
                outcome: 1,
                probability: p1.to_f64_lossy(),
            });
        }
        if !(history >= underflow_floor::<T>()) {
            return Err(Error::HistoryUnderflow {
                steps: k + 1,
                probability: history.to_f64_lossy(),
            });
        }
        let tail = prev.tail_mass();
        distributions.push(NumberDistribution::from_weights(weights)?.with_tail_mass(tail));
        step_probabilities.push(p1);
    }
    Ok(ConditionalHistory {
        distributions,
        step_probabilities,
        history_probability: history,
    })
}

/// `P_N(n) = cos^{2N}(θ sqrt(n+1)) P_0(n) / p(1,…,1)` for a constant angle.
pub fn closed_form_repeated<T: Real>(
    initial: &NumberDistribution<T>,
    theta: T,
    repetitions: usize,
) -> Result<(NumberDistribution<T>, T)> {
    let theta = InteractionAngle::new(theta)?;
    let exponent = i32::try_from(repetitions).map_err(|_| invalid("repetitions", "too large"))?;
    let weights: Vec<T> = initial
        .probs()
        .iter()
        .enumerate()
        .map(|(n, &p)| theta.phase(n).cos().powi(2).powi(exponent) * p)
        .collect();
    let history = compensated_sum(weights.iter().copied());
    if !(history >= underflow_floor::<T>()) {
        return Err(Error::HistoryUnderflow {
            steps: repetitions,
            probability: history.to_f64_lossy(),
        });
    }
    Ok((
        NumberDistribution::from_weights(weights)?.with_tail_mass(initial.tail_mass()),
        history,
    ))
}

/// Gaussian width estimate `2 n̄² / (π N)` for the comb aligned with
/// `θ sqrt(n̄) = π`.
pub fn gaussian_width_estimate<T: Real>(n_bar: T, repetitions: usize) -> Result<T> {
    if !(n_bar > T::zero()) || repetitions == 0 {
        return Err(invalid("n_bar/repetitions", "need n_bar > 0 and N >= 1"));
    }
    Ok(T::lit(2.0) * n_bar * n_bar / (T::PI() * T::from_usize_lossy(repetitions)))
}

/// Angle that puts a comb maximum at `n̄`: `θ = π / sqrt(n̄)`.
pub fn aligned_angle<T: Real>(n_bar: T) -> T {
    T::PI() / n_bar.sqrt()
}

/// Draws a readout with probability `p(x)` and returns the conditioned state.
pub fn sample_jc_outcome<T: Real, R: Rng + ?Sized>(
    state: &MechanicalState<T>,
    theta: InteractionAngle<T>,
    rng: &mut R,
) -> Result<(Readout, MechanicalState<T>)> {
    let op = JcMeasurementOperator::new(theta, Readout::One);
    let norm = state.norm_sqr();
    let p1 = compensated_sum(
        state
            .amplitudes()
            .iter()
            .enumerate()
            .map(|(n, a)| op.effect(n) * a.norm_sqr()),
    ) / norm;
    let u = T::lit(rng.random::<f64>());
    let outcome = if u < p1 { Readout::One } else { Readout::Zero };
    let m = apply_jc_measurement(state, theta, outcome)?;
    Ok((outcome, m.post_state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{coherent_state, poisson_distribution, FockCutoff};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn angle(t: f64) -> InteractionAngle<f64> {
        InteractionAngle::new(t).unwrap()
    }

    fn coherent(beta: f64, n_max: usize) -> MechanicalState<f64> {
        coherent_state(C::new(beta, 0.0), FockCutoff::new(n_max).unwrap()).unwrap()
    }

    #[test]
    fn zero_angle_is_identity() {
        let s = coherent(2.0, 30);
        let m = apply_jc_measurement(&s, angle(0.0), Readout::One).unwrap();
        assert!((m.probability - 1.0).abs() < 1e-15);
        for (a, b) in m.post_state.amplitudes().iter().zip(s.amplitudes()) {
            assert!((a - b).norm() < 1e-15);
        }
    }

    #[test]
    fn vacuum_at_half_pi() {
        let vac = MechanicalState::<f64>::fock(0, FockCutoff::new(4).unwrap()).unwrap();
        assert!(matches!(
            apply_jc_measurement(&vac, angle(PI / 2.0), Readout::One),
            Err(Error::ImpossibleOutcome { outcome: 1, .. })
        ));
        let m = apply_jc_measurement(&vac, angle(PI / 2.0), Readout::Zero).unwrap();
        assert!((m.probability - 1.0).abs() < 1e-15);
        let a = m.post_state.amplitudes();
        assert!((a[1] - C::new(0.0, -1.0)).norm() < 1e-15);
    }

    #[test]
    fn x1_distribution_is_cos2_weighted() {
        let s = coherent(3.0, 40);
        let theta = PI / 6.0;
        let m = apply_jc_measurement(&s, angle(theta), Readout::One).unwrap();
        let p0 = s.number_distribution();
        let w: Vec<f64> = (0..=40)
            .map(|n| (theta * ((n + 1) as f64).sqrt()).cos().powi(2) * p0.probs()[n])
            .collect();
        let z: f64 = w.iter().sum();
        for (n, p) in m
            .post_state
            .number_distribution()
            .probs()
            .iter()
            .enumerate()
        {
            assert!((p - w[n] / z).abs() < 1e-14);
        }
        assert!((m.probability - z).abs() < 1e-14);
    }

    #[test]
    fn povm_completeness() {
        let s = coherent(3.0, 64);
        for &theta in &[0.1, PI / 6.0, 1.0, PI] {
            let p1 = apply_jc_measurement(&s, angle(theta), Readout::One)
                .unwrap()
                .probability;
            let p0 = apply_jc_measurement(&s, angle(theta), Readout::Zero)
                .unwrap()
                .probability;
            assert!((p0 + p1 - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn curve_for_fock_input_is_exact() {
        let d = NumberDistribution::<f64>::delta(5, FockCutoff::new(10).unwrap()).unwrap();
        let thetas = [0.0, 0.3, 1.7, 4.0];
        let curve = outcome_probability_curve(&d, &thetas).unwrap();
        for (t, p) in thetas.iter().zip(curve) {
            assert!((p - (t * 6f64.sqrt()).cos().powi(2)).abs() < 1e-15);
        }
    }

    #[test]
    fn curve_oscillates_about_one_half() {
        let d = poisson_distribution::<f64>(3.0, FockCutoff::new(40).unwrap()).unwrap();
        let thetas: Vec<f64> = (0..4000).map(|k| 10.0 + k as f64 * 0.01).collect();
        let curve = outcome_probability_curve(&d, &thetas).unwrap();
        let mean = curve.iter().sum::<f64>() / curve.len() as f64;
        assert!((mean - 0.5).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn iterated_matches_closed_form() {
        let d0 = poisson_distribution::<f64>(3.0, FockCutoff::new(40).unwrap()).unwrap();
        let theta = PI / 3.0;
        let hist = repeated_conditional_distribution(&d0, &[theta; 50]).unwrap();
        let (closed, p) = closed_form_repeated(&d0, theta, 50).unwrap();
        assert!(hist.distributions[50].max_abs_diff(&closed) < 1e-10);
        assert!(((hist.history_probability - p) / p).abs() < 1e-10);
        let none = repeated_conditional_distribution(&d0, &[]).unwrap();
        assert_eq!(none.distributions, vec![d0]);
    }

    #[test]
    fn fock_inputs_are_fixed_points() {
        let c = FockCutoff::new(12).unwrap();
        for k in 0..10 {
            let d = NumberDistribution::<f64>::delta(k, c).unwrap();
            let h = repeated_conditional_distribution(&d, &[0.4]).unwrap();
            assert_eq!(h.distributions[1].moments().argmax, k);
            assert!((h.distributions[1].probs()[k] - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn underflow_is_reported() {
        let d0 = poisson_distribution::<f64>(3.0, FockCutoff::new(40).unwrap()).unwrap();
        // No level within the cutoff has cos² = 1 at θ = 0.3, so every step
        // multiplies the history probability by at most cos²(0.3).
        let err = repeated_conditional_distribution(&d0, &vec![0.3; 10_000]).unwrap_err();
        assert!(matches!(err, Error::HistoryUnderflow { .. }), "{err:?}");
    }

    #[test]
    fn width_estimate() {
        assert!((gaussian_width_estimate(1.0f64, 1).unwrap() - 2.0 / PI).abs() < 1e-15);
        // W = 1 ⇒ N = 2 n̄² / π.
        let n_bar = 6.0f64;
        let n = (2.0 * n_bar * n_bar / PI).round() as usize;
        assert!((gaussian_width_estimate(n_bar, n).unwrap() - 1.0).abs() < 0.05);
        assert!(gaussian_width_estimate(0.0f64, 3).is_err());
    }

    #[test]
    fn sampler_edge_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = coherent(2.0, 30);
        for _ in 0..100 {
            assert_eq!(
                sample_jc_outcome(&s, angle(0.0), &mut rng).unwrap().0,
                Readout::One
            );
        }
        let vac = MechanicalState::<f64>::fock(0, FockCutoff::new(4).unwrap()).unwrap();
        for _ in 0..100 {
            assert_eq!(
                sample_jc_outcome(&vac, angle(PI / 2.0), &mut rng)
                    .unwrap()
                    .0,
                Readout::Zero
            );
        }
    }

    #[test]
    fn sampler_frequency_matches_probability() {
        let s = coherent(3.0, 40);
        let theta = angle(PI / 6.0);
        let p1 = apply_jc_measurement(&s, theta, Readout::One)
            .unwrap()
            .probability;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let ones = (0..n)
            .filter(|_| sample_jc_outcome(&s, theta, &mut rng).unwrap().0 == Readout::One)
            .count();
        let freq = ones as f64 / n as f64;
        let sigma = (p1 * (1.0 - p1) / n as f64).sqrt();
        assert!((freq - p1).abs() < 3.0 * sigma, "{freq} vs {p1}");
    }
}
