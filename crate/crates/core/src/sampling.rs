//! Detection-time sampling from a no-count rate profile.
//!
//! A detection time is drawn from the rate restricted to a window that opens
//! just after the interference dip of `R(t)` and closes once the rate has
//! decayed to a small fraction of its peak. Inside the window the density is
//! the piecewise-linear interpolant of `R`, and the inverse CDF is solved
//! exactly on each segment.

use rand::Rng;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::scalar::Real;

/// No-count detection rate on a uniform grid starting at `t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateProfile<T: Real> {
    t: Vec<T>,
    rate: Vec<T>,
    survival: Vec<T>,
}

impl<T: Real> RateProfile<T> {
    pub fn new(t: Vec<T>, rate: Vec<T>, survival: Vec<T>) -> Result<Self> {
        if t.len() < 3 || rate.len() != t.len() || survival.len() != t.len() {
            return Err(invalid("profile", "need at least 3 matching samples"));
        }
        if t[0] != T::zero() {
            return Err(invalid("profile", "time grid must start at 0"));
        }
        if t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("profile", "time grid must be strictly increasing"));
        }
        if rate.iter().any(|r| !r.is_finite() || *r < T::zero()) {
            return Err(invalid("profile", "rates must be finite and non-negative"));
        }
        let slack = T::lit(1e-12);
        if survival.windows(2).any(|w| w[1] > w[0] + slack) {
            return Err(invalid("profile", "survival must be non-increasing"));
        }
        Ok(Self { t, rate, survival })
    }

    #[inline]
    pub fn times(&self) -> &[T] {
        &self.t
    }

    #[inline]
    pub fn rates(&self) -> &[T] {
        &self.rate
    }

    #[inline]
    pub fn survival(&self) -> &[T] {
        &self.survival
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn end(&self) -> T {
        *self.t.last().expect("non-empty")
    }

    pub fn max_rate(&self) -> T {
        self.rate.iter().copied().fold(T::zero(), T::max)
    }

    /// Linear interpolation of `R`; zero outside the grid.
    pub fn rate_at(&self, t: T) -> T {
        interp(&self.t, &self.rate, t)
    }

    pub fn survival_at(&self, t: T) -> T {
        interp(&self.t, &self.survival, t)
    }

    /// Largest midpoint error of linear interpolation, estimated from second
    /// differences and expressed relative to the peak rate.
    pub fn interpolation_error(&self) -> T {
        let max = self.max_rate();
        if !(max > T::zero()) {
            return T::zero();
        }
        let eighth = T::lit(0.125);
        self.rate
            .windows(3)
            .map(|w| (w[0] - w[1] - w[1] + w[2]).abs() * eighth)
            .fold(T::zero(), T::max)
            / max
    }

    /// Trapezoid integral of `R` over `[a, b]`.
    pub fn integrate(&self, a: T, b: T) -> T {
        let knots = knots_between(&self.t, &self.rate, a, b);
        let mut acc = T::zero();
        for w in knots.windows(2) {
            acc = acc + (w[1].0 - w[0].0) * (w[0].1 + w[1].1) * T::lit(0.5);
        }
        acc
    }
}

fn interp<T: Real>(xs: &[T], ys: &[T], x: T) -> T {
    if x < xs[0] || x > xs[xs.len() - 1] {
        return T::zero();
    }
    let i = match xs.binary_search_by(|v| v.partial_cmp(&x).expect("finite grid")) {
        Ok(i) => return ys[i],
        Err(i) => i,
    };
    let (x0, x1) = (xs[i - 1], xs[i]);
    let s = (x - x0) / (x1 - x0);
    ys[i - 1] + (ys[i] - ys[i - 1]) * s
}

/// Grid knots of the interpolant restricted to `[a, b]`, endpoints included.
fn knots_between<T: Real>(xs: &[T], ys: &[T], a: T, b: T) -> Vec<(T, T)> {
    let mut out = vec![(a, interp(xs, ys, a))];
    for (x, y) in xs.iter().zip(ys) {
        if *x > a && *x < b {
            out.push((*x, *y));
        }
    }
    out.push((b, interp(xs, ys, b)));
    out
}

/// Quantified "just after the dip" and "nearly zero".
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WindowRule<T> {
    /// Offset added to the dip time.
    pub delta: T,
    /// Window closes where `R < epsilon · max R`.
    pub epsilon: T,
}

impl<T: Real> WindowRule<T> {
    /// `delta = 0.05 / κ₂`, `epsilon = 1e-3`.
    pub fn for_kappa2(kappa2: T) -> Self {
        Self {
            delta: T::lit(0.05) / kappa2,
            epsilon: T::lit(1e-3),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SamplingWindow<T> {
    pub t_start: T,
    pub t_end: T,
}

impl<T: Real> SamplingWindow<T> {
    pub fn new(t_start: T, t_end: T) -> Result<Self> {
        if !(t_start > T::zero()) || !(t_end > t_start) {
            return Err(invalid("window", "need 0 < t_start < t_end"));
        }
        Ok(Self { t_start, t_end })
    }
}

/// First interior local minimum of `R`, refined by a parabola through the
/// neighbouring samples. Minima in the tail, where `R` is already below
/// `epsilon · max R`, are ignored.
pub fn first_interior_minimum<T: Real>(profile: &RateProfile<T>, epsilon: T) -> Option<T> {
    let r = profile.rates();
    let t = profile.times();
    let floor = epsilon * profile.max_rate();
    // Past the last sample above the floor only the decaying tail remains.
    let last_above = r.iter().rposition(|&x| x >= floor)?;
    for i in 1..r.len().min(last_above + 1).min(r.len() - 1) {
        if r[i] < r[i - 1] && r[i] <= r[i + 1] {
            let h = t[i + 1] - t[i];
            let curvature = r[i - 1] - r[i] - r[i] + r[i + 1];
            let mut offset = if curvature > T::zero() {
                h * (r[i - 1] - r[i + 1]) / (T::lit(2.0) * curvature)
            } else {
                T::zero()
            };
            offset = offset.max(-h).min(h);
            return Some(t[i] + offset);
        }
    }
    None
}

/// Applies the window rule. Fails with [`Error::NoDip`] when the rate has no
/// interior minimum.
pub fn find_window<T: Real>(
    profile: &RateProfile<T>,
    rule: &WindowRule<T>,
) -> Result<SamplingWindow<T>> {
    let dip = first_interior_minimum(profile, rule.epsilon).ok_or(Error::NoDip)?;
    window_from(profile, rule, dip + rule.delta)
}

/// [`find_window`], falling back to the whole profile when there is no dip.
/// The flag reports whether the fallback was taken.
pub fn find_window_or_full<T: Real>(
    profile: &RateProfile<T>,
    rule: &WindowRule<T>,
) -> Result<(SamplingWindow<T>, bool)> {
    match find_window(profile, rule) {
        Ok(w) => Ok((w, false)),
        Err(Error::NoDip) => Ok((window_from(profile, rule, profile.times()[1])?, true)),
        Err(e) => Err(e),
    }
}

/// `t_end` is the first downward crossing of `ε · max R` after `t_start`. A
/// rate that is still below the floor at `t_start` (an exact zero at the dip)
/// has to rise through it first.
fn window_from<T: Real>(
    profile: &RateProfile<T>,
    rule: &WindowRule<T>,
    t_start: T,
) -> Result<SamplingWindow<T>> {
    let t = profile.times();
    let r = profile.rates();
    if !(t_start < profile.end()) {
        return Err(Error::ZeroMass { mass: 0.0 });
    }
    let floor = rule.epsilon * profile.max_rate();
    let mut t_end = profile.end();
    let mut risen = false;
    for i in 1..t.len() {
        if t[i] <= t_start {
            continue;
        }
        if r[i] >= floor {
            risen = true;
        } else if risen {
            // Linear crossing between the last sample above the floor and this one.
            let (t0, r0) = (t[i - 1], r[i - 1]);
            let cross = if r0 > floor && t0 >= t_start {
                t0 + (t[i] - t0) * (r0 - floor) / (r0 - r[i])
            } else {
                t[i]
            };
            t_end = cross.max(t_start + (t[i] - t[i - 1]) * T::lit(1e-3));
            break;
        }
    }
    SamplingWindow::new(t_start, t_end)
}

/// Inverse-CDF sampler for the piecewise-linear rate restricted to a window.
#[derive(Debug, Clone)]
pub struct WindowedSampler<T: Real> {
    knots: Vec<(T, T)>,
    cumulative: Vec<T>,
    mass: T,
}

impl<T: Real> WindowedSampler<T> {
    pub fn new(profile: &RateProfile<T>, window: &SamplingWindow<T>) -> Result<Self> {
        let knots = knots_between(
            profile.times(),
            profile.rates(),
            window.t_start,
            window.t_end,
        );
        let mut cumulative = Vec::with_capacity(knots.len());
        let mut acc = T::zero();
        cumulative.push(acc);
        for w in knots.windows(2) {
            acc = acc + (w[1].0 - w[0].0) * (w[0].1 + w[1].1) * T::lit(0.5);
            cumulative.push(acc);
        }
        if !(acc > T::zero()) || !acc.is_finite() {
            return Err(Error::ZeroMass {
                mass: acc.to_f64_lossy(),
            });
        }
        Ok(Self {
            knots,
            cumulative,
            mass: acc,
        })
    }

    /// `∫_window R dt`.
    pub fn mass(&self) -> T {
        self.mass
    }

    /// Normalized CDF of the windowed density at `t`.
    pub fn cdf(&self, t: T) -> T {
        if t <= self.knots[0].0 {
            return T::zero();
        }
        if t >= self.knots[self.knots.len() - 1].0 {
            return T::one();
        }
        let k = self.knots.partition_point(|(x, _)| *x <= t) - 1;
        let (t0, r0) = self.knots[k];
        let (t1, r1) = self.knots[k + 1];
        let s = t - t0;
        let slope = (r1 - r0) / (t1 - t0);
        (self.cumulative[k] + r0 * s + slope * s * s * T::lit(0.5)) / self.mass
    }

    /// Maps `u ∈ [0, 1)` to a time.
    pub fn quantile(&self, u: T) -> T {
        let target = u.max(T::zero()).min(T::one()) * self.mass;
        let k = (self.cumulative.partition_point(|c| *c <= target))
            .saturating_sub(1)
            .min(self.knots.len() - 2);
        let (t0, r0) = self.knots[k];
        let (t1, r1) = self.knots[k + 1];
        let width = t1 - t0;
        let rem = target - self.cumulative[k];
        // r0·s + (r1 - r0)·s²/(2w) = rem, solved in the cancellation-free form.
        let a = (r1 - r0) / (T::lit(2.0) * width);
        let disc = (r0 * r0 + T::lit(4.0) * a * rem).max(T::zero());
        let denom = r0 + disc.sqrt();
        let s = if denom > T::zero() {
            T::lit(2.0) * rem / denom
        } else {
            T::zero()
        };
        t0 + s.max(T::zero()).min(width)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        self.quantile(T::lit(rng.random::<f64>()))
    }
}

/// One detection time drawn from the windowed, renormalized rate.
pub fn sample_detection_time<T: Real, R: Rng + ?Sized>(
    profile: &RateProfile<T>,
    window: &SamplingWindow<T>,
    rng: &mut R,
) -> Result<T> {
    Ok(WindowedSampler::new(profile, window)?.sample(rng))
}

/// Window and mass bookkeeping for one measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WindowDiagnostics {
    pub t_start: f64,
    pub t_end: f64,
    pub in_window_mass: f64,
    pub discarded_fraction: f64,
    pub fallback_full_support: bool,
}

impl WindowDiagnostics {
    pub fn new<T: Real>(window: &SamplingWindow<T>, mass: T, fallback: bool) -> Self {
        let m = mass.to_f64_lossy();
        Self {
            t_start: window.t_start.to_f64_lossy(),
            t_end: window.t_end.to_f64_lossy(),
            in_window_mass: m,
            discarded_fraction: (1.0 - m).max(0.0),
            fallback_full_support: fallback,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn profile_from(f: impl Fn(f64) -> f64, h: f64, n: usize) -> RateProfile<f64> {
        let t: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
        let r: Vec<f64> = t.iter().map(|&x| f(x)).collect();
        let mut s = Vec::with_capacity(n);
        let mut acc = 1.0;
        s.push(acc);
        for i in 1..n {
            acc -= 0.5 * h * (r[i] + r[i - 1]);
            s.push(acc.max(0.0));
        }
        RateProfile::new(t, r, s).unwrap()
    }

    #[test]
    fn flat_rate_samples_uniformly() {
        let p = profile_from(|_| 0.01, 0.01, 2001);
        let w = SamplingWindow::new(2.0, 12.0).unwrap();
        let sampler = WindowedSampler::new(&p, &w).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut xs: Vec<f64> = (0..100_000).map(|_| sampler.sample(&mut rng)).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = xs.len() as f64;
        let ks = xs
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let f = (x - 2.0) / 10.0;
                (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
            })
            .fold(0.0, f64::max);
        // p > 0.01 for the one-sample KS test at n = 1e5 needs D < 1.63/sqrt(n).
        assert!(ks < 1.63 / n.sqrt(), "KS = {ks}");
    }

    #[test]
    fn quantile_inverts_cdf() {
        let p = profile_from(|t| t * (-t).exp() + 0.1 * (3.0 * t).sin().abs(), 0.013, 900);
        let w = SamplingWindow::new(0.5, 9.0).unwrap();
        let s = WindowedSampler::new(&p, &w).unwrap();
        for k in 0..=100 {
            let u = k as f64 / 100.0;
            assert!((s.cdf(s.quantile(u)) - u).abs() < 1e-12);
        }
    }

    #[test]
    fn monotone_profile_has_no_dip() {
        let p = profile_from(|t| (-2.0 * t).exp(), 0.01, 1000);
        let rule = WindowRule::for_kappa2(1.0);
        assert!(matches!(find_window(&p, &rule), Err(Error::NoDip)));
        let (w, fallback) = find_window_or_full(&p, &rule).unwrap();
        assert!(fallback);
        assert!(w.t_start > 0.0 && w.t_end > w.t_start);
    }

    #[test]
    fn window_brackets_dip_and_tail() {
        // (t - 1)² e^{-t}: dip at t = 1, peak at t = 3.
        let f = |t: f64| (t - 1.0).powi(2) * (-t).exp();
        let p = profile_from(f, 0.01, 4001);
        let rule = WindowRule::for_kappa2(1.0);
        let w = find_window(&p, &rule).unwrap();
        assert!((w.t_start - 1.05).abs() < 1e-4, "{}", w.t_start);
        let floor = 1e-3 * p.max_rate();
        assert!((f(w.t_end) - floor).abs() < 1e-6);
        assert!(w.t_end > 3.0);
    }

    #[test]
    fn exact_zero_dip_still_opens_the_window() {
        // Quadratic rise from an exact zero stays below the floor just after the dip.
        let f = |t: f64| 0.01 * (t - 1.0).powi(2) * (-t / 4.0).exp() + (-20.0 * t).exp();
        let p = profile_from(f, 0.01, 8001);
        let w = find_window(&p, &WindowRule::for_kappa2(1.0)).unwrap();
        assert!(f(w.t_start) < 1e-3 * p.max_rate());
        assert!(w.t_end > 20.0, "{}", w.t_end);
    }

    #[test]
    fn zero_mass_is_an_error() {
        let p = profile_from(|t| if t < 1.0 { 1.0 - t } else { 0.0 }, 0.01, 500);
        let w = SamplingWindow::new(2.0, 4.0).unwrap();
        assert!(matches!(
            WindowedSampler::new(&p, &w),
            Err(Error::ZeroMass { .. })
        ));
    }

    #[test]
    fn bad_profiles_rejected() {
        assert!(RateProfile::new(vec![0.0, 1.0, 1.0], vec![0.0; 3], vec![1.0; 3]).is_err());
        assert!(RateProfile::new(vec![0.0, 1.0, 2.0], vec![0.0, -1.0, 0.0], vec![1.0; 3]).is_err());
        assert!(RateProfile::new(vec![0.0, 1.0, 2.0], vec![0.0; 3], vec![0.5, 0.6, 0.7]).is_err());
    }

    #[test]
    fn same_seed_same_sequence() {
        let p = profile_from(|t| (t - 1.0).powi(2) * (-t).exp(), 0.01, 3000);
        let w = find_window(&p, &WindowRule::for_kappa2(1.0)).unwrap();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50)
                .map(|_| sample_detection_time(&p, &w, &mut rng).unwrap().to_bits())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(9), draw(9));
        assert_ne!(draw(9), draw(10));
    }
}
