//! Wigner quasi-probability from a number-basis state.
//!
//! Convention: `x = (b + b†)/√2`, `p = (b - b†)/(i√2)`, `∬ W dx dp = 1`, so the
//! vacuum has `W(0,0) = 1/π`.
//!
//! The kernel of `|m⟩⟨n|` (m ≥ n) is
//! `(-1)ⁿ/π · sqrt(n!/m!) · (2α*)^{m-n} · e^{-2|α|²} · L_n^{(m-n)}(4|α|²)` with
//! `α = (x + ip)/√2`. It is evaluated through the three-term Laguerre
//! recurrence in normalized form, which never forms a factorial.

use serde::Serialize;

use crate::error::{invalid, Result};
use crate::fock::MechanicalState;
use crate::scalar::{compensated_sum, Real, C};

pub const WIGNER_CONVENTION: &str =
    "x=(b+b^dagger)/sqrt(2); p=(b-b^dagger)/(i*sqrt(2)); integral W dx dp = 1; W_vacuum(0,0)=1/pi";

/// Number-basis density matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix<T: Real> {
    dim: usize,
    rho: Vec<C<T>>,
}

impl<T: Real> DensityMatrix<T> {
    pub fn new(dim: usize, rho: Vec<C<T>>) -> Result<Self> {
        if rho.len() != dim * dim || dim < 1 {
            return Err(invalid("rho", format!("expected {dim}x{dim} entries")));
        }
        Ok(Self { dim, rho })
    }

    pub fn from_state(state: &MechanicalState<T>) -> Self {
        let norm = state.norm_sqr();
        let mut rho = state.density_matrix();
        for r in &mut rho {
            *r = *r / norm;
        }
        Self {
            dim: state.amplitudes().len(),
            rho,
        }
    }

    /// Diagonal density matrix from occupation probabilities.
    pub fn diagonal(probs: &[T]) -> Self {
        let dim = probs.len();
        let mut rho = vec![C::new(T::zero(), T::zero()); dim * dim];
        for (n, &p) in probs.iter().enumerate() {
            rho[n * dim + n] = C::new(p, T::zero());
        }
        Self { dim, rho }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, m: usize, n: usize) -> C<T> {
        self.rho[m * self.dim + n]
    }

    pub fn trace(&self) -> T {
        compensated_sum((0..self.dim).map(|n| self.get(n, n).re))
    }

    pub fn populations(&self) -> Vec<T> {
        (0..self.dim).map(|n| self.get(n, n).re).collect()
    }

    fn max_nonzero_level(&self) -> usize {
        (0..self.dim)
            .rev()
            .find(|&n| self.get(n, n).re > T::zero())
            .unwrap_or(0)
    }
}

/// Rectangular phase-space grid request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec<T> {
    pub x_min: T,
    pub x_max: T,
    pub p_min: T,
    pub p_max: T,
    pub nx: usize,
    pub np: usize,
}

impl<T: Real> GridSpec<T> {
    pub fn square(half_width: T, points: usize) -> Self {
        Self {
            x_min: -half_width,
            x_max: half_width,
            p_min: -half_width,
            p_max: half_width,
            nx: points,
            np: points,
        }
    }

    /// Square grid wide enough for a state of mean phonon number `n_bar`.
    pub fn for_mean(n_bar: T, points: usize) -> Self {
        let half = T::lit(2.5) * (n_bar + T::one()).sqrt() + T::lit(1.5);
        Self::square(half, points)
    }

    fn axis(min: T, max: T, n: usize) -> Vec<T> {
        if n == 1 {
            return vec![(min + max) / T::lit(2.0)];
        }
        let step = (max - min) / T::from_usize_lossy(n - 1);
        (0..n)
            .map(|i| min + step * T::from_usize_lossy(i))
            .collect()
    }
}

/// Wigner function sampled on a grid; `w[ix * p.len() + ip]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSpaceGrid<T: Real> {
    pub x: Vec<T>,
    pub p: Vec<T>,
    pub w: Vec<T>,
    pub warnings: Vec<String>,
}

impl<T: Real> PhaseSpaceGrid<T> {
    #[inline]
    pub fn at(&self, ix: usize, ip: usize) -> T {
        self.w[ix * self.p.len() + ip]
    }

    pub fn convention(&self) -> &'static str {
        WIGNER_CONVENTION
    }

    /// Trapezoid estimate of `∬ W dx dp`.
    pub fn integral(&self) -> T {
        let wx = trapezoid_weights(&self.x);
        let wp = trapezoid_weights(&self.p);
        let mut terms = Vec::with_capacity(self.w.len());
        for (ix, &a) in wx.iter().enumerate() {
            for (ip, &b) in wp.iter().enumerate() {
                terms.push(a * b * self.at(ix, ip));
            }
        }
        compensated_sum(terms)
    }

    /// `∫ W dp` at every x.
    pub fn x_marginal(&self) -> Vec<T> {
        let wp = trapezoid_weights(&self.p);
        (0..self.x.len())
            .map(|ix| compensated_sum(wp.iter().enumerate().map(|(ip, &b)| b * self.at(ix, ip))))
            .collect()
    }
}

fn trapezoid_weights<T: Real>(axis: &[T]) -> Vec<T> {
    let n = axis.len();
    if n < 2 {
        return vec![T::one(); n];
    }
    let half = T::lit(0.5);
    (0..n)
        .map(|i| {
            let left = if i > 0 {
                axis[i] - axis[i - 1]
            } else {
                T::zero()
            };
            let right = if i + 1 < n {
                axis[i + 1] - axis[i]
            } else {
                T::zero()
            };
            half * (left + right)
        })
        .collect()
}

/// Wigner function of `rho` at one phase-space point.
pub fn wigner_at<T: Real>(rho: &DensityMatrix<T>, x: T, p: T) -> T {
    let dim = rho.max_nonzero_level() + 1;
    let mut scratch = vec![C::new(T::zero(), T::zero()); dim];
    wigner_point(rho, dim, x, p, &mut scratch)
}

fn wigner_point<T: Real>(rho: &DensityMatrix<T>, dim: usize, x: T, p: T, wl: &mut [C<T>]) -> T {
    let two = T::lit(2.0);
    let a = C::new(x, p) / two.sqrt();
    let a2 = a * two;
    let a2c = a2.conj();
    wl[0] = C::new((-(x * x + p * p)).exp() / T::PI(), T::zero());
    let mut acc = rho.get(0, 0).re * wl[0].re;
    let sqrt: Vec<T> = (0..dim).map(|k| T::from_usize_lossy(k).sqrt()).collect();
    for n in 1..dim {
        wl[n] = a2 * wl[n - 1] / sqrt[n];
        acc = acc + two * (rho.get(0, n) * wl[n]).re;
    }
    for m in 1..dim {
        let mut temp = wl[m];
        wl[m] = (a2c * temp - wl[m - 1] * sqrt[m]) / sqrt[m];
        acc = acc + (rho.get(m, m) * wl[m]).re;
        for n in (m + 1)..dim {
            let next = (a2 * wl[n - 1] - temp * sqrt[m]) / sqrt[n];
            temp = wl[n];
            wl[n] = next;
            acc = acc + two * (rho.get(m, n) * wl[n]).re;
        }
    }
    acc
}

/// Samples the Wigner function of `rho` over `spec`. Grids that are narrower
/// than `4·sqrt(n̄+1)` or coarser than the interference fringes of the highest
/// occupied level produce warnings, not errors.
pub fn wigner_transform<T: Real>(
    rho: &DensityMatrix<T>,
    spec: &GridSpec<T>,
) -> Result<PhaseSpaceGrid<T>> {
    if spec.nx == 0 || spec.np == 0 || !(spec.x_max >= spec.x_min) || !(spec.p_max >= spec.p_min) {
        return Err(invalid("grid", "empty or inverted grid"));
    }
    let x = GridSpec::axis(spec.x_min, spec.x_max, spec.nx);
    let p = GridSpec::axis(spec.p_min, spec.p_max, spec.np);

    let mut warnings = Vec::new();
    let pops = rho.populations();
    let trace = rho.trace();
    let mean = compensated_sum(
        pops.iter()
            .enumerate()
            .map(|(n, &w)| T::from_usize_lossy(n) * w),
    ) / trace;
    let needed = T::lit(4.0) * (mean + T::one()).sqrt();
    if spec.x_max - spec.x_min < needed || spec.p_max - spec.p_min < needed {
        warnings.push(format!(
            "grid span below 4*sqrt(n_bar+1) = {:.3}",
            needed.to_f64_lossy()
        ));
    }
    let top = T::from_usize_lossy(rho.max_nonzero_level());
    let fringe = T::PI() / (T::lit(2.0) * (T::lit(2.0) * top + T::one()).sqrt());
    let dx = if spec.nx > 1 { x[1] - x[0] } else { T::zero() };
    let dp = if spec.np > 1 { p[1] - p[0] } else { T::zero() };
    if dx > fringe || dp > fringe {
        warnings.push(format!(
            "grid spacing coarser than fringe scale {:.3}",
            fringe.to_f64_lossy()
        ));
    }

    let dim = rho.max_nonzero_level() + 1;
    let mut scratch = vec![C::new(T::zero(), T::zero()); dim];
    let mut w = Vec::with_capacity(x.len() * p.len());
    for &xi in &x {
        for &pi in &p {
            w.push(wigner_point(rho, dim, xi, pi, &mut scratch));
        }
    }
    Ok(PhaseSpaceGrid { x, p, w, warnings })
}

/// `W(0,0)·π = Σ (-1)ⁿ P(n)`.
pub fn parity<T: Real>(probs: &[T]) -> T {
    compensated_sum(
        probs
            .iter()
            .enumerate()
            .map(|(n, &w)| if n % 2 == 0 { w } else { -w }),
    )
}
