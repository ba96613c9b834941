//! Independent oracles built from first principles in the full tensor space
//! `source ⊗ a1 ⊗ a2 ⊗ mechanics`, photon modes truncated at one quantum.
#![allow(dead_code)]

use num_complex::Complex64 as C64;
use phonon_collapse::Params;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Sparse complex operator as a triplet list.
#[derive(Clone, Debug)]
pub struct Sparse {
    pub dim: usize,
    pub entries: Vec<(usize, usize, C64)>,
}

impl Sparse {
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            entries: Vec::new(),
        }
    }

    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        let mut out = vec![ZERO; self.dim];
        for &(i, j, x) in &self.entries {
            out[i] += x * v[j];
        }
        out
    }

    pub fn adjoint(&self) -> Self {
        Self {
            dim: self.dim,
            entries: self
                .entries
                .iter()
                .map(|&(i, j, x)| (j, i, x.conj()))
                .collect(),
        }
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            dim: self.dim,
            entries: self
                .entries
                .iter()
                .map(|&(i, j, x)| (i, j, s * x))
                .collect(),
        }
    }

    pub fn plus(&self, other: &Self) -> Self {
        let mut entries = self.entries.clone();
        entries.extend_from_slice(&other.entries);
        Self {
            dim: self.dim,
            entries,
        }
    }

    /// Product via a dense intermediate; only used while building operators.
    pub fn times(&self, other: &Self) -> Self {
        let n = self.dim;
        let mut dense = vec![ZERO; n * n];
        for &(i, k, x) in &self.entries {
            for &(k2, j, y) in &other.entries {
                if k == k2 {
                    dense[i * n + j] += x * y;
                }
            }
        }
        Self {
            dim: n,
            entries: dense
                .into_iter()
                .enumerate()
                .filter(|(_, x)| x.norm() > 0.0)
                .map(|(ij, x)| (ij / n, ij % n, x))
                .collect(),
        }
    }

    /// `A·ρ` for row-major dense `ρ`.
    pub fn left(&self, rho: &[C64]) -> Vec<C64> {
        let n = self.dim;
        let mut out = vec![ZERO; n * n];
        for &(i, k, x) in &self.entries {
            for j in 0..n {
                out[i * n + j] += x * rho[k * n + j];
            }
        }
        out
    }

    /// `ρ·A†`.
    pub fn right_adjoint(&self, rho: &[C64]) -> Vec<C64> {
        let n = self.dim;
        let mut out = vec![ZERO; n * n];
        for &(j, k, x) in &self.entries {
            for i in 0..n {
                out[i * n + j] += rho[i * n + k] * x.conj();
            }
        }
        out
    }

    /// `A·ρ·A†`.
    pub fn sandwich(&self, rho: &[C64]) -> Vec<C64> {
        self.right_adjoint(&self.left(rho))
    }
}

/// Operators of the truncated four-mode space. Index layout:
/// `((c·2 + n1)·2 + n2)·d + m`.
pub struct FullSpace {
    pub d: usize,
    pub c: Sparse,
    pub a1: Sparse,
    pub a2: Sparse,
    pub b: Sparse,
}

impl FullSpace {
    pub fn new(d: usize) -> Self {
        let dim = 8 * d;
        let idx = |c: usize, n1: usize, n2: usize, m: usize| ((c * 2 + n1) * 2 + n2) * d + m;
        let mut ops = [
            Sparse::zero(dim),
            Sparse::zero(dim),
            Sparse::zero(dim),
            Sparse::zero(dim),
        ];
        for c in 0..2 {
            for n1 in 0..2 {
                for n2 in 0..2 {
                    for m in 0..d {
                        let from = idx(c, n1, n2, m);
                        if c == 1 {
                            ops[0]
                                .entries
                                .push((idx(0, n1, n2, m), from, C64::new(1.0, 0.0)));
                        }
                        if n1 == 1 {
                            ops[1]
                                .entries
                                .push((idx(c, 0, n2, m), from, C64::new(1.0, 0.0)));
                        }
                        if n2 == 1 {
                            ops[2]
                                .entries
                                .push((idx(c, n1, 0, m), from, C64::new(1.0, 0.0)));
                        }
                        if m > 0 {
                            ops[3].entries.push((
                                idx(c, n1, n2, m - 1),
                                from,
                                C64::new((m as f64).sqrt(), 0.0),
                            ));
                        }
                    }
                }
            }
        }
        let [c, a1, a2, b] = ops;
        Self { d, c, a1, a2, b }
    }

    pub fn dim(&self) -> usize {
        8 * self.d
    }

    pub fn index(&self, c: usize, n1: usize, n2: usize, m: usize) -> usize {
        ((c * 2 + n1) * 2 + n2) * self.d + m
    }

    /// `J = √γ c + √κ₂ a₂`.
    pub fn jump(&self, p: &Params) -> Sparse {
        self.c
            .scale(C64::new(p.gamma.sqrt(), 0.0))
            .plus(&self.a2.scale(C64::new(p.kappa2.sqrt(), 0.0)))
    }

    /// Non-Hermitian no-count operator, written term by term from the
    /// operator form (extra cavity-2 loss included).
    pub fn no_count_operator(&self, p: &Params) -> Sparse {
        let i = C64::new(0.0, 1.0);
        let bd = self.b.adjoint();
        let a1d = self.a1.adjoint();
        let a2d = self.a2.adjoint();
        let cd = self.c.adjoint();
        let j = self.jump(p);
        let coupling = bd
            .times(&a1d)
            .times(&self.a2)
            .plus(&self.b.times(&self.a1).times(&a2d));
        let drive = self
            .c
            .times(&a2d)
            .plus(&cd.times(&self.a2).scale(C64::new(-1.0, 0.0)));
        coupling
            .scale(C64::new(p.g, 0.0))
            .plus(&drive.scale(-i * (p.gamma * p.kappa2).sqrt() / 2.0))
            .plus(&j.adjoint().times(&j).scale(-i / 2.0))
            .plus(&a1d.times(&self.a1).scale(-i * p.kappa1 / 2.0))
            .plus(&a2d.times(&self.a2).scale(-i * p.kappa2_prime / 2.0))
    }

    /// Source photon in, cavities empty, mechanics `amps`.
    pub fn initial(&self, amps: &[C64]) -> Vec<C64> {
        let mut psi = vec![ZERO; self.dim()];
        for (m, &a) in amps.iter().enumerate() {
            psi[self.index(1, 0, 0, m)] = a;
        }
        psi
    }

    pub fn initial_density(&self, mech: &[C64]) -> Vec<C64> {
        let n = self.dim();
        let d = self.d;
        let mut rho = vec![ZERO; n * n];
        for m in 0..d {
            for k in 0..d {
                rho[self.index(1, 0, 0, m) * n + self.index(1, 0, 0, k)] = mech[m * d + k];
            }
        }
        rho
    }

    /// Mechanical block of `ρ` with all photon modes empty.
    pub fn vacuum_block(&self, rho: &[C64]) -> Vec<C64> {
        let n = self.dim();
        let d = self.d;
        let mut out = vec![ZERO; d * d];
        for m in 0..d {
            for k in 0..d {
                out[m * d + k] = rho[self.index(0, 0, 0, m) * n + self.index(0, 0, 0, k)];
            }
        }
        out
    }
}

fn axpy(y: &[C64], a: f64, x: &[C64]) -> Vec<C64> {
    y.iter().zip(x).map(|(yi, xi)| yi + xi * a).collect()
}

/// Classical RK4 on `dψ/dt = -iKψ`.
pub fn evolve_pure(k: &Sparse, psi0: &[C64], t: f64, steps: usize) -> Vec<C64> {
    let h = t / steps as f64;
    let mi = C64::new(0.0, -1.0);
    let f = |v: &[C64]| -> Vec<C64> { k.apply(v).into_iter().map(|x| mi * x).collect() };
    let mut psi = psi0.to_vec();
    for _ in 0..steps {
        let k1 = f(&psi);
        let k2 = f(&axpy(&psi, h / 2.0, &k1));
        let k3 = f(&axpy(&psi, h / 2.0, &k2));
        let k4 = f(&axpy(&psi, h, &k3));
        for i in 0..psi.len() {
            psi[i] += (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (h / 6.0);
        }
    }
    psi
}

/// No-count density evolution with mechanical damping:
/// `-i(Kρ - ρK†) + γ_m(N̄+1)D[b]ρ + γ_m N̄ D[b†]ρ`.
pub struct DenseDamped {
    pub space: FullSpace,
    k: Sparse,
    down: Sparse,
    up: Sparse,
    down_n: Sparse,
    up_n: Sparse,
}

impl DenseDamped {
    pub fn new(d: usize, p: &Params) -> Self {
        let space = FullSpace::new(d);
        let k = space.no_count_operator(p);
        let down = space
            .b
            .scale(C64::new((p.gamma_m * (p.n_bar + 1.0)).sqrt(), 0.0));
        let up = space
            .b
            .adjoint()
            .scale(C64::new((p.gamma_m * p.n_bar).sqrt(), 0.0));
        let down_n = down.adjoint().times(&down);
        let up_n = up.adjoint().times(&up);
        Self {
            space,
            k,
            down,
            up,
            down_n,
            up_n,
        }
    }

    pub fn derivative(&self, rho: &[C64]) -> Vec<C64> {
        let i = C64::new(0.0, 1.0);
        let kr = self.k.left(rho);
        let rk = self.k.right_adjoint(rho);
        let mut out: Vec<C64> = kr.iter().zip(&rk).map(|(a, b)| -i * a + i * b).collect();
        for (jump, number) in [(&self.down, &self.down_n), (&self.up, &self.up_n)] {
            let s = jump.sandwich(rho);
            let l = number.left(rho);
            let r = number.right_adjoint(rho);
            for x in 0..out.len() {
                out[x] += s[x] - (l[x] + r[x]) * 0.5;
            }
        }
        out
    }

    pub fn step(&self, rho: &[C64], h: f64) -> Vec<C64> {
        let k1 = self.derivative(rho);
        let k2 = self.derivative(&axpy(rho, h / 2.0, &k1));
        let k3 = self.derivative(&axpy(rho, h / 2.0, &k2));
        let k4 = self.derivative(&axpy(rho, h, &k3));
        (0..rho.len())
            .map(|i| rho[i] + (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (h / 6.0))
            .collect()
    }

    pub fn detection_rate(&self, p: &Params, rho: &[C64]) -> f64 {
        let s = self.space.jump(p).sandwich(rho);
        let n = self.space.dim();
        (0..n).map(|i| s[i * n + i].re).sum()
    }

    pub fn trace(&self, rho: &[C64]) -> f64 {
        let n = self.space.dim();
        (0..n).map(|i| rho[i * n + i].re).sum()
    }

    /// Normalized mechanical density after a detection.
    pub fn jump_mechanics(&self, p: &Params, rho: &[C64]) -> Vec<C64> {
        let post = self.space.jump(p).sandwich(rho);
        let mech = self.space.vacuum_block(&post);
        let d = self.space.d;
        let tr: f64 = (0..d).map(|m| mech[m * d + m].re).sum();
        mech.into_iter().map(|x| x / tr).collect()
    }
}

/// Closed-form detection rate for `g = 0`, `κ₁ = 0`.
pub fn analytic_rate(t: f64, gamma: f64, kappa2: f64) -> f64 {
    let diff = (-gamma * t / 2.0).exp() - (-kappa2 * t / 2.0).exp();
    let n2 = 4.0 * gamma * kappa2 / (kappa2 - gamma).powi(2) * diff * diff;
    gamma * (-gamma * t).exp() + kappa2 * n2
        - 4.0 * gamma * kappa2 / (kappa2 - gamma) * (-gamma * t / 2.0).exp() * diff
}

/// Zero of the closed-form rate.
pub fn analytic_zero(gamma: f64, kappa2: f64) -> f64 {
    2.0 * (2.0 * kappa2 / (kappa2 + gamma)).ln() / (kappa2 - gamma)
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Generalized Laguerre polynomial from its explicit sum.
pub fn laguerre(n: usize, alpha: usize, x: f64) -> f64 {
    (0..=n)
        .map(|k| {
            let binom = factorial(n + alpha) / (factorial(n - k) * factorial(alpha + k));
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            sign * binom * x.powi(k as i32) / factorial(k)
        })
        .sum()
}

/// Wigner function from the factorial form of the number-basis kernel.
/// `x = (b + b†)/√2`, `p = (b - b†)/(i√2)`.
pub fn wigner_laguerre(rho: &[C64], dim: usize, x: f64, p: f64) -> f64 {
    let alpha = C64::new(x, p) / 2f64.sqrt();
    let r2 = alpha.norm_sqr();
    let gauss = (-2.0 * r2).exp() / std::f64::consts::PI;
    let mut w = 0.0;
    for m in 0..dim {
        for n in 0..=m {
            let k = m - n;
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            let kernel = (alpha.conj() * 2.0).powu(k as u32)
                * (sign * gauss * (factorial(n) / factorial(m)).sqrt() * laguerre(n, k, 4.0 * r2));
            if k == 0 {
                w += (rho[m * dim + m] * kernel).re;
            } else {
                w += 2.0 * (rho[m * dim + n] * kernel).re;
            }
        }
    }
    w
}

/// `P_N(n) ∝ cos^{2N}(θ√(n+1)) P_0(n)`.
pub fn closed_form_jc(p0: &[f64], theta: f64, reps: usize) -> Vec<f64> {
    let w: Vec<f64> = p0
        .iter()
        .enumerate()
        .map(|(n, p)| {
            (theta * ((n + 1) as f64).sqrt())
                .cos()
                .powi(2 * reps as i32)
                * p
        })
        .collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

pub fn poisson(n_bar: f64, n_max: usize) -> Vec<f64> {
    let mut p = vec![(-n_bar).exp()];
    for n in 1..=n_max {
        let prev = p[n - 1];
        p.push(prev * n_bar / n as f64);
    }
    p
}

pub fn variance(p: &[f64]) -> f64 {
    let z: f64 = p.iter().sum();
    let mean: f64 = p.iter().enumerate().map(|(n, x)| n as f64 * x).sum::<f64>() / z;
    p.iter()
        .enumerate()
        .map(|(n, x)| (n as f64 - mean).powi(2) * x)
        .sum::<f64>()
        / z
}

/// Two-sided KS statistic of `samples` against a monotone `cdf`.
pub fn ks_statistic(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}
