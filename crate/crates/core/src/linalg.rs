//! Small dense complex linear algebra used by the propagators.

use std::ops::{Add, Mul, Sub};

use crate::scalar::{Real, C};

/// 3×3 complex matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat3<T: Real>(pub [[C<T>; 3]; 3]);

/// Complex 3-vector.
pub type Vec3<T> = [C<T>; 3];

impl<T: Real> Mat3<T> {
    pub fn zero() -> Self {
        Self([[C::new(T::zero(), T::zero()); 3]; 3])
    }

    pub fn identity() -> Self {
        let mut m = Self::zero();
        for i in 0..3 {
            m.0[i][i] = C::new(T::one(), T::zero());
        }
        m
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C<T> {
        self.0[i][j]
    }

    pub fn scale(&self, s: C<T>) -> Self {
        let mut out = *self;
        for row in &mut out.0 {
            for x in row.iter_mut() {
                *x = *x * s;
            }
        }
        out
    }

    pub fn adjoint(&self) -> Self {
        let mut out = Self::zero();
        for i in 0..3 {
            for j in 0..3 {
                out.0[i][j] = self.0[j][i].conj();
            }
        }
        out
    }

    /// Maximum absolute column sum.
    pub fn norm1(&self) -> T {
        (0..3)
            .map(|j| {
                (0..3)
                    .map(|i| self.0[i][j].norm())
                    .fold(T::zero(), |a, b| a + b)
            })
            .fold(T::zero(), T::max)
    }

    #[inline]
    pub fn mul_vec(&self, v: &Vec3<T>) -> Vec3<T> {
        let m = &self.0;
        [
            m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
            m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
            m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
        ]
    }

    /// `exp(self)` by scaling and squaring of the Taylor series, truncated
    /// once the terms drop below the unit roundoff.
    pub fn expm(&self) -> Self {
        let norm = self.norm1();
        let mut squarings = 0u32;
        let half = T::lit(0.5);
        let mut scaled_norm = norm;
        while scaled_norm > half {
            scaled_norm = scaled_norm * half;
            squarings += 1;
        }
        let a = self.scale(C::new(half.powi(squarings as i32), T::zero()));
        let mut term = Self::identity();
        let mut sum = Self::identity();
        for k in 1..40 {
            term = (term * a).scale(C::new(T::one() / T::from_usize_lossy(k), T::zero()));
            sum = sum + term;
            if term.norm1() <= T::EPS * sum.norm1() {
                break;
            }
        }
        for _ in 0..squarings {
            sum = sum * sum;
        }
        sum
    }
}

impl<T: Real> Mul for Mat3<T> {
    type Output = Self;

    fn mul(self, rhs: Self) -> Self {
        let mut out = Self::zero();
        for i in 0..3 {
            for j in 0..3 {
                out.0[i][j] = self.0[i][0] * rhs.0[0][j]
                    + self.0[i][1] * rhs.0[1][j]
                    + self.0[i][2] * rhs.0[2][j];
            }
        }
        out
    }
}

impl<T: Real> Add for Mat3<T> {
    type Output = Self;

    fn add(mut self, rhs: Self) -> Self {
        for i in 0..3 {
            for j in 0..3 {
                self.0[i][j] = self.0[i][j] + rhs.0[i][j];
            }
        }
        self
    }
}

impl<T: Real> Sub for Mat3<T> {
    type Output = Self;

    fn sub(mut self, rhs: Self) -> Self {
        for i in 0..3 {
            for j in 0..3 {
                self.0[i][j] = self.0[i][j] - rhs.0[i][j];
            }
        }
        self
    }
}

/// Attempts a Cholesky factorization of `a + shift·I` for a Hermitian
/// row-major matrix. Success certifies that the smallest eigenvalue of `a` is
/// at least `-shift`. On failure returns the offending pivot value.
pub fn shifted_cholesky<T: Real>(a: &[C<T>], dim: usize, shift: T) -> Result<(), T> {
    let mut l = vec![C::new(T::zero(), T::zero()); dim * dim];
    for j in 0..dim {
        let mut d = a[j * dim + j].re + shift;
        for k in 0..j {
            d = d - l[j * dim + k].norm_sqr();
        }
        if !(d > T::zero()) {
            return Err(d);
        }
        let d = d.sqrt();
        l[j * dim + j] = C::new(d, T::zero());
        for i in (j + 1)..dim {
            let mut s = a[i * dim + j];
            for k in 0..j {
                s = s - l[i * dim + k] * l[j * dim + k].conj();
            }
            l[i * dim + j] = s / d;
        }
    }
    Ok(())
}
