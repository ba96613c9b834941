use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::scalar::Real;

/// Physical rates of the opto-mechanical model, in units of `kappa2`.
///
/// The resonance condition `ω₂ = ω₁ + ω_m` is built into the interaction
/// picture, so no frequencies appear.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams<T> {
    /// Opto-mechanical coupling.
    pub g: T,
    /// Decay of cavity 1 (unmonitored; counts as photon loss).
    pub kappa1: T,
    /// Decay of cavity 2 through the monitored mirror.
    pub kappa2: T,
    /// Extra, unmonitored decay of cavity 2.
    pub kappa2_prime: T,
    /// Emission rate of the single-photon source.
    pub gamma: T,
    /// Mechanical damping rate.
    pub gamma_m: T,
    /// Thermal phonon occupation of the mechanical bath.
    pub n_bar: T,
}

impl<T: Real> ModelParams<T> {
    /// `g = 1, κ₁ = 0.2, κ₂ = 1, γ = 0.9`, no extra loss, no damping.
    pub fn reference() -> Self {
        Self {
            g: T::one(),
            kappa1: T::lit(0.2),
            kappa2: T::one(),
            kappa2_prime: T::zero(),
            gamma: T::lit(0.9),
            gamma_m: T::zero(),
            n_bar: T::zero(),
        }
    }

    /// Checks that every rate is finite and non-negative.
    pub fn validate_rates(&self) -> Result<()> {
        let fields = [
            ("g", self.g),
            ("kappa1", self.kappa1),
            ("kappa2", self.kappa2),
            ("kappa2_prime", self.kappa2_prime),
            ("gamma", self.gamma),
            ("gamma_m", self.gamma_m),
            ("n_bar", self.n_bar),
        ];
        for (name, v) in fields {
            if !v.is_finite() || v < T::zero() {
                return Err(invalid(
                    name,
                    format!("must be finite and non-negative, got {v}"),
                ));
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_rates()?;
        if !(self.kappa2 > T::zero()) {
            return Err(invalid("kappa2", "must be positive"));
        }
        if !(self.gamma > T::zero()) {
            return Err(invalid("gamma", "must be positive"));
        }
        Ok(())
    }

    pub fn with_g(mut self, g: T) -> Self {
        self.g = g;
        self
    }

    pub fn with_kappa1(mut self, kappa1: T) -> Self {
        self.kappa1 = kappa1;
        self
    }

    pub fn with_gamma(mut self, gamma: T) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_damping(mut self, gamma_m: T, n_bar: T) -> Self {
        self.gamma_m = gamma_m;
        self.n_bar = n_bar;
        self
    }

    pub fn to_f64(&self) -> ModelParams<f64> {
        ModelParams {
            g: self.g.to_f64_lossy(),
            kappa1: self.kappa1.to_f64_lossy(),
            kappa2: self.kappa2.to_f64_lossy(),
            kappa2_prime: self.kappa2_prime.to_f64_lossy(),
            gamma: self.gamma.to_f64_lossy(),
            gamma_m: self.gamma_m.to_f64_lossy(),
            n_bar: self.n_bar.to_f64_lossy(),
        }
    }

    pub fn from_f64(p: &ModelParams<f64>) -> Self {
        Self {
            g: T::lit(p.g),
            kappa1: T::lit(p.kappa1),
            kappa2: T::lit(p.kappa2),
            kappa2_prime: T::lit(p.kappa2_prime),
            gamma: T::lit(p.gamma),
            gamma_m: T::lit(p.gamma_m),
            n_bar: T::lit(p.n_bar),
        }
    }
}
