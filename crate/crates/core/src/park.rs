//! Park vectors, complex frequency and instantaneous complex power.
//!
//! A Park vector `u = u_d + j u_q` has complex frequency `η = ρ + jω`
//! defined by `du/dt = η u`: `ρ` is the rate of change of `ln |u|` and `ω`
//! the rate of change of its phase. Frequencies here are per unit on the
//! nominal angular frequency unless a function says otherwise.

use std::ops::{Add, Div, Mul, Neg, Sub};

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Scalar;

/// Magnitude below which the complex frequency of a vector is undefined.
pub const EPS_MAG: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum CfError {
    #[error("complex frequency undefined: |u| = {magnitude:e} is below the cutoff")]
    MagnitudeUnderflow { magnitude: f64 },
}

/// Complex dq quantity in per unit on a chosen reference frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ParkVector<T> {
    pub d: T,
    pub q: T,
}

impl<T: Scalar> ParkVector<T> {
    pub fn new(d: T, q: T) -> Self {
        Self { d, q }
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero())
    }

    pub fn from_polar(magnitude: T, phase: T) -> Self {
        Self::new(magnitude * phase.cos(), magnitude * phase.sin())
    }

    pub fn magnitude(&self) -> T {
        self.d.hypot(self.q)
    }

    pub fn magnitude_sqr(&self) -> T {
        self.d * self.d + self.q * self.q
    }

    /// Phase angle, `None` when the vector is (numerically) zero.
    pub fn phase(&self) -> Option<T> {
        if self.magnitude() > T::lit(EPS_MAG) {
            Some(self.q.atan2(self.d))
        } else {
            None
        }
    }

    pub fn conj(&self) -> Self {
        Self::new(self.d, -self.q)
    }

    /// Multiplication by `j`.
    pub fn rot90(&self) -> Self {
        Self::new(-self.q, self.d)
    }

    pub fn is_finite(&self) -> bool {
        self.d.is_finite() && self.q.is_finite()
    }

    pub fn to_complex(self) -> Complex<T> {
        Complex::new(self.d, self.q)
    }

    pub fn from_complex(c: Complex<T>) -> Self {
        Self::new(c.re, c.im)
    }

    /// `e^{jδ} u`.
    pub fn rotate(&self, delta: T) -> Self {
        let (s, c) = delta.sin_cos();
        Self::new(c * self.d - s * self.q, s * self.d + c * self.q)
    }
}

impl<T: Scalar> From<Complex<T>> for ParkVector<T> {
    fn from(c: Complex<T>) -> Self {
        Self::from_complex(c)
    }
}

impl<T: Scalar> From<ParkVector<T>> for Complex<T> {
    fn from(u: ParkVector<T>) -> Self {
        u.to_complex()
    }
}

impl<T: Scalar> Add for ParkVector<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.d + rhs.d, self.q + rhs.q)
    }
}

impl<T: Scalar> Sub for ParkVector<T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.d - rhs.d, self.q - rhs.q)
    }
}

impl<T: Scalar> Neg for ParkVector<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.d, -self.q)
    }
}

impl<T: Scalar> Mul for ParkVector<T> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        Self::new(self.d * rhs.d - self.q * rhs.q, self.d * rhs.q + self.q * rhs.d)
    }
}

impl<T: Scalar> Mul<T> for ParkVector<T> {
    type Output = Self;
    fn mul(self, rhs: T) -> Self {
        Self::new(self.d * rhs, self.q * rhs)
    }
}

impl<T: Scalar> Div for ParkVector<T> {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        Self::from_complex(self.to_complex() / rhs.to_complex())
    }
}

/// Complex frequency `η = ρ + jω`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ComplexFrequency<T> {
    pub rho: T,
    pub omega: T,
}

impl<T: Scalar> ComplexFrequency<T> {
    pub fn new(rho: T, omega: T) -> Self {
        Self { rho, omega }
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero())
    }

    pub fn conj(&self) -> Self {
        Self::new(self.rho, -self.omega)
    }

    pub fn magnitude(&self) -> T {
        self.rho.hypot(self.omega)
    }

    pub fn as_park(&self) -> ParkVector<T> {
        ParkVector::new(self.rho, self.omega)
    }

    pub fn from_park(u: ParkVector<T>) -> Self {
        Self::new(u.d, u.q)
    }

    pub fn is_finite(&self) -> bool {
        self.rho.is_finite() && self.omega.is_finite()
    }
}

impl<T: Scalar> Add for ComplexFrequency<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.rho + rhs.rho, self.omega + rhs.omega)
    }
}

impl<T: Scalar> Sub for ComplexFrequency<T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.rho - rhs.rho, self.omega - rhs.omega)
    }
}

impl<T: Scalar> Mul<T> for ComplexFrequency<T> {
    type Output = Self;
    fn mul(self, rhs: T) -> Self {
        Self::new(self.rho * rhs, self.omega * rhs)
    }
}

/// Nominal electrical base of a bus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NominalBase<T> {
    pub f_n: T,
    pub omega_n: T,
    pub v_n: T,
}

impl<T: Scalar> NominalBase<T> {
    pub fn new(f_n: T, v_n: T) -> Self {
        Self { f_n, omega_n: T::two() * T::PI() * f_n, v_n }
    }
}

/// `du/dt = η u`.
pub fn apply_cf<T: Scalar>(u: ParkVector<T>, eta: ComplexFrequency<T>) -> ParkVector<T> {
    eta.as_park() * u
}

/// Inverse of [`apply_cf`]: `η = (du/dt) / u`.
pub fn cf_of_pair<T: Scalar>(u: ParkVector<T>, udot: ParkVector<T>) -> Result<ComplexFrequency<T>, CfError> {
    let mag2 = u.magnitude_sqr();
    let eps = T::lit(EPS_MAG);
    if mag2 <= eps * eps {
        return Err(CfError::MagnitudeUnderflow { magnitude: mag2.sqrt().to_f64().unwrap_or(0.0) });
    }
    // udot * conj(u) / |u|^2
    let num = udot * u.conj();
    Ok(ComplexFrequency::new(num.d / mag2, num.q / mag2))
}

/// Local (device) frame to grid frame: `u = e^{jδ} u'`.
pub fn to_grid_frame<T: Scalar>(u_local: ParkVector<T>, delta: T) -> ParkVector<T> {
    u_local.rotate(delta)
}

/// Grid frame to local (device) frame: `u' = e^{-jδ} u`.
pub fn to_local_frame<T: Scalar>(u_grid: ParkVector<T>, delta: T) -> ParkVector<T> {
    u_grid.rotate(-delta)
}

/// Complex frequency seen from a frame rotating at `delta_dot`: `η' = η − jδ̇`.
pub fn cf_local<T: Scalar>(eta_grid: ComplexFrequency<T>, delta_dot: T) -> ComplexFrequency<T> {
    ComplexFrequency::new(eta_grid.rho, eta_grid.omega - delta_dot)
}

/// Instantaneous complex power `s = v i*`.
pub fn complex_power<T: Scalar>(v: ParkVector<T>, i: ParkVector<T>) -> ParkVector<T> {
    v * i.conj()
}

/// Rate of change of complex power, `ds/dt = (η_v + η_i*) s`.
pub fn sdot_identity<T: Scalar>(
    eta_v: ComplexFrequency<T>,
    eta_i: ComplexFrequency<T>,
    s: ParkVector<T>,
) -> ParkVector<T> {
    (eta_v + eta_i.conj()).as_park() * s
}

/// Same rate written with frequencies referred to a frame rotating at
/// `delta_dot`: `ds/dt = (η_v' + (η_i')*) s`. Agrees with [`sdot_identity`]
/// for every `delta_dot`.
pub fn sdot_identity_local<T: Scalar>(
    eta_v: ComplexFrequency<T>,
    eta_i: ComplexFrequency<T>,
    s: ParkVector<T>,
    delta_dot: T,
) -> ParkVector<T> {
    let ev = cf_local(eta_v, delta_dot);
    let ei = cf_local(eta_i, delta_dot);
    (ev + ei.conj()).as_park() * s
}
