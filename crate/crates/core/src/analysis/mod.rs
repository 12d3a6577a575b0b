//! Post-processing of simulated trajectories: complex-frequency estimation,
//! internal frequencies and identity residuals.

mod identity;
mod internal;

use thiserror::Error;

use crate::park::{ComplexFrequency, ParkVector, EPS_MAG};
use crate::Scalar;

pub use identity::{identity_residual, IdentityKind, IdentityReport, EVENT_WINDOW_STEPS};
pub use internal::{internal_frequency, machine_internal_frequency, InternalFrequencyReport, TableRow};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("need at least 3 samples, got {0}")]
    TooShort(usize),
    #[error("time grid is not uniform at sample {0}")]
    NonUniform(usize),
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("missing channel {0:?}")]
    MissingChannel(String),
    #[error("no internal-frequency expression for configuration {0:?}")]
    UnknownConfiguration(String),
    #[error("{0}")]
    Invalid(String),
}

/// Complex frequency of a sampled Park vector, in pu of `ω_n`, as a
/// deviation from the rotating frame.
#[derive(Debug, Clone, PartialEq)]
pub struct CfSeries<T> {
    pub time: Vec<T>,
    pub eta: Vec<ComplexFrequency<T>>,
    /// `false` where the magnitude underflows or a stencil touches such a
    /// sample; `eta` is NaN there.
    pub valid: Vec<bool>,
}

impl<T: Scalar> CfSeries<T> {
    pub fn rho(&self) -> Vec<T> {
        self.eta.iter().map(|e| e.rho).collect()
    }

    pub fn omega(&self) -> Vec<T> {
        self.eta.iter().map(|e| e.omega).collect()
    }
}

pub(crate) fn check_grid<T: Scalar>(time: &[T]) -> Result<T, AnalysisError> {
    if time.len() < 3 {
        return Err(AnalysisError::TooShort(time.len()));
    }
    let dt = time[1] - time[0];
    if !(dt > T::zero()) {
        return Err(AnalysisError::NonUniform(1));
    }
    for k in 1..time.len() {
        let tol = T::lit(1e-6) * dt + T::lit(16.0) * T::epsilon() * time[k].abs();
        if ((time[k] - time[k - 1]) - dt).abs() > tol {
            return Err(AnalysisError::NonUniform(k));
        }
    }
    Ok(dt)
}

/// Second-order finite-difference derivative: central in the interior,
/// three-point one-sided at both ends. NaN inputs propagate to every
/// stencil that uses them.
pub fn derivative<T: Scalar>(values: &[T], dt: T) -> Vec<T> {
    let n = values.len();
    let mut out = vec![T::nan(); n];
    if n < 3 {
        return out;
    }
    let two = T::two();
    let three = T::lit(3.0);
    let four = T::lit(4.0);
    out[0] = (-three * values[0] + four * values[1] - values[2]) / (two * dt);
    for k in 1..n - 1 {
        out[k] = (values[k + 1] - values[k - 1]) / (two * dt);
    }
    out[n - 1] = (three * values[n - 1] - four * values[n - 2] + values[n - 3]) / (two * dt);
    out
}

fn unwrap_phase<T: Scalar>(phase: &mut [T]) {
    let two_pi = T::TAU();
    let mut last: Option<(T, T)> = None; // (raw, unwrapped)
    for p in phase.iter_mut() {
        if p.is_nan() {
            continue;
        }
        let raw = *p;
        let un = match last {
            None => raw,
            Some((prev_raw, prev_un)) => {
                let d = raw - prev_raw;
                prev_un + d - two_pi * (d / two_pi).round()
            }
        };
        last = Some((raw, un));
        *p = un;
    }
}

/// Estimates `η = ρ + jω` of a sampled Park vector: `ρ` from the derivative
/// of `ln|v|`, `ω` from the derivative of the unwrapped angle, both divided
/// by `omega_n` (rad/s).
pub fn estimate_cf<T: Scalar>(time: &[T], v: &[ParkVector<T>], omega_n: T) -> Result<CfSeries<T>, AnalysisError> {
    if time.len() != v.len() {
        return Err(AnalysisError::LengthMismatch(time.len(), v.len()));
    }
    let dt = check_grid(time)?;
    let eps = T::lit(EPS_MAG);
    let ok: Vec<bool> = v.iter().map(|u| u.is_finite() && u.magnitude() > eps).collect();
    let ln_mag: Vec<T> = v.iter().zip(&ok).map(|(u, &g)| if g { u.magnitude().ln() } else { T::nan() }).collect();
    let mut phase: Vec<T> =
        v.iter().zip(&ok).map(|(u, &g)| if g { u.phase().unwrap_or(T::nan()) } else { T::nan() }).collect();
    unwrap_phase(&mut phase);
    let rho = derivative(&ln_mag, dt);
    let omega = derivative(&phase, dt);
    let mut eta = Vec::with_capacity(v.len());
    let mut valid = Vec::with_capacity(v.len());
    for k in 0..v.len() {
        let good = ok[k] && rho[k].is_finite() && omega[k].is_finite();
        valid.push(good);
        eta.push(if good {
            ComplexFrequency::new(rho[k] / omega_n, omega[k] / omega_n)
        } else {
            ComplexFrequency::new(T::nan(), T::nan())
        });
    }
    Ok(CfSeries { time: time.to_vec(), eta, valid })
}

/// Non-ideality of the current controller in the complex-power rate:
/// `Δṡ = −κ_PI²·x*·v'`.
pub fn delta_sdot<T: Scalar>(x: ParkVector<T>, v_local: ParkVector<T>, kappa_pi: T) -> ParkVector<T> {
    -(x.conj() * v_local) * (kappa_pi * kappa_pi)
}

/// Inertia-weighted mean of rotor speeds.
pub fn coi_frequency(speeds: &[f64], inertias: &[f64]) -> Result<f64, AnalysisError> {
    if speeds.is_empty() {
        return Err(AnalysisError::Invalid("centre of inertia needs at least one machine".into()));
    }
    if speeds.len() != inertias.len() {
        return Err(AnalysisError::LengthMismatch(speeds.len(), inertias.len()));
    }
    let m: f64 = inertias.iter().sum();
    if !(m > 0.0) {
        return Err(AnalysisError::Invalid("total inertia must be positive".into()));
    }
    Ok(speeds.iter().zip(inertias).map(|(w, h)| w * h).sum::<f64>() / m)
}
