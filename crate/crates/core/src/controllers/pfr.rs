use serde::{Deserialize, Serialize};

use super::ControlError;
use crate::Scalar;

/// Primary frequency response: low-pass, washout, static gain, hard limit.
///
/// `gain` is applied with a negative sign so that a positive gain lowers the
/// active power reference on over-frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PfrParams<T> {
    pub t_lp: T,
    pub t_wash: T,
    pub gain: T,
    pub limit: T,
}

impl<T: Scalar> PfrParams<T> {
    pub fn new(t_lp: T, t_wash: T, gain: T, limit: T) -> Result<Self, ControlError> {
        if !(t_lp > T::zero()) || !(t_wash > T::zero()) || limit < T::zero() {
            return Err(ControlError::Domain(
                "PFR needs positive filter time constants and a non-negative limit".into(),
            ));
        }
        Ok(Self { t_lp, t_wash, gain, limit })
    }

    /// Defaults `Tlp = 0.1 s`, `Twash = 10 s`.
    pub fn with_defaults(gain: T, limit: T) -> Result<Self, ControlError> {
        Self::new(T::lit(0.1), T::lit(10.0), gain, limit)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PfrState<T> {
    pub x_lp: T,
    pub x_wash: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PfrDerivatives<T> {
    pub x_lp: T,
    pub x_wash: T,
}

/// Returns `(Δp_ref, state derivatives)`. The output depends only on the
/// state, so the block never closes an algebraic loop.
pub fn pfr_step<T: Scalar>(state: &PfrState<T>, params: &PfrParams<T>, freq_dev_in: T) -> (T, PfrDerivatives<T>) {
    let washed = state.x_lp - state.x_wash;
    let raw = -params.gain * washed;
    let out = raw.max(-params.limit).min(params.limit);
    let d = PfrDerivatives {
        x_lp: (freq_dev_in - state.x_lp) / params.t_lp,
        x_wash: (state.x_lp - state.x_wash) / params.t_wash,
    };
    (out, d)
}
