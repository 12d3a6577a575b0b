use serde::{Deserialize, Serialize};

use super::ControlError;
use crate::park::ParkVector;
use crate::Scalar;

/// Synchronous-reference-frame PLL gains. `kp` is dimensionless (pu
/// frequency per pu voltage), `ki` in 1/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PllParams<T> {
    pub kp: T,
    pub ki: T,
}

impl<T: Scalar> PllParams<T> {
    /// Gains from a loop bandwidth (rad/s) and damping ratio.
    ///
    /// The frame angle moves at `omega_b * (kp v_q + ki x)` rad/s, so the
    /// closed loop is `s² + 2ζω_bw s + ω_bw²` for `kp = 2ζω_bw/ω_b` and
    /// `ki = ω_bw²/ω_b`.
    pub fn from_bandwidth(bandwidth: T, damping: T, omega_b: T) -> Result<Self, ControlError> {
        if !(bandwidth > T::zero()) || !(damping > T::zero()) {
            return Err(ControlError::Domain(format!(
                "PLL bandwidth and damping must be positive, got {bandwidth} and {damping}"
            )));
        }
        Ok(Self { kp: T::two() * damping * bandwidth / omega_b, ki: bandwidth * bandwidth / omega_b })
    }
}

/// `x` is the integrator state (pu·s), `delta` the frame angle (rad,
/// unwrapped).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PllState<T> {
    pub x: T,
    pub delta: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PllDerivatives<T> {
    pub xdot: T,
    /// Slip of the PLL frame against the bus frequency, pu.
    pub delta_dot: T,
    /// PLL frequency deviation from nominal, pu: the rate of the frame angle
    /// against the network frame.
    pub frame_rate: T,
}

pub fn pll_derivatives<T: Scalar>(
    state: &PllState<T>,
    params: &PllParams<T>,
    v_local: ParkVector<T>,
    omega_v_dev: T,
) -> PllDerivatives<T> {
    let frame_rate = params.kp * v_local.q + params.ki * state.x;
    PllDerivatives { xdot: v_local.q, delta_dot: frame_rate - omega_v_dev, frame_rate }
}
