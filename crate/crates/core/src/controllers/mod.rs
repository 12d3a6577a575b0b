//! Converter control blocks as state-space pieces.
//!
//! Every block is a pure function of `(state, inputs, params)` returning its
//! outputs and state derivatives. Frequencies follow the deviation
//! convention: the common network frame rotates at the nominal frequency, so
//! `ω_n` drops out of the angle equations and bus frequencies enter as
//! deviations from nominal, in per unit.
//!
//! Angle derivatives (`delta_dot`) are per unit frequencies; multiply by the
//! nominal angular frequency to get rad/s.

mod current;
mod gfm;
mod pfr;
mod pll;

pub use current::{
    current_ref_constant, current_ref_from_power, current_ref_outer_loops, current_ref_virtual_admittance,
    pi_current_output, OuterGflParams, OuterGflState, PiCurrentOutput, PiCurrentParams, PiCurrentState,
    VirtualAdmittanceParams,
};
pub use gfm::{
    gfm_voltage_ctrl, pf_droop_derivatives, qv_droop_vref, qv_droop_vref_rate, vsm_derivatives, vsm_voltage_vref,
    vsm_vref_rate, DroopParams, DroopState, GfmVoltageParams, GfmVoltageState, VsmParams, VsmState,
};
pub use pfr::{pfr_step, PfrDerivatives, PfrParams, PfrState};
pub use pll::{pll_derivatives, PllDerivatives, PllParams, PllState};

use thiserror::Error;

use crate::park::CfError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error(transparent)]
    Cf(#[from] CfError),
    #[error("{0}")]
    Domain(String),
}
