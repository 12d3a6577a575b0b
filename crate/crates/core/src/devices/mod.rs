//! Dynamic device models attached to network buses.
//!
//! Every device works in the common network frame, which rotates at nominal
//! frequency. A device turns its bus voltage and its own differential (`x`)
//! and algebraic (`y`) variables into state derivatives, algebraic
//! residuals, and the current it injects into the bus.

mod converter;
mod gfl;
mod gfm;
mod ideal;
mod load;
mod machine;

pub use converter::{FilterModel, FilterParams, PfrConfig, PfrInput, OMEGA_WASHOUT_T};
pub use gfl::{DcLink, GflConverter, GflParams, ReferenceSource};
pub use gfm::{GfmConverter, GfmParams, SyncScheme};
pub use ideal::{ideal_device_constraint, IdealDevice, IdealKind};
pub use load::{LoadKind, StaticLoad};
pub use machine::{sg4_derivatives, SyncMachine4};

use thiserror::Error;

use crate::controllers::ControlError;
use crate::network::C64;
use crate::park::CfError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DeviceError {
    #[error(transparent)]
    Cf(#[from] CfError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error("{0}")]
    Init(String),
}

/// Discrete changes applied by events.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeviceAction {
    Connect(bool),
    StepPm(f64),
}

pub trait DeviceModel: Send + Sync {
    fn name(&self) -> &str;
    /// Position of the bus in the network's bus list.
    fn bus(&self) -> usize;
    fn n_diff(&self) -> usize;
    fn n_alg(&self) -> usize {
        0
    }
    /// Fills `f` (state derivatives) and `g` (algebraic residuals) and
    /// returns the injected current.
    fn eval(&self, v: C64, x: &[f64], y: &[f64], f: &mut [f64], g: &mut [f64]) -> Result<C64, DeviceError>;
    /// Named instantaneous signals, in a fixed order.
    fn signals(&self, v: C64, x: &[f64], y: &[f64]) -> Result<Vec<(&'static str, f64)>, DeviceError>;
    /// Returns whether the action applied to this device.
    fn apply(&mut self, _action: DeviceAction) -> bool {
        false
    }
    /// Inertia constant `M = 2H` for machines.
    fn inertia(&self) -> Option<f64> {
        None
    }
}

/// Injected current from a complex power injection and the bus voltage.
pub(crate) fn current_from_power(s: C64, v: C64) -> C64 {
    (s / v).conj()
}

pub(crate) fn push_complex(out: &mut Vec<(&'static str, f64)>, names: [&'static str; 2], z: C64) {
    out.push((names[0], z.re));
    out.push((names[1], z.im));
}
