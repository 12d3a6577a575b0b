//! Time-domain simulation: DAE integration, the assembled power system,
//! scenarios, events and sweeps.

mod dae;
mod runner;
mod scenario;
mod system;

pub use dae::{solve_algebraic, Dae, NewtonSettings, StepOutput, Trapezoid};
pub use runner::{simulate, Event, EventAction, TimeSeries};
pub use scenario::{
    add_derived_channels, parse_cli_value, run_sweep, run_sweep_all, CurrentConfig, DeviceConfig, DeviceKindConfig,
    DroopConfig, IdealConfig, NetworkConfig, OutputConfig, PfrFileConfig, PllConfig, ReferenceConfig, ReferenceKind,
    RunError, Scenario, ScenarioError, ScenarioFile, SweepConfig, SweepRun, VoltageConfig, VsmConfig,
    BUILTIN_SCENARIOS,
};
pub use system::{DeviceKindSpec, DeviceSpec, PowerSystem, SystemSpec, EQUILIBRIUM_TOL};

use thiserror::Error;

use crate::devices::DeviceError;
use crate::network::NetworkError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("Newton iteration did not converge at t = {t} s; try reducing dt (currently {dt} s)")]
    StepNonConvergence { t: f64, dt: f64 },
    #[error("singular Jacobian at t = {t} s")]
    SingularJacobian { t: f64 },
    #[error("non-finite residual at t = {t} s")]
    NonFinite { t: f64 },
    #[error("initialization infeasible: device {device} has residual {residual:e}")]
    InitializationInfeasible { device: String, residual: f64 },
    #[error("device {device}: {source}")]
    Device { device: String, source: DeviceError },
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("{0}")]
    Validation(String),
}
