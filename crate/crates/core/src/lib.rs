//! Complex-frequency analysis of grid-connected converter controls, with a
//! phasor-domain simulator of the WSCC 9-bus system to exercise it.
//!
//! Signal-level types are generic over the scalar (`f32`/`f64`); the network
//! simulator works in `f64`. The aliases below cover the common cases.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod controllers;
pub mod devices;
pub mod network;
pub mod output;
pub mod park;
mod scalar;
pub mod sim;

pub use scalar::Scalar;

use thiserror::Error;

pub type Park = park::ParkVector<f64>;
pub type Park32 = park::ParkVector<f32>;
pub type Cf = park::ComplexFrequency<f64>;
pub type Cf32 = park::ComplexFrequency<f32>;
pub type CfTrace = analysis::CfSeries<f64>;

/// Umbrella error for front ends. [`Error::exit_code`] maps each class to a
/// stable process exit status.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Scenario(#[from] sim::ScenarioError),
    #[error(transparent)]
    Sim(#[from] sim::SimError),
    #[error(transparent)]
    Analysis(#[from] analysis::AnalysisError),
    #[error(transparent)]
    Output(#[from] output::OutputError),
}

impl From<sim::RunError> for Error {
    fn from(e: sim::RunError) -> Self {
        match e {
            sim::RunError::Scenario(e) => Self::Scenario(e),
            sim::RunError::Sim(e) => Self::Sim(e),
        }
    }
}

impl Error {
    /// 2: unreadable input, 3: invalid configuration, 4: solver failure,
    /// 1: anything else.
    pub fn exit_code(&self) -> i32 {
        use sim::{ScenarioError, SimError};
        match self {
            Self::Scenario(ScenarioError::Parse { .. }) => 2,
            Self::Scenario(ScenarioError::Validation(_)) => 3,
            Self::Sim(SimError::Validation(_) | SimError::InitializationInfeasible { .. }) => 3,
            Self::Sim(SimError::Network(network::NetworkError::Parse { .. })) => 2,
            Self::Sim(SimError::Network(
                network::NetworkError::NonConvergence { .. } | network::NetworkError::SingularJacobian(_),
            )) => 4,
            Self::Sim(SimError::Network(_)) => 3,
            Self::Sim(_) => 4,
            Self::Analysis(analysis::AnalysisError::MissingChannel(_)) => 3,
            Self::Output(output::OutputError::MissingChannel(_) | output::OutputError::EmptySelection) => 3,
            Self::Output(output::OutputError::Format(_) | output::OutputError::Csv(_)) => 2,
            _ => 1,
        }
    }
}
