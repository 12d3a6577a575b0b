//! Static network: data model, admittance matrix, power flow and the
//! current-balance equations used during simulation.

mod dataset;
mod powerflow;
mod ybus;

pub use dataset::parse_dataset;
pub use powerflow::{solve_power_flow, solve_power_flow_from, PowerFlowSolution};
pub use ybus::{build_ybus, network_residual};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type C64 = Complex64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetworkError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("bus {0} is defined more than once")]
    DuplicateBus(usize),
    #[error("unknown bus {0}")]
    UnknownBus(usize),
    #[error("network is not connected: bus {0} cannot be reached")]
    DisconnectedGraph(usize),
    #[error("expected exactly one slack bus, found {0}")]
    SlackCount(usize),
    #[error("power flow did not converge in {iterations} iterations (mismatch trace {trace:?})")]
    NonConvergence { iterations: usize, trace: Vec<f64> },
    #[error("singular power-flow Jacobian at iteration {0}")]
    SingularJacobian(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Slack,
    Pv,
    Pq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    pub kind: BusKind,
    pub v_set: f64,
    pub p_gen: f64,
    pub q_gen: f64,
    pub p_load: f64,
    pub q_load: f64,
    pub g_sh: f64,
    pub b_sh: f64,
}

impl Bus {
    pub fn new(id: usize, kind: BusKind, v_set: f64) -> Self {
        Self { id, kind, v_set, p_gen: 0.0, q_gen: 0.0, p_load: 0.0, q_load: 0.0, g_sh: 0.0, b_sh: 0.0 }
    }

    pub fn load(&self) -> C64 {
        C64::new(self.p_load, self.q_load)
    }
}

/// π-model branch. `tap = 0` means no transformer (unit ratio); the ratio
/// sits on the `from` side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    pub b: f64,
    pub tap: f64,
}

/// Two-axis machine data, system base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachineData {
    pub bus: usize,
    pub h: f64,
    pub d: f64,
    pub xd: f64,
    pub xd_p: f64,
    pub xq: f64,
    pub xq_p: f64,
    pub td0_p: f64,
    pub tq0_p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkModel {
    pub base_mva: f64,
    pub f_n: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub machines: Vec<MachineData>,
}

impl NetworkModel {
    pub fn new(buses: Vec<Bus>, branches: Vec<Branch>) -> Self {
        Self { base_mva: 100.0, f_n: 60.0, buses, branches, machines: Vec::new() }
    }

    /// The shipped WSCC 9-bus dataset.
    pub fn wscc9() -> Self {
        parse_dataset(include_str!("../../data/wscc9.net")).expect("bundled dataset parses")
    }

    pub fn n_bus(&self) -> usize {
        self.buses.len()
    }

    /// Position of bus `id` in `buses`.
    pub fn index_of(&self, id: usize) -> Result<usize, NetworkError> {
        self.buses.iter().position(|b| b.id == id).ok_or(NetworkError::UnknownBus(id))
    }

    pub fn slack_index(&self) -> Result<usize, NetworkError> {
        let slacks: Vec<usize> = (0..self.n_bus()).filter(|&k| self.buses[k].kind == BusKind::Slack).collect();
        match slacks.as_slice() {
            [k] => Ok(*k),
            _ => Err(NetworkError::SlackCount(slacks.len())),
        }
    }

    pub fn check_unique_ids(&self) -> Result<(), NetworkError> {
        let mut seen = std::collections::HashSet::new();
        for b in &self.buses {
            if !seen.insert(b.id) {
                return Err(NetworkError::DuplicateBus(b.id));
            }
        }
        Ok(())
    }

    /// Breadth-first reachability from the first bus.
    pub fn check_connected(&self) -> Result<(), NetworkError> {
        let n = self.n_bus();
        if n == 0 {
            return Ok(());
        }
        let mut adj = vec![Vec::new(); n];
        for br in &self.branches {
            let (f, t) = (self.index_of(br.from)?, self.index_of(br.to)?);
            adj[f].push(t);
            adj[t].push(f);
        }
        let mut seen = vec![false; n];
        let mut queue = std::collections::VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(k) = queue.pop_front() {
            for &m in &adj[k] {
                if !seen[m] {
                    seen[m] = true;
                    queue.push_back(m);
                }
            }
        }
        match seen.iter().position(|s| !s) {
            Some(k) => Err(NetworkError::DisconnectedGraph(self.buses[k].id)),
            None => Ok(()),
        }
    }
}
