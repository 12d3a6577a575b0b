use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::{build_ybus, BusKind, NetworkError, NetworkModel, C64};

pub const PF_TOL: f64 = 1e-10;
pub const PF_MAX_ITER: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerFlowSolution {
    /// Bus voltages, network frame.
    pub v: Vec<C64>,
    /// Net complex power injected into the network at each bus.
    pub s_bus: Vec<C64>,
    /// Infinity norm of the final mismatch (pu).
    pub mismatch: f64,
    pub iterations: usize,
}

impl PowerFlowSolution {
    /// Power delivered by generation at bus `k`: net injection plus local
    /// load minus any extra fixed injection used in the solve.
    pub fn generation(&self, model: &NetworkModel, k: usize, extra: C64) -> C64 {
        self.s_bus[k] + model.buses[k].load() - extra
    }
}

/// Newton–Raphson in polar coordinates from a flat start. `extra` adds a
/// fixed complex injection per bus (empty slice for none).
pub fn solve_power_flow(model: &NetworkModel, extra: &[C64]) -> Result<PowerFlowSolution, NetworkError> {
    let v0: Vec<C64> = model
        .buses
        .iter()
        .map(|b| match b.kind {
            BusKind::Pq => C64::new(1.0, 0.0),
            _ => C64::new(b.v_set, 0.0),
        })
        .collect();
    solve_power_flow_from(model, extra, &v0)
}

fn injections(y: &DMatrix<C64>, v: &[C64]) -> (Vec<C64>, Vec<C64>) {
    let n = v.len();
    let i: Vec<C64> = (0..n).map(|k| (0..n).map(|m| y[(k, m)] * v[m]).sum()).collect();
    let s = (0..n).map(|k| v[k] * i[k].conj()).collect();
    (i, s)
}

pub fn solve_power_flow_from(
    model: &NetworkModel,
    extra: &[C64],
    v_start: &[C64],
) -> Result<PowerFlowSolution, NetworkError> {
    let y = build_ybus(model)?;
    model.slack_index()?;
    let n = model.n_bus();
    let sched: Vec<C64> = (0..n)
        .map(|k| {
            let b = &model.buses[k];
            C64::new(b.p_gen - b.p_load, b.q_gen - b.q_load) + extra.get(k).copied().unwrap_or_default()
        })
        .collect();
    let pv_pq: Vec<usize> = (0..n).filter(|&k| model.buses[k].kind != BusKind::Slack).collect();
    let pq: Vec<usize> = (0..n).filter(|&k| model.buses[k].kind == BusKind::Pq).collect();
    let (na, nm) = (pv_pq.len(), pq.len());

    let mut va: Vec<f64> = v_start.iter().map(|v| v.arg()).collect();
    let mut vm: Vec<f64> = v_start.iter().map(|v| v.norm()).collect();
    for (k, b) in model.buses.iter().enumerate() {
        if b.kind != BusKind::Pq {
            vm[k] = b.v_set;
        }
    }
    let mut trace = Vec::new();
    for it in 0..=PF_MAX_ITER {
        let v: Vec<C64> = (0..n).map(|k| C64::from_polar(vm[k], va[k])).collect();
        let (i, s) = injections(&y, &v);
        let mut f = DVector::zeros(na + nm);
        for (r, &k) in pv_pq.iter().enumerate() {
            f[r] = s[k].re - sched[k].re;
        }
        for (r, &k) in pq.iter().enumerate() {
            f[na + r] = s[k].im - sched[k].im;
        }
        let norm = f.amax();
        trace.push(norm);
        if norm < PF_TOL {
            return Ok(PowerFlowSolution { v, s_bus: s, mismatch: norm, iterations: it });
        }
        if it == PF_MAX_ITER {
            break;
        }
        // dS/dθ and dS/d|V|
        let mut ds_da = DMatrix::from_element(n, n, C64::default());
        let mut ds_dm = DMatrix::from_element(n, n, C64::default());
        for a in 0..n {
            let e = v[a] / vm[a];
            for b in 0..n {
                let yv = y[(a, b)] * v[b];
                let mut da = -C64::i() * v[a] * yv.conj();
                let mut dm = v[a] * (y[(a, b)] * v[b] / vm[b]).conj();
                if a == b {
                    da += C64::i() * v[a] * i[a].conj();
                    dm += i[a].conj() * e;
                }
                ds_da[(a, b)] = da;
                ds_dm[(a, b)] = dm;
            }
        }
        let mut jac = DMatrix::zeros(na + nm, na + nm);
        for (r, &k) in pv_pq.iter().enumerate() {
            for (c, &m) in pv_pq.iter().enumerate() {
                jac[(r, c)] = ds_da[(k, m)].re;
            }
            for (c, &m) in pq.iter().enumerate() {
                jac[(r, na + c)] = ds_dm[(k, m)].re;
            }
        }
        for (r, &k) in pq.iter().enumerate() {
            for (c, &m) in pv_pq.iter().enumerate() {
                jac[(na + r, c)] = ds_da[(k, m)].im;
            }
            for (c, &m) in pq.iter().enumerate() {
                jac[(na + r, na + c)] = ds_dm[(k, m)].im;
            }
        }
        let dx = jac.lu().solve(&(-f)).ok_or(NetworkError::SingularJacobian(it))?;
        for (r, &k) in pv_pq.iter().enumerate() {
            va[k] += dx[r];
        }
        for (r, &k) in pq.iter().enumerate() {
            vm[k] += dx[na + r];
        }
    }
    Err(NetworkError::NonConvergence { iterations: PF_MAX_ITER, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Branch, Bus};
    use approx::assert_abs_diff_eq;

    fn radial(p: f64, q: f64) -> NetworkModel {
        let mut load = Bus::new(2, BusKind::Pq, 1.0);
        load.p_load = p;
        load.q_load = q;
        NetworkModel::new(
            vec![Bus::new(1, BusKind::Slack, 1.0), load],
            vec![Branch { from: 1, to: 2, r: 0.0, x: 0.1, b: 0.0, tap: 0.0 }],
        )
    }

    #[test]
    fn unloaded_two_bus() {
        let mut m = radial(0.0, 0.0);
        m.buses[0].v_set = 1.05;
        let sol = solve_power_flow(&m, &[]).unwrap();
        assert_abs_diff_eq!(sol.v[1].norm(), 1.05, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.v[1].arg(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn radial_purely_reactive_load() {
        // V2 real; q = V2 (1 − V2)/x  →  V2² − V2 + q x = 0
        let (q, x): (f64, f64) = (0.5, 0.1);
        let v2 = (1.0 + (1.0 - 4.0 * q * x).sqrt()) / 2.0;
        let sol = solve_power_flow(&radial(0.0, q), &[]).unwrap();
        assert_abs_diff_eq!(sol.v[1].norm(), v2, epsilon = 1e-10);
        assert!(sol.mismatch < PF_TOL);
    }

    #[test]
    fn nonconvergence_reports_trace() {
        let e = solve_power_flow(&radial(0.0, 20.0), &[]).unwrap_err();
        match e {
            NetworkError::NonConvergence { trace, .. } => assert_eq!(trace.len(), PF_MAX_ITER + 1),
            NetworkError::SingularJacobian(_) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rerun_from_solution_needs_at_most_one_iteration() {
        let m = NetworkModel::wscc9();
        let sol = solve_power_flow(&m, &[]).unwrap();
        let again = solve_power_flow_from(&m, &[], &sol.v).unwrap();
        assert!(again.iterations <= 1);
    }

    #[test]
    fn extra_injection_acts_like_negative_load() {
        let m = radial(0.4, 0.1);
        let a = solve_power_flow(&m, &[]).unwrap();
        let m2 = radial(0.6, 0.2);
        let b = solve_power_flow(&m2, &[C64::default(), C64::new(0.2, 0.1)]).unwrap();
        assert_abs_diff_eq!((a.v[1] - b.v[1]).norm(), 0.0, epsilon = 1e-10);
    }
}
