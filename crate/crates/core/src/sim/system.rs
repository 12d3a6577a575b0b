//! The assembled power system: network plus devices as one DAE.
//!
//! Algebraic variables are the bus voltages (real and imaginary part per
//! bus, network frame) followed by the devices' own algebraic variables.

use std::collections::HashSet;

use nalgebra::DMatrix;

use super::{Dae, SimError};
use crate::devices::{
    DeviceAction, DeviceError, DeviceModel, GflConverter, GflParams, GfmConverter, GfmParams, IdealDevice, IdealKind,
    LoadKind, StaticLoad, SyncMachine4,
};
use crate::network::{build_ybus, solve_power_flow, NetworkModel, PowerFlowSolution, C64};

/// Tolerance on state derivatives and algebraic residuals at initialization.
pub const EQUILIBRIUM_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub enum DeviceKindSpec {
    Gfl(GflParams),
    Gfm(GfmParams),
    Ideal(IdealKind),
}

/// A converter or ideal device to attach. Without `s`, the device takes over
/// the generation of its bus, whose machine must then be replaced.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceSpec {
    pub name: String,
    pub bus_id: usize,
    pub s: Option<C64>,
    pub kind: DeviceKindSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    pub network: NetworkModel,
    /// Buses whose load is constant power instead of constant admittance.
    pub constant_power_loads: Vec<usize>,
    /// Buses whose machine is removed.
    pub replace_machines: Vec<usize>,
    pub devices: Vec<DeviceSpec>,
}

impl SystemSpec {
    pub fn new(network: NetworkModel) -> Self {
        Self { network, constant_power_loads: Vec::new(), replace_machines: Vec::new(), devices: Vec::new() }
    }
}

struct Slot {
    model: Box<dyn DeviceModel>,
    x: usize,
    y: usize,
}

pub struct PowerSystem {
    pub network: NetworkModel,
    pub ybus: DMatrix<C64>,
    pub power_flow: PowerFlowSolution,
    pub omega_b: f64,
    slots: Vec<Slot>,
    n_x: usize,
    n_y: usize,
}

fn dev_err(name: &str) -> impl Fn(DeviceError) -> SimError + '_ {
    move |e| SimError::Device { device: name.to_string(), source: e }
}

impl PowerSystem {
    /// Solves the power flow and initializes every device from it. Returns
    /// the system and the initial `(x, y)`.
    pub fn build(spec: &SystemSpec) -> Result<(Self, Vec<f64>, Vec<f64>), SimError> {
        let net = &spec.network;
        let ybus = build_ybus(net)?;
        let omega_b = 2.0 * std::f64::consts::PI * net.f_n;
        let n = net.n_bus();

        let mut names = HashSet::new();
        for d in &spec.devices {
            if !names.insert(d.name.clone()) {
                return Err(SimError::Validation(format!("duplicate device name {:?}", d.name)));
            }
        }
        for b in spec.replace_machines.iter().chain(&spec.constant_power_loads) {
            net.index_of(*b)?;
        }
        let mut extra = vec![C64::default(); n];
        for d in &spec.devices {
            let k = net.index_of(d.bus_id)?;
            if let Some(s) = d.s {
                extra[k] += s;
            }
        }
        let pf = solve_power_flow(net, &extra)?;

        let mut sys = PowerSystem {
            network: net.clone(),
            ybus,
            power_flow: pf.clone(),
            omega_b,
            slots: Vec::new(),
            n_x: 0,
            n_y: 2 * n,
        };
        let mut x0 = Vec::new();
        let mut y0: Vec<f64> = pf.v.iter().flat_map(|v| [v.re, v.im]).collect();
        let mut push = |sys: &mut PowerSystem, model: Box<dyn DeviceModel>, x: Vec<f64>, y: Vec<f64>| {
            sys.slots.push(Slot { model, x: sys.n_x, y: sys.n_y });
            sys.n_x += x.len();
            sys.n_y += y.len();
            x0.extend(x);
            y0.extend(y);
        };

        for (k, b) in net.buses.iter().enumerate() {
            let s = b.load();
            if s != C64::default() {
                let kind = if spec.constant_power_loads.contains(&b.id) {
                    LoadKind::ConstantPower
                } else {
                    LoadKind::ConstantAdmittance
                };
                let name = format!("load{}", b.id);
                let l = StaticLoad::new(name.clone(), k, kind, s, pf.v[k]).map_err(dev_err(&name))?;
                push(&mut sys, Box::new(l), vec![], vec![]);
            }
        }

        // generation left for machines or takeover devices at each bus
        let mut gen: Vec<C64> = (0..n).map(|k| pf.generation(net, k, extra[k])).collect();
        for m in &net.machines {
            if spec.replace_machines.contains(&m.bus) {
                continue;
            }
            let k = net.index_of(m.bus)?;
            let name = format!("gen{}", m.bus);
            let (sm, x) = SyncMachine4::from_operating_point(name.clone(), k, m, omega_b, pf.v[k], gen[k])
                .map_err(dev_err(&name))?;
            gen[k] = C64::default();
            push(&mut sys, Box::new(sm), x, vec![]);
        }

        for d in &spec.devices {
            let k = net.index_of(d.bus_id)?;
            let s0 = match d.s {
                Some(s) => s,
                None => {
                    if !spec.replace_machines.contains(&d.bus_id) && net.machines.iter().any(|m| m.bus == d.bus_id) {
                        return Err(SimError::Validation(format!(
                            "device {:?} has no setpoint and bus {} keeps its machine",
                            d.name, d.bus_id
                        )));
                    }
                    std::mem::take(&mut gen[k])
                }
            };
            let v0 = pf.v[k];
            let e = dev_err(&d.name);
            match &d.kind {
                DeviceKindSpec::Gfl(p) => {
                    let (c, x) =
                        GflConverter::from_operating_point(d.name.clone(), k, *p, omega_b, v0, s0).map_err(e)?;
                    push(&mut sys, Box::new(c), x, vec![]);
                }
                DeviceKindSpec::Gfm(p) => {
                    let (c, x) =
                        GfmConverter::from_operating_point(d.name.clone(), k, *p, omega_b, v0, s0).map_err(e)?;
                    push(&mut sys, Box::new(c), x, vec![]);
                }
                DeviceKindSpec::Ideal(t) => {
                    let (c, y) = IdealDevice::from_operating_point(d.name.clone(), k, *t, v0, s0);
                    push(&mut sys, Box::new(c), vec![], y);
                }
            }
        }
        for (k, g) in gen.iter().enumerate() {
            if g.norm() > EQUILIBRIUM_TOL {
                return Err(SimError::InitializationInfeasible {
                    device: format!("bus{}", net.buses[k].id),
                    residual: g.norm(),
                });
            }
        }
        Ok((sys, x0, y0))
    }

    pub fn n_bus(&self) -> usize {
        self.network.n_bus()
    }

    pub fn bus_voltage(&self, y: &[f64], k: usize) -> C64 {
        C64::new(y[2 * k], y[2 * k + 1])
    }

    pub fn device_names(&self) -> Vec<&str> {
        self.slots.iter().map(|s| s.model.name()).collect()
    }

    /// Applies `action` to the named device.
    pub fn apply(&mut self, device: &str, action: DeviceAction) -> Result<(), SimError> {
        let slot = self
            .slots
            .iter_mut()
            .find(|s| s.model.name() == device)
            .ok_or_else(|| SimError::Validation(format!("no device named {device:?}")))?;
        if slot.model.apply(action) {
            Ok(())
        } else {
            Err(SimError::Validation(format!("device {device:?} does not accept {action:?}")))
        }
    }

    /// Injections per bus and the derivative/residual vectors.
    fn evaluate(&self, x: &[f64], y: &[f64], f: &mut [f64], g: &mut [f64]) -> Result<Vec<C64>, SimError> {
        let n = self.n_bus();
        let mut inj = vec![C64::default(); n];
        for s in &self.slots {
            let m = &s.model;
            let (nx, ny) = (m.n_diff(), m.n_alg());
            let v = self.bus_voltage(y, m.bus());
            let i = m
                .eval(v, &x[s.x..s.x + nx], &y[s.y..s.y + ny], &mut f[s.x..s.x + nx], &mut g[s.y..s.y + ny])
                .map_err(dev_err(m.name()))?;
            inj[m.bus()] += i;
        }
        Ok(inj)
    }

    /// `(max |network residual|, |Σ device power − Σ network power|)`.
    pub fn hygiene(&self, x: &[f64], y: &[f64]) -> Result<(f64, f64), SimError> {
        let mut f = vec![0.0; self.n_x];
        let mut g = vec![0.0; self.n_y];
        let inj = self.evaluate(x, y, &mut f, &mut g)?;
        let n = self.n_bus();
        let v: Vec<C64> = (0..n).map(|k| self.bus_voltage(y, k)).collect();
        let res = crate::network::network_residual(&self.ybus, &v, &inj);
        let max_res = res.iter().map(|r| r.norm()).fold(0.0, f64::max);
        let s_dev: C64 = (0..n).map(|k| v[k] * inj[k].conj()).sum();
        let s_net: C64 = (0..n).map(|k| v[k] * (0..n).map(|m| self.ybus[(k, m)] * v[m]).sum::<C64>().conj()).sum();
        Ok((max_res, (s_dev - s_net).norm()))
    }

    /// Fails with the first device whose derivatives or residuals exceed
    /// `tol`.
    pub fn verify_equilibrium(&self, x: &[f64], y: &[f64], tol: f64) -> Result<(), SimError> {
        let mut f = vec![0.0; self.n_x];
        let mut g = vec![0.0; self.n_y];
        self.residual(0.0, x, y, &mut f, &mut g)?;
        let amax = |s: &[f64]| s.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        for s in &self.slots {
            let m = &s.model;
            let r = amax(&f[s.x..s.x + m.n_diff()]).max(amax(&g[s.y..s.y + m.n_alg()]));
            if !(r < tol) {
                return Err(SimError::InitializationInfeasible { device: m.name().to_string(), residual: r });
            }
        }
        let r = amax(&g[..2 * self.n_bus()]);
        if !(r < tol) {
            return Err(SimError::InitializationInfeasible { device: "network".into(), residual: r });
        }
        Ok(())
    }

    /// `<device>.x<k>` for every differential state, in state order.
    pub fn state_names(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.n_x);
        for s in &self.slots {
            out.extend((0..s.model.n_diff()).map(|k| format!("{}.x{k}", s.model.name())));
        }
        out
    }

    /// Channel names in recording order.
    pub fn channel_names(&self, x: &[f64], y: &[f64]) -> Result<Vec<String>, SimError> {
        let mut names = Vec::new();
        for b in &self.network.buses {
            for s in ["vd", "vq", "vm", "va"] {
                names.push(format!("bus{}.{s}", b.id));
            }
        }
        for s in &self.slots {
            let m = &s.model;
            let v = self.bus_voltage(y, m.bus());
            let sig = m.signals(v, &x[s.x..s.x + m.n_diff()], &y[s.y..s.y + m.n_alg()]).map_err(dev_err(m.name()))?;
            names.extend(sig.iter().map(|(n, _)| format!("{}.{n}", m.name())));
        }
        names.push("system.net_residual".into());
        names.push("system.power_balance".into());
        Ok(names)
    }

    /// One sample of every channel, in `channel_names` order.
    pub fn sample(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>, SimError> {
        let mut row = Vec::new();
        for k in 0..self.n_bus() {
            let v = self.bus_voltage(y, k);
            row.extend([v.re, v.im, v.norm(), v.arg()]);
        }
        for s in &self.slots {
            let m = &s.model;
            let v = self.bus_voltage(y, m.bus());
            let sig = m.signals(v, &x[s.x..s.x + m.n_diff()], &y[s.y..s.y + m.n_alg()]).map_err(dev_err(m.name()))?;
            row.extend(sig.iter().map(|(_, val)| *val));
        }
        let (res, bal) = self.hygiene(x, y)?;
        row.push(res);
        row.push(bal);
        Ok(row)
    }

    /// Inertia `M` of every machine, keyed by device name.
    pub fn machine_inertias(&self) -> Vec<(String, f64)> {
        self.slots.iter().filter_map(|s| s.model.inertia().map(|m| (s.model.name().to_string(), m))).collect()
    }
}

impl Dae for PowerSystem {
    fn n_diff(&self) -> usize {
        self.n_x
    }
    fn n_alg(&self) -> usize {
        self.n_y
    }
    fn residual(&self, _t: f64, x: &[f64], y: &[f64], f: &mut [f64], g: &mut [f64]) -> Result<(), SimError> {
        let n = self.n_bus();
        let inj = self.evaluate(x, y, f, g)?;
        for k in 0..n {
            let mut yv = C64::default();
            for m in 0..n {
                yv += self.ybus[(k, m)] * self.bus_voltage(y, m);
            }
            let r = inj[k] - yv;
            g[2 * k] = r.re;
            g[2 * k + 1] = r.im;
        }
        Ok(())
    }
}
