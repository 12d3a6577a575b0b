use serde::{Deserialize, Serialize};

use super::{check_grid, derivative, estimate_cf, AnalysisError};
use crate::park::{ComplexFrequency, ParkVector};
use crate::sim::TimeSeries;

/// Samples within this many steps of an event are excluded from residuals.
pub const EVENT_WINDOW_STEPS: f64 = 3.0;

/// An analytical relation between channels that must hold along a
/// trajectory. `bus` is the bus the device is connected to. Rates are in
/// 1/s where they appear as parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IdentityKind {
    /// `ṡ = (η_v + η_i*)·s` for any device.
    ComplexPower { device: String, bus: usize },
    /// Voltage imposed by an ideal source: `ṡ = η_i*·s`.
    Slack { device: String, bus: usize },
    /// Constant current: `ṡ = η_v·s`.
    CurrentSource { device: String, bus: usize },
    /// Constant magnitude and power factor: `η_i = jω_v`.
    ConstantPowerFactor { device: String, bus: usize },
    /// Constant power: `η_v + η_i* = 0`.
    ConstantPower { device: String, bus: usize },
    /// Constant admittance: `ṡ = 2ρ_v·s`.
    ConstantAdmittance { device: String, bus: usize },
    /// PV: `q·(ω_v − ω_i) − p·ρ_i = 0`.
    PvBus { device: String, bus: usize },
    /// Averaged current loop with feed-forward:
    /// `(η_i' + κ)·i' = (η_iref + κ)·i_ref`.
    CurrentController { device: String, kappa: f64 },
    /// Averaged current loop without feed-forward: adds
    /// `−(η_v' + κ)·v'/K_p` on the right.
    CurrentControllerNoVff { device: String, kappa: f64, kp: f64 },
    /// Constant current reference: `η_iref = 0`.
    ConstantCurrentReference { device: String },
    /// Constant power reference: `ṡ = (η_v' − κ)·(s − s_ref)`.
    PowerReference { device: String, kappa: f64 },
    /// Current-controller non-ideality: `ṡ = η_v'·s + Δṡ` with
    /// `Δṡ = −κ²·x*·v'`.
    NonIdealCurrentControl { device: String, kappa: f64 },
    /// dc link: `ρ_dc = i_dc/(C_dc·v_dc)`.
    DcLink { device: String, c_dc: f64 },
    /// Q/V droop reference: `η_vref·v_ref = (m_q/T_f)(Q − q_h)`.
    QvDroopReference { device: String, m_q: f64, t_f: f64 },
    /// Virtual-flux reference changes magnitude only: `Im η_vref = 0`.
    VirtualFluxReference { device: String },
}

impl IdentityKind {
    pub fn label(&self) -> String {
        let (tag, dev) = match self {
            Self::ComplexPower { device, .. } => ("complex_power", device),
            Self::Slack { device, .. } => ("slack", device),
            Self::CurrentSource { device, .. } => ("current_source", device),
            Self::ConstantPowerFactor { device, .. } => ("constant_power_factor", device),
            Self::ConstantPower { device, .. } => ("constant_power", device),
            Self::ConstantAdmittance { device, .. } => ("constant_admittance", device),
            Self::PvBus { device, .. } => ("pv_bus", device),
            Self::CurrentController { device, .. } => ("current_controller", device),
            Self::CurrentControllerNoVff { device, .. } => ("current_controller_no_vff", device),
            Self::ConstantCurrentReference { device } => ("constant_current_reference", device),
            Self::PowerReference { device, .. } => ("power_reference", device),
            Self::NonIdealCurrentControl { device, .. } => ("non_ideal_current_control", device),
            Self::DcLink { device, .. } => ("dc_link", device),
            Self::QvDroopReference { device, .. } => ("qv_droop_reference", device),
            Self::VirtualFluxReference { device } => ("virtual_flux_reference", device),
        };
        format!("{dev}.{tag}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityReport {
    pub label: String,
    /// `|LHS − RHS|` per sample; NaN where excluded.
    pub residual: Vec<f64>,
    pub max_abs: f64,
    /// Largest of `|LHS|`, `|RHS|` over the included samples.
    pub scale: f64,
    /// `max_abs / scale`, or `max_abs` when the scale vanishes.
    pub max_relative: f64,
}

struct Ctx<'a> {
    ts: &'a TimeSeries,
    dt: f64,
    wn: f64,
}

type Cx = ParkVector<f64>;

impl Ctx<'_> {
    fn ch(&self, name: &str) -> Result<&[f64], AnalysisError> {
        self.ts.channel(name).ok_or_else(|| AnalysisError::MissingChannel(name.to_string()))
    }

    fn park(&self, d: &str, q: &str) -> Result<Vec<Cx>, AnalysisError> {
        let (d, q) = (self.ch(d)?, self.ch(q)?);
        Ok(d.iter().zip(q).map(|(&d, &q)| Cx::new(d, q)).collect())
    }

    fn dev(&self, device: &str, d: &str, q: &str) -> Result<Vec<Cx>, AnalysisError> {
        self.park(&format!("{device}.{d}"), &format!("{device}.{q}"))
    }

    fn bus_v(&self, bus: usize) -> Result<Vec<Cx>, AnalysisError> {
        self.park(&format!("bus{bus}.vd"), &format!("bus{bus}.vq"))
    }

    fn cf(&self, u: &[Cx]) -> Result<Vec<ComplexFrequency<f64>>, AnalysisError> {
        Ok(estimate_cf(&self.ts.time, u, self.wn)?.eta)
    }

    /// Time derivative in pu of `ω_n`.
    fn rate(&self, u: &[Cx]) -> Vec<Cx> {
        let d: Vec<f64> = u.iter().map(|c| c.d).collect();
        let q: Vec<f64> = u.iter().map(|c| c.q).collect();
        let (dd, dq) = (derivative(&d, self.dt), derivative(&q, self.dt));
        dd.iter().zip(&dq).map(|(a, b)| Cx::new(a / self.wn, b / self.wn)).collect()
    }
}

fn cx(e: &ComplexFrequency<f64>) -> Cx {
    e.as_park()
}

/// Evaluates an identity along `ts`. Derivatives are central differences
/// on the sample grid; samples within [`EVENT_WINDOW_STEPS`] steps of any
/// time in `events` are excluded.
pub fn identity_residual(
    kind: &IdentityKind,
    ts: &TimeSeries,
    events: &[f64],
    omega_n: f64,
) -> Result<IdentityReport, AnalysisError> {
    let dt = check_grid(&ts.time)?;
    let c = Ctx { ts, dt, wn: omega_n };
    let (lhs, rhs): (Vec<Cx>, Vec<Cx>) = match kind {
        IdentityKind::ComplexPower { device, bus } => {
            let v = c.bus_v(*bus)?;
            let i = c.dev(device, "id", "iq")?;
            let s = c.dev(device, "p", "q")?;
            let (ev, ei) = (c.cf(&v)?, c.cf(&i)?);
            let rhs = (0..s.len()).map(|k| (cx(&ev[k]) + cx(&ei[k]).conj()) * s[k]).collect();
            (c.rate(&s), rhs)
        }
        IdentityKind::Slack { device, .. } => {
            let i = c.dev(device, "id", "iq")?;
            let s = c.dev(device, "p", "q")?;
            let ei = c.cf(&i)?;
            let rhs = (0..s.len()).map(|k| cx(&ei[k]).conj() * s[k]).collect();
            (c.rate(&s), rhs)
        }
        IdentityKind::CurrentSource { device, bus } => {
            let v = c.bus_v(*bus)?;
            let s = c.dev(device, "p", "q")?;
            let ev = c.cf(&v)?;
            let rhs = (0..s.len()).map(|k| cx(&ev[k]) * s[k]).collect();
            (c.rate(&s), rhs)
        }
        IdentityKind::ConstantPowerFactor { device, bus } => {
            let ev = c.cf(&c.bus_v(*bus)?)?;
            let ei = c.cf(&c.dev(device, "id", "iq")?)?;
            (ei.iter().map(cx).collect(), ev.iter().map(|e| Cx::new(0.0, e.omega)).collect())
        }
        IdentityKind::ConstantPower { device, bus } => {
            let ev = c.cf(&c.bus_v(*bus)?)?;
            let ei = c.cf(&c.dev(device, "id", "iq")?)?;
            (ev.iter().map(cx).collect(), ei.iter().map(|e| -cx(e).conj()).collect())
        }
        IdentityKind::ConstantAdmittance { device, bus } => {
            let ev = c.cf(&c.bus_v(*bus)?)?;
            let s = c.dev(device, "p", "q")?;
            let rhs = (0..s.len()).map(|k| s[k] * (2.0 * ev[k].rho)).collect();
            (c.rate(&s), rhs)
        }
        IdentityKind::PvBus { device, bus } => {
            let ev = c.cf(&c.bus_v(*bus)?)?;
            let ei = c.cf(&c.dev(device, "id", "iq")?)?;
            let s = c.dev(device, "p", "q")?;
            let lhs = (0..s.len()).map(|k| Cx::new(s[k].q * (ev[k].omega - ei[k].omega), 0.0)).collect();
            let rhs = (0..s.len()).map(|k| Cx::new(s[k].d * ei[k].rho, 0.0)).collect();
            (lhs, rhs)
        }
        IdentityKind::CurrentController { device, kappa }
        | IdentityKind::CurrentControllerNoVff { device, kappa, .. } => {
            let k = kappa / omega_n;
            let i = c.dev(device, "ipd", "ipq")?;
            let ir = c.dev(device, "irefd", "irefq")?;
            let (di, dir) = (c.rate(&i), c.rate(&ir));
            let lhs = (0..i.len()).map(|n| di[n] + i[n] * k).collect();
            let mut rhs: Vec<Cx> = (0..i.len()).map(|n| dir[n] + ir[n] * k).collect();
            if let IdentityKind::CurrentControllerNoVff { kp, .. } = kind {
                let v = c.dev(device, "vpd", "vpq")?;
                let dv = c.rate(&v);
                for n in 0..rhs.len() {
                    rhs[n] = rhs[n] - (dv[n] + v[n] * k) * (1.0 / kp);
                }
            }
            (lhs, rhs)
        }
        IdentityKind::ConstantCurrentReference { device } => {
            let ir = c.dev(device, "irefd", "irefq")?;
            (c.rate(&ir), vec![Cx::zero(); ir.len()])
        }
        IdentityKind::PowerReference { device, kappa } => {
            let k = kappa / omega_n;
            let s = c.dev(device, "ph", "qh")?;
            let sr = c.dev(device, "srefp", "srefq")?;
            let el = c.cf(&c.dev(device, "vpd", "vpq")?)?;
            let rhs = (0..s.len()).map(|n| (cx(&el[n]) - Cx::new(k, 0.0)) * (s[n] - sr[n])).collect();
            (c.rate(&s), rhs)
        }
        IdentityKind::NonIdealCurrentControl { device, kappa } => {
            let s = c.dev(device, "ph", "qh")?;
            let v = c.dev(device, "vpd", "vpq")?;
            let x = c.dev(device, "xd", "xq")?;
            let el = c.cf(&v)?;
            let rhs = (0..s.len())
                .map(|n| cx(&el[n]) * s[n] + super::delta_sdot(x[n], v[n], *kappa) * (1.0 / omega_n))
                .collect();
            (c.rate(&s), rhs)
        }
        IdentityKind::DcLink { device, c_dc } => {
            let vdc = c.ch(&format!("{device}.v_dc"))?;
            let idc = c.ch(&format!("{device}.i_dc"))?;
            let d = derivative(vdc, dt);
            let lhs = (0..vdc.len()).map(|n| Cx::new(d[n] / vdc[n], 0.0)).collect();
            let rhs = (0..vdc.len()).map(|n| Cx::new(idc[n] / (c_dc * vdc[n]), 0.0)).collect();
            (lhs, rhs)
        }
        IdentityKind::QvDroopReference { device, m_q, t_f } => {
            let vr = c.dev(device, "vrefd", "vrefq")?;
            let qf = c.ch(&format!("{device}.qf"))?;
            let qh = c.ch(&format!("{device}.qh"))?;
            let rhs = (0..vr.len()).map(|n| Cx::new(m_q / t_f * (qf[n] - qh[n]) / omega_n, 0.0)).collect();
            (c.rate(&vr), rhs)
        }
        IdentityKind::VirtualFluxReference { device } => {
            let er = c.cf(&c.dev(device, "vrefd", "vrefq")?)?;
            (er.iter().map(|e| Cx::new(0.0, e.omega)).collect(), vec![Cx::zero(); er.len()])
        }
    };
    Ok(summarise(kind.label(), &ts.time, dt, events, &lhs, &rhs))
}

fn summarise(label: String, time: &[f64], dt: f64, events: &[f64], lhs: &[Cx], rhs: &[Cx]) -> IdentityReport {
    let window = EVENT_WINDOW_STEPS * dt * (1.0 + 1e-9);
    let mut residual = vec![f64::NAN; lhs.len()];
    let (mut max_abs, mut scale) = (0.0f64, 0.0f64);
    for k in 0..lhs.len() {
        if events.iter().any(|&te| (time[k] - te).abs() <= window) {
            continue;
        }
        let r = (lhs[k] - rhs[k]).magnitude();
        if !r.is_finite() {
            continue;
        }
        residual[k] = r;
        max_abs = max_abs.max(r);
        scale = scale.max(lhs[k].magnitude()).max(rhs[k].magnitude());
    }
    let max_relative = if scale > 1e-12 { max_abs / scale } else { max_abs };
    IdentityReport { label, residual, max_abs, scale, max_relative }
}
