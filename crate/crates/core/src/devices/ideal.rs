use serde::{Deserialize, Serialize};

use super::{current_from_power, push_complex, DeviceError, DeviceModel};
use crate::network::C64;
use crate::park::ParkVector;

/// Ideal sources: perfect tracking, no dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IdealKind {
    Slack {
        v_set: ParkVector<f64>,
    },
    CurrentSource {
        i_set: ParkVector<f64>,
    },
    /// Current of fixed magnitude at a fixed angle `phi` behind the voltage.
    ConstPfCurrentSource {
        i_mag: f64,
        phi: f64,
    },
    PqSource {
        s_set: ParkVector<f64>,
    },
    PvSource {
        p_set: f64,
        v_set: f64,
    },
}

/// Defining constraint residual of an ideal device, given its bus voltage
/// and injected current.
pub fn ideal_device_constraint(kind: &IdealKind, v: ParkVector<f64>, i: ParkVector<f64>) -> ParkVector<f64> {
    match *kind {
        IdealKind::Slack { v_set } => v - v_set,
        IdealKind::CurrentSource { i_set } => i - i_set,
        IdealKind::ConstPfCurrentSource { i_mag, phi } => {
            let m = v.magnitude();
            let dir = if m > 0.0 { v * (1.0 / m) } else { ParkVector::new(1.0, 0.0) };
            i - ParkVector::from_polar(i_mag, -phi) * dir
        }
        IdealKind::PqSource { s_set } => v * i.conj() - s_set,
        IdealKind::PvSource { p_set, v_set } => ParkVector::new(v.magnitude() - v_set, (v * i.conj()).d - p_set),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdealDevice {
    pub name: String,
    pub bus: usize,
    pub kind: IdealKind,
}

impl IdealDevice {
    /// Builds the device from its power-flow operating point and returns
    /// the initial algebraic variables (the injected current).
    pub fn from_operating_point(
        name: impl Into<String>,
        bus: usize,
        template: IdealKind,
        v0: C64,
        s0: C64,
    ) -> (Self, Vec<f64>) {
        let i0 = current_from_power(s0, v0);
        let p = |z: C64| ParkVector::new(z.re, z.im);
        let kind = match template {
            IdealKind::Slack { .. } => IdealKind::Slack { v_set: p(v0) },
            IdealKind::CurrentSource { .. } => IdealKind::CurrentSource { i_set: p(i0) },
            IdealKind::ConstPfCurrentSource { .. } => {
                IdealKind::ConstPfCurrentSource { i_mag: i0.norm(), phi: v0.arg() - i0.arg() }
            }
            IdealKind::PqSource { .. } => IdealKind::PqSource { s_set: p(s0) },
            IdealKind::PvSource { .. } => IdealKind::PvSource { p_set: s0.re, v_set: v0.norm() },
        };
        (Self { name: name.into(), bus, kind }, vec![i0.re, i0.im])
    }
}

impl DeviceModel for IdealDevice {
    fn name(&self) -> &str {
        &self.name
    }
    fn bus(&self) -> usize {
        self.bus
    }
    fn n_diff(&self) -> usize {
        0
    }
    fn n_alg(&self) -> usize {
        2
    }
    fn eval(&self, v: C64, _x: &[f64], y: &[f64], _f: &mut [f64], g: &mut [f64]) -> Result<C64, DeviceError> {
        let i = C64::new(y[0], y[1]);
        let r = ideal_device_constraint(&self.kind, ParkVector::new(v.re, v.im), ParkVector::new(i.re, i.im));
        g[0] = r.d;
        g[1] = r.q;
        Ok(i)
    }
    fn signals(&self, v: C64, _x: &[f64], y: &[f64]) -> Result<Vec<(&'static str, f64)>, DeviceError> {
        let i = C64::new(y[0], y[1]);
        let mut out = Vec::with_capacity(4);
        push_complex(&mut out, ["id", "iq"], i);
        push_complex(&mut out, ["p", "q"], v * i.conj());
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type P = ParkVector<f64>;

    #[test]
    fn residuals_vanish_at_setpoint() {
        let v = P::new(1.02, 0.1);
        let i = P::new(0.5, -0.2);
        let s = v * i.conj();
        let kinds = [
            IdealKind::Slack { v_set: v },
            IdealKind::CurrentSource { i_set: i },
            IdealKind::ConstPfCurrentSource { i_mag: i.magnitude(), phi: v.phase().unwrap() - i.phase().unwrap() },
            IdealKind::PqSource { s_set: s },
            IdealKind::PvSource { p_set: s.d, v_set: v.magnitude() },
        ];
        for k in &kinds {
            assert!(ideal_device_constraint(k, v, i).magnitude() < 1e-14, "{k:?}");
        }
        let r = ideal_device_constraint(&kinds[0], v + P::new(0.01, 0.0), i);
        assert!((r.d - 0.01).abs() < 1e-15);
    }

    #[test]
    fn const_pf_follows_voltage_angle() {
        let k = IdealKind::ConstPfCurrentSource { i_mag: 0.5, phi: 0.3 };
        let v = P::from_polar(0.9, 0.7);
        let i = P::from_polar(0.5, 0.4);
        assert!(ideal_device_constraint(&k, v, i).magnitude() < 1e-14);
    }

    #[test]
    fn operating_point_templates() {
        let v0 = C64::from_polar(1.01, 0.05);
        let s0 = C64::new(0.4, 0.1);
        let t = IdealKind::PvSource { p_set: 0.0, v_set: 0.0 };
        let (d, y) = IdealDevice::from_operating_point("pv", 0, t, v0, s0);
        let mut g = [0.0; 2];
        d.eval(v0, &[], &y, &mut [], &mut g).unwrap();
        assert!(g.iter().all(|r| r.abs() < 1e-14));
    }
}
