use std::f64::consts::FRAC_PI_2;

use super::{push_complex, DeviceAction, DeviceError, DeviceModel};
use crate::network::{MachineData, C64};

/// Two-axis (fourth order) synchronous machine, stator resistance neglected.
/// States: `[δ_r, ω_r, e'_q, e'_d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyncMachine4 {
    pub name: String,
    pub bus: usize,
    pub m: f64,
    pub d: f64,
    pub xd: f64,
    pub xd_p: f64,
    pub xq: f64,
    pub xq_p: f64,
    pub td0_p: f64,
    pub tq0_p: f64,
    pub pm: f64,
    pub vf: f64,
    pub omega_b: f64,
}

struct Stator {
    id: f64,
    iq: f64,
    pe: f64,
    i: C64,
}

fn stator(m: &SyncMachine4, x: &[f64], v: C64) -> Stator {
    let rot = C64::from_polar(1.0, -(x[0] - FRAC_PI_2));
    let vdq = v * rot;
    let (vd, vq) = (vdq.re, vdq.im);
    let id = (x[2] - vq) / m.xd_p;
    let iq = (vd - x[3]) / m.xq_p;
    let i = C64::new(id, iq) / rot;
    Stator { id, iq, pe: vd * id + vq * iq, i }
}

/// State derivatives and injected current.
pub fn sg4_derivatives(m: &SyncMachine4, x: &[f64], v: C64) -> ([f64; 4], C64) {
    let s = stator(m, x, v);
    let w = x[1];
    let f = [
        m.omega_b * (w - 1.0),
        (m.pm - s.pe - m.d * (w - 1.0)) / m.m,
        (-x[2] - (m.xd - m.xd_p) * s.id + m.vf) / m.td0_p,
        (-x[3] + (m.xq - m.xq_p) * s.iq) / m.tq0_p,
    ];
    (f, s.i)
}

impl SyncMachine4 {
    /// Back-solves the states, `p_m` and `v_f` from the operating point.
    pub fn from_operating_point(
        name: impl Into<String>,
        bus: usize,
        data: &MachineData,
        omega_b: f64,
        v0: C64,
        s0: C64,
    ) -> Result<(Self, Vec<f64>), DeviceError> {
        if !(data.h > 0.0 && data.td0_p > 0.0 && data.tq0_p > 0.0) {
            return Err(DeviceError::Init("machine needs H, Td0', Tq0' > 0".into()));
        }
        let i0 = (s0 / v0).conj();
        let e = v0 + C64::i() * data.xq * i0;
        let delta = e.arg();
        let rot = C64::from_polar(1.0, -(delta - FRAC_PI_2));
        let (vdq, idq) = (v0 * rot, i0 * rot);
        let edp = (data.xq - data.xq_p) * idq.im;
        let eqp = vdq.im + data.xd_p * idq.re;
        let vf = eqp + (data.xd - data.xd_p) * idq.re;
        let pm = vdq.re * idq.re + vdq.im * idq.im;
        let m = SyncMachine4 {
            name: name.into(),
            bus,
            m: 2.0 * data.h,
            d: data.d,
            xd: data.xd,
            xd_p: data.xd_p,
            xq: data.xq,
            xq_p: data.xq_p,
            td0_p: data.td0_p,
            tq0_p: data.tq0_p,
            pm,
            vf,
            omega_b,
        };
        Ok((m, vec![delta, 1.0, eqp, edp]))
    }
}

impl DeviceModel for SyncMachine4 {
    fn name(&self) -> &str {
        &self.name
    }
    fn bus(&self) -> usize {
        self.bus
    }
    fn n_diff(&self) -> usize {
        4
    }
    fn eval(&self, v: C64, x: &[f64], _y: &[f64], f: &mut [f64], _g: &mut [f64]) -> Result<C64, DeviceError> {
        let (d, i) = sg4_derivatives(self, x, v);
        f.copy_from_slice(&d);
        Ok(i)
    }
    fn signals(&self, v: C64, x: &[f64], _y: &[f64]) -> Result<Vec<(&'static str, f64)>, DeviceError> {
        let s = stator(self, x, v);
        let mut out =
            vec![("delta", x[0]), ("omega", x[1]), ("eqp", x[2]), ("edp", x[3]), ("pe", s.pe), ("pm", self.pm)];
        push_complex(&mut out, ["id", "iq"], s.i);
        push_complex(&mut out, ["p", "q"], v * s.i.conj());
        Ok(out)
    }
    fn apply(&mut self, action: DeviceAction) -> bool {
        match action {
            DeviceAction::StepPm(dp) => {
                self.pm += dp;
                true
            }
            _ => false,
        }
    }
    fn inertia(&self) -> Option<f64> {
        Some(self.m)
    }
}
