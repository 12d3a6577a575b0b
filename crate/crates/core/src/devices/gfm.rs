use std::f64::consts::FRAC_PI_2;

use super::converter::{measure_omega, FilterModel, FilterParams, PfrConfig, PfrInput};
use super::{current_from_power, push_complex, DeviceError, DeviceModel};
use crate::controllers::{
    gfm_voltage_ctrl, pf_droop_derivatives, pfr_step, pi_current_output, qv_droop_vref, vsm_derivatives,
    vsm_voltage_vref, DroopParams, DroopState, GfmVoltageParams, GfmVoltageState, PfrState, PiCurrentParams,
    PiCurrentState, VsmParams, VsmState,
};
use crate::network::C64;
use crate::park::ParkVector;

type P = ParkVector<f64>;

fn pk(z: C64) -> P {
    P::new(z.re, z.im)
}

fn cx(p: P) -> C64 {
    C64::new(p.d, p.q)
}

/// Synchronization and voltage-reference pairing: P/f droop with Q/V droop,
/// or a virtual synchronous machine with virtual flux.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SyncScheme {
    Droop(DroopParams<f64>),
    Vsm(VsmParams<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GfmParams {
    pub filter: FilterParams,
    pub current: PiCurrentParams<f64>,
    pub voltage: GfmVoltageParams<f64>,
    pub sync: SyncScheme,
    pub pfr: Option<PfrConfig>,
}

const Z: usize = 0;
const SYNC: usize = 1;
const XV: usize = 4;
const XPI: usize = 6;
const FILTER: usize = 8;

/// Grid-forming converter: cascaded voltage and current PI control with a
/// power-based synchronization loop.
#[derive(Debug, Clone, PartialEq)]
pub struct GfmConverter {
    pub name: String,
    pub bus: usize,
    pub params: GfmParams,
    pub omega_b: f64,
}

#[derive(Debug, Clone, Default)]
struct Snapshot {
    i_inj: C64,
    v_loc: C64,
    i_loc: C64,
    s_h: C64,
    v_ref: C64,
    i_ref: C64,
    omega_meas: f64,
    zdot: f64,
    frame_rate: f64,
    delta_dot: f64,
    sync_dot: [f64; 3],
    xv_dot: C64,
    pi_xdot: C64,
    v_t: C64,
    pfr: Option<(f64, f64, [f64; 2])>,
}

impl GfmConverter {
    fn pfr_offset(&self) -> usize {
        FILTER + self.params.filter.n_states()
    }

    pub fn from_operating_point(
        name: impl Into<String>,
        bus: usize,
        mut params: GfmParams,
        omega_b: f64,
        v0: C64,
        s0: C64,
    ) -> Result<(Self, Vec<f64>), DeviceError> {
        let name = name.into();
        params.filter.validate().map_err(DeviceError::Init)?;
        params.current.lf = params.filter.lf;
        params.current.rf = params.filter.rf;
        if !(params.voltage.ki_v > 0.0) {
            return Err(DeviceError::Init(format!("{name}: voltage controller needs Ki > 0")));
        }
        let nf = params.filter.n_states();
        let n = FILTER + nf + if params.pfr.is_some() { 2 } else { 0 };
        let mut x = vec![0.0; n];
        let i_inj = current_from_power(s0, v0);
        let (xf, pt, v_t) = params.filter.steady_state(v0, i_inj);
        x[FILTER..FILTER + nf].copy_from_slice(&xf);
        x[Z] = v0.arg();
        let s_m = pt.v_m * pt.i_inj.conj();
        let vm = pt.v_m.norm();
        let theta = match &mut params.sync {
            SyncScheme::Droop(d) => {
                d.validate()?;
                d.p_ref = s_m.re;
                d.q_ref = s_m.im;
                d.v_n = vm;
                x[SYNC] = s_m.re;
                x[SYNC + 1] = s_m.im;
                x[SYNC + 2] = pt.v_m.arg();
                pt.v_m.arg()
            }
            SyncScheme::Vsm(v) => {
                if !(v.j_v > 0.0) {
                    return Err(DeviceError::Init(format!("{name}: VSM inertia must be positive")));
                }
                v.p_ref = s_m.re;
                v.q_ref = s_m.im;
                v.v_n = vm;
                let th = pt.v_m.arg() - FRAC_PI_2;
                x[SYNC] = th;
                x[SYNC + 1] = 1.0;
                x[SYNC + 2] = vm;
                th
            }
        };
        let rot = C64::from_polar(1.0, -theta);
        let (v_loc, i_loc, v_t_loc) = (pt.v_m * rot, pt.i_f * rot, v_t * rot);
        let xv = i_loc / params.voltage.ki_v;
        x[XV] = xv.re;
        x[XV + 1] = xv.im;
        let cp = &params.current;
        let vff = if cp.vff_enabled { 1.0 } else { 0.0 };
        let need = match params.filter.model {
            FilterModel::Averaged => v_loc * (1.0 - vff),
            _ => v_t_loc - v_loc * vff - C64::i() * cp.lf * i_loc,
        };
        let xi = if cp.ki > 0.0 {
            need / cp.ki
        } else if need.norm() < 1e-12 {
            C64::default()
        } else {
            return Err(DeviceError::Init(format!("{name}: Ki = 0 cannot hold the operating point")));
        };
        x[XPI] = xi.re;
        x[XPI + 1] = xi.im;
        Ok((Self { name, bus, params, omega_b }, x))
    }

    fn theta(&self, x: &[f64]) -> f64 {
        match self.params.sync {
            SyncScheme::Droop(_) => x[SYNC + 2],
            SyncScheme::Vsm(_) => x[SYNC],
        }
    }

    fn snapshot(&self, v: C64, x: &[f64]) -> Result<Snapshot, DeviceError> {
        let p = &self.params;
        let mut s = Snapshot::default();
        let (w, zd) = measure_omega(v, x[Z], self.omega_b);
        s.omega_meas = w;
        s.zdot = zd;
        let nf = p.filter.n_states();
        let pt = p.filter.point(v, &x[FILTER..FILTER + nf]);
        let theta = self.theta(x);
        let rot = C64::from_polar(1.0, -theta);
        s.v_loc = pt.v_m * rot;

        // the PFR output depends on its states only, so the slip can include it
        let dp = match p.pfr {
            Some(cfg) => {
                let o = self.pfr_offset();
                pfr_step(&PfrState { x_lp: x[o], x_wash: x[o + 1] }, &cfg.params, 0.0).0
            }
            None => 0.0,
        };
        s.frame_rate = match p.sync {
            SyncScheme::Droop(d) => -d.m_p * (x[SYNC] - d.p_ref - dp),
            SyncScheme::Vsm(_) => x[SYNC + 1] - 1.0,
        };
        s.delta_dot = s.frame_rate - w;
        if let Some(cfg) = p.pfr {
            let o = self.pfr_offset();
            let input = match cfg.input {
                PfrInput::Bus => w,
                PfrInput::Internal => w - s.delta_dot,
            };
            let (_, d) = pfr_step(&PfrState { x_lp: x[o], x_wash: x[o + 1] }, &cfg.params, input);
            s.pfr = Some((dp, input, [d.x_lp, d.x_wash]));
        }

        let v_ref = match p.sync {
            SyncScheme::Droop(d) => {
                let st = DroopState { p: x[SYNC], q: x[SYNC + 1], delta: theta };
                qv_droop_vref(&st, &d, 0.0).0
            }
            SyncScheme::Vsm(_) => P::new(0.0, x[SYNC + 2] * x[SYNC + 1]),
        };
        s.v_ref = cx(v_ref);
        let (i_ref, xv_dot) =
            gfm_voltage_ctrl(&GfmVoltageState { x_v: P::new(x[XV], x[XV + 1]) }, &p.voltage, v_ref, pk(s.v_loc));
        s.i_ref = cx(i_ref);
        s.xv_dot = cx(xv_dot);

        let cp = &p.current;
        let x_pi = P::new(x[XPI], x[XPI + 1]);
        match p.filter.model {
            FilterModel::Averaged => {
                let no_ff = if cp.vff_enabled { 0.0 } else { 1.0 };
                s.i_loc = s.i_ref + (cx(x_pi) * cp.ki - s.v_loc * no_ff) / cp.kp;
                s.pi_xdot = s.i_ref - s.i_loc;
                s.v_t = pt.v_m;
                s.i_inj = s.i_loc / rot;
            }
            _ => {
                s.i_loc = pt.i_f * rot;
                let out = pi_current_output(&PiCurrentState { x: x_pi }, cp, i_ref, pk(s.i_loc), pk(s.v_loc));
                s.pi_xdot = cx(out.xdot);
                s.v_t = cx(out.v_t) / rot;
                s.i_inj = pt.i_inj;
            }
        }
        s.s_h = pt.v_m * s.i_inj.conj();

        match p.sync {
            SyncScheme::Droop(mut d) => {
                d.p_ref += dp;
                let st = DroopState { p: x[SYNC], q: x[SYNC + 1], delta: theta };
                let (_, pdot) = pf_droop_derivatives(&st, &d, s.s_h.re, w);
                let (_, qdot) = qv_droop_vref(&st, &d, s.s_h.im);
                s.sync_dot = [pdot, qdot, self.omega_b * s.frame_rate];
            }
            SyncScheme::Vsm(mut vp) => {
                vp.p_ref += dp;
                let st = VsmState { delta: theta, omega_vsm: x[SYNC + 1], psi_v: x[SYNC + 2] };
                let (_, wdot) = vsm_derivatives(&st, &vp, s.s_h.re, w)?;
                let (_, psidot) = vsm_voltage_vref(&st, &vp, s.s_h.im, pt.v_m.norm());
                s.sync_dot = [self.omega_b * s.frame_rate, wdot, psidot];
            }
        }
        Ok(s)
    }
}

impl DeviceModel for GfmConverter {
    fn name(&self) -> &str {
        &self.name
    }
    fn bus(&self) -> usize {
        self.bus
    }
    fn n_diff(&self) -> usize {
        self.pfr_offset() + if self.params.pfr.is_some() { 2 } else { 0 }
    }
    fn eval(&self, v: C64, x: &[f64], _y: &[f64], f: &mut [f64], _g: &mut [f64]) -> Result<C64, DeviceError> {
        let s = self.snapshot(v, x)?;
        f[Z] = s.zdot;
        f[SYNC..SYNC + 3].copy_from_slice(&s.sync_dot);
        f[XV] = s.xv_dot.re;
        f[XV + 1] = s.xv_dot.im;
        f[XPI] = s.pi_xdot.re;
        f[XPI + 1] = s.pi_xdot.im;
        let nf = self.params.filter.n_states();
        self.params.filter.derivatives(self.omega_b, s.v_t, v, &x[FILTER..FILTER + nf], &mut f[FILTER..FILTER + nf]);
        if let Some((_, _, d)) = s.pfr {
            let o = self.pfr_offset();
            f[o] = d[0];
            f[o + 1] = d[1];
        }
        Ok(s.i_inj)
    }

    fn signals(&self, v: C64, x: &[f64], _y: &[f64]) -> Result<Vec<(&'static str, f64)>, DeviceError> {
        let s = self.snapshot(v, x)?;
        let mut out = Vec::with_capacity(40);
        push_complex(&mut out, ["id", "iq"], s.i_inj);
        push_complex(&mut out, ["p", "q"], v * s.i_inj.conj());
        push_complex(&mut out, ["vpd", "vpq"], s.v_loc);
        push_complex(&mut out, ["ipd", "ipq"], s.i_loc);
        push_complex(&mut out, ["ph", "qh"], s.s_h);
        push_complex(&mut out, ["vrefd", "vrefq"], s.v_ref);
        push_complex(&mut out, ["irefd", "irefq"], s.i_ref);
        out.push(("xvd", x[XV]));
        out.push(("xvq", x[XV + 1]));
        out.push(("xd", x[XPI]));
        out.push(("xq", x[XPI + 1]));
        out.push(("theta", self.theta(x)));
        out.push(("theta_dot", s.frame_rate));
        out.push(("delta_dot", s.delta_dot));
        out.push(("omega_meas", s.omega_meas));
        out.push(("omega_int", s.omega_meas - s.delta_dot));
        out.push(("kappa", self.params.current.kappa_pi()));
        match self.params.sync {
            SyncScheme::Droop(_) => {
                out.push(("pf", x[SYNC]));
                out.push(("qf", x[SYNC + 1]));
            }
            SyncScheme::Vsm(_) => {
                out.push(("omega_vsm", x[SYNC + 1]));
                out.push(("psi", x[SYNC + 2]));
            }
        }
        if let Some((dp, input, _)) = s.pfr {
            out.push(("dpref", dp));
            out.push(("pfr_in", input));
        }
        Ok(out)
    }
}
