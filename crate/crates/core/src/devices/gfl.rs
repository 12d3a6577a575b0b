use serde::{Deserialize, Serialize};

use super::converter::{measure_omega, FilterModel, FilterParams, PfrConfig, PfrInput};
use super::{current_from_power, push_complex, DeviceError, DeviceModel};
use crate::controllers::{
    current_ref_from_power, current_ref_outer_loops, current_ref_virtual_admittance, pfr_step, pi_current_output,
    pll_derivatives, OuterGflParams, OuterGflState, PfrState, PiCurrentParams, PiCurrentState, PllParams, PllState,
    VirtualAdmittanceParams,
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

/// Ideal-source dc link on the converter's dc side, or a capacitor whose
/// voltage the outer loop regulates. `i_src` is the dc-side current source
/// feeding the capacitor (negative for a dc load).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DcLink {
    pub c_dc: f64,
    pub i_src: f64,
}

/// Current reference of a grid-following converter, in the converter frame,
/// as injected current. Setpoints are overwritten at initialization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReferenceSource {
    Constant {
        i_ref: C64,
    },
    Power {
        s_ref: C64,
    },
    VirtualAdmittance(VirtualAdmittanceParams<f64>),
    /// dc-voltage and ac-voltage PI loops of a rectifier. The loops command
    /// absorbed current; the injected reference is its negative.
    OuterLoops {
        params: OuterGflParams<f64>,
        dc: DcLink,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GflParams {
    pub filter: FilterParams,
    pub current: PiCurrentParams<f64>,
    pub pll: PllParams<f64>,
    pub reference: ReferenceSource,
    pub pfr: Option<PfrConfig>,
}

#[derive(Debug, Clone, Copy)]
struct Layout {
    z: usize,
    pll: usize,
    pi: usize,
    filter: usize,
    outer: Option<usize>,
    pfr: Option<usize>,
    n: usize,
}

impl Layout {
    fn new(p: &GflParams) -> Self {
        let filter = 5;
        let mut n = filter + p.filter.n_states();
        let outer = matches!(p.reference, ReferenceSource::OuterLoops { .. }).then(|| {
            n += 3;
            n - 3
        });
        let pfr = p.pfr.map(|_| {
            n += 2;
            n - 2
        });
        Self { z: 0, pll: 1, pi: 3, filter, outer, pfr, n }
    }
}

/// Grid-following converter: PLL, PI current control, one reference source,
/// output filter, optional dc capacitor and optional frequency response.
#[derive(Debug, Clone, PartialEq)]
pub struct GflConverter {
    pub name: String,
    pub bus: usize,
    pub params: GflParams,
    pub omega_b: f64,
    layout_n: usize,
}

#[derive(Debug, Clone, Default)]
struct Snapshot {
    i_inj: C64,
    v_loc: C64,
    i_loc: C64,
    i_ref: C64,
    s_ref: Option<C64>,
    omega_meas: f64,
    zdot: f64,
    pll_xdot: f64,
    frame_rate: f64,
    delta_dot: f64,
    pi_xdot: C64,
    v_t: C64,
    outer_xdot: C64,
    dc: Option<(f64, f64, f64)>,       // v_dc, i_dc, v̇_dc
    pfr: Option<(f64, f64, [f64; 2])>, // Δp, input, derivatives
}

impl GflConverter {
    fn layout(&self) -> Layout {
        Layout::new(&self.params)
    }

    pub fn from_operating_point(
        name: impl Into<String>,
        bus: usize,
        mut params: GflParams,
        omega_b: f64,
        v0: C64,
        s0: C64,
    ) -> Result<(Self, Vec<f64>), DeviceError> {
        let name = name.into();
        params.filter.validate().map_err(DeviceError::Init)?;
        params.current.lf = params.filter.lf;
        params.current.rf = params.filter.rf;
        let lay = Layout::new(&params);
        let mut x = vec![0.0; lay.n];
        let i_inj = current_from_power(s0, v0);
        let (xf, pt, v_t) = params.filter.steady_state(v0, i_inj);
        x[lay.filter..lay.filter + xf.len()].copy_from_slice(&xf);
        let theta = pt.v_m.arg();
        let rot = C64::from_polar(1.0, -theta);
        let (v_loc, i_loc, v_t_loc) = (pt.v_m * rot, pt.i_f * rot, v_t * rot);
        x[lay.z] = v0.arg();
        x[lay.pll + 1] = theta;

        match &mut params.reference {
            ReferenceSource::Constant { i_ref } => *i_ref = i_loc,
            ReferenceSource::Power { s_ref } => *s_ref = v_loc * i_loc.conj(),
            ReferenceSource::VirtualAdmittance(va) => {
                va.v_ref = pk(v_loc);
                va.s_ref = pk(v_loc * i_loc.conj());
            }
            ReferenceSource::OuterLoops { params: op, dc } => {
                if !(op.ki_o > 0.0) || !(dc.c_dc > 0.0) {
                    return Err(DeviceError::Init(format!("{name}: outer loops need Ki > 0 and C_dc > 0")));
                }
                let v_dc = op.v_ref_o.d;
                if !(v_dc > 0.0) {
                    return Err(DeviceError::Init(format!("{name}: dc voltage reference must be positive")));
                }
                op.v_ref_o = P::new(v_dc, v_loc.norm());
                let o = lay.outer.expect("outer layout");
                let xo = -i_loc / op.ki_o;
                x[o] = xo.re;
                x[o + 1] = xo.im;
                x[o + 2] = v_dc;
                let p_conv = (v_t * pt.i_f.conj()).re;
                dc.i_src = p_conv / v_dc;
            }
        }

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
        x[lay.pi] = xi.re;
        x[lay.pi + 1] = xi.im;
        Ok((Self { name, bus, params, omega_b, layout_n: lay.n }, x))
    }

    fn snapshot(&self, v: C64, x: &[f64]) -> Result<Snapshot, DeviceError> {
        let lay = self.layout();
        let p = &self.params;
        let mut s = Snapshot::default();
        let (w, zd) = measure_omega(v, x[lay.z], self.omega_b);
        s.omega_meas = w;
        s.zdot = zd;
        let xf = &x[lay.filter..lay.filter + p.filter.n_states()];
        let pt = p.filter.point(v, xf);
        let theta = x[lay.pll + 1];
        let rot = C64::from_polar(1.0, -theta);
        s.v_loc = pt.v_m * rot;

        let pll = pll_derivatives(&PllState { x: x[lay.pll], delta: theta }, &p.pll, pk(s.v_loc), w);
        s.pll_xdot = pll.xdot;
        s.frame_rate = pll.frame_rate;
        s.delta_dot = pll.delta_dot;

        let dp = match (p.pfr, lay.pfr) {
            (Some(cfg), Some(o)) => {
                let input = match cfg.input {
                    PfrInput::Bus => w,
                    PfrInput::Internal => w - pll.delta_dot,
                };
                let (dp, d) = pfr_step(&PfrState { x_lp: x[o], x_wash: x[o + 1] }, &cfg.params, input);
                s.pfr = Some((dp, input, [d.x_lp, d.x_wash]));
                dp
            }
            _ => 0.0,
        };

        s.i_ref = match &p.reference {
            ReferenceSource::Constant { i_ref } => *i_ref,
            ReferenceSource::Power { s_ref } => {
                let sr = s_ref + dp;
                s.s_ref = Some(sr);
                cx(current_ref_from_power(pk(sr), pk(s.v_loc))?)
            }
            ReferenceSource::VirtualAdmittance(va) => {
                let mut va = *va;
                va.s_ref.d += dp;
                s.s_ref = Some(cx(va.s_ref));
                cx(current_ref_virtual_admittance(&va, pk(s.v_loc))?)
            }
            ReferenceSource::OuterLoops { params: op, .. } => {
                let o = lay.outer.expect("outer layout");
                let st = OuterGflState { x_o: P::new(x[o], x[o + 1]) };
                let (i_abs, xd) = current_ref_outer_loops(&st, op, x[o + 2], s.v_loc.norm());
                s.outer_xdot = cx(xd);
                -cx(i_abs)
            }
        };

        let cp = &p.current;
        let x_pi = P::new(x[lay.pi], x[lay.pi + 1]);
        let i_f = match p.filter.model {
            FilterModel::Averaged => {
                let no_ff = if cp.vff_enabled { 0.0 } else { 1.0 };
                s.i_loc = s.i_ref + (cx(x_pi) * cp.ki - s.v_loc * no_ff) / cp.kp;
                s.pi_xdot = s.i_ref - s.i_loc;
                s.v_t = pt.v_m;
                s.i_inj = s.i_loc / rot;
                s.i_inj
            }
            _ => {
                s.i_loc = pt.i_f * rot;
                let out = pi_current_output(&PiCurrentState { x: x_pi }, cp, pk(s.i_ref), pk(s.i_loc), pk(s.v_loc));
                s.pi_xdot = cx(out.xdot);
                s.v_t = cx(out.v_t) / rot;
                s.i_inj = pt.i_inj;
                pt.i_f
            }
        };

        if let (ReferenceSource::OuterLoops { dc, .. }, Some(o)) = (&p.reference, lay.outer) {
            let v_dc = x[o + 2];
            let p_conv = (s.v_t * i_f.conj()).re;
            let i_dc = dc.i_src - p_conv / v_dc;
            s.dc = Some((v_dc, i_dc, i_dc / dc.c_dc));
        }
        Ok(s)
    }

    pub fn kappa(&self) -> f64 {
        self.params.current.kappa_pi()
    }
}

impl DeviceModel for GflConverter {
    fn name(&self) -> &str {
        &self.name
    }
    fn bus(&self) -> usize {
        self.bus
    }
    fn n_diff(&self) -> usize {
        self.layout_n
    }
    fn eval(&self, v: C64, x: &[f64], _y: &[f64], f: &mut [f64], _g: &mut [f64]) -> Result<C64, DeviceError> {
        let lay = self.layout();
        let s = self.snapshot(v, x)?;
        f[lay.z] = s.zdot;
        f[lay.pll] = s.pll_xdot;
        f[lay.pll + 1] = self.omega_b * s.frame_rate;
        f[lay.pi] = s.pi_xdot.re;
        f[lay.pi + 1] = s.pi_xdot.im;
        let nf = self.params.filter.n_states();
        self.params.filter.derivatives(
            self.omega_b,
            s.v_t,
            v,
            &x[lay.filter..lay.filter + nf],
            &mut f[lay.filter..lay.filter + nf],
        );
        if let (Some(o), Some((_, _, vdot))) = (lay.outer, s.dc) {
            f[o] = s.outer_xdot.re;
            f[o + 1] = s.outer_xdot.im;
            f[o + 2] = vdot;
        }
        if let (Some(o), Some((_, _, d))) = (lay.pfr, s.pfr) {
            f[o] = d[0];
            f[o + 1] = d[1];
        }
        Ok(s.i_inj)
    }

    fn signals(&self, v: C64, x: &[f64], _y: &[f64]) -> Result<Vec<(&'static str, f64)>, DeviceError> {
        let lay = self.layout();
        let s = self.snapshot(v, x)?;
        let mut out = Vec::with_capacity(40);
        push_complex(&mut out, ["id", "iq"], s.i_inj);
        push_complex(&mut out, ["p", "q"], v * s.i_inj.conj());
        push_complex(&mut out, ["vpd", "vpq"], s.v_loc);
        push_complex(&mut out, ["ipd", "ipq"], s.i_loc);
        push_complex(&mut out, ["ph", "qh"], s.v_loc * s.i_loc.conj());
        push_complex(&mut out, ["irefd", "irefq"], s.i_ref);
        out.push(("xd", x[lay.pi]));
        out.push(("xq", x[lay.pi + 1]));
        out.push(("theta", x[lay.pll + 1]));
        out.push(("theta_dot", s.frame_rate));
        out.push(("delta_dot", s.delta_dot));
        out.push(("omega_meas", s.omega_meas));
        out.push(("omega_int", s.omega_meas - s.delta_dot));
        out.push(("kappa", self.kappa()));
        if let Some(sr) = s.s_ref {
            push_complex(&mut out, ["srefp", "srefq"], sr);
        }
        if let (Some((v_dc, i_dc, vdot)), ReferenceSource::OuterLoops { dc, .. }) = (s.dc, &self.params.reference) {
            out.push(("v_dc", v_dc));
            out.push(("i_dc", i_dc));
            out.push(("vdc_dot", vdot));
            out.push(("rho_dc", i_dc / (dc.c_dc * v_dc)));
        }
        if let Some((dp, input, _)) = s.pfr {
            out.push(("dpref", dp));
            out.push(("pfr_in", input));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controllers::PfrParams;

    pub(crate) fn params(model: FilterModel, reference: ReferenceSource, vff: bool) -> GflParams {
        GflParams {
            filter: FilterParams { model, ..Default::default() },
            current: PiCurrentParams::new(0.5, 20.0, vff, 0.0, 0.0).unwrap(),
            pll: PllParams::from_bandwidth(30.0, 1.0, 377.0).unwrap(),
            reference,
            pfr: Some(PfrConfig { params: PfrParams::with_defaults(10.0, 0.1).unwrap(), input: PfrInput::Internal }),
        }
    }

    fn references() -> Vec<ReferenceSource> {
        vec![
            ReferenceSource::Constant { i_ref: C64::default() },
            ReferenceSource::Power { s_ref: C64::default() },
            ReferenceSource::VirtualAdmittance(VirtualAdmittanceParams {
                gv: 2.0,
                bv: -1.0,
                v_ref: P::zero(),
                s_ref: P::zero(),
            }),
            ReferenceSource::OuterLoops {
                params: OuterGflParams { kp_o: 2.0, ki_o: 20.0, v_ref_o: P::new(1.0, 0.0) },
                dc: DcLink { c_dc: 0.05, i_src: 0.0 },
            },
        ]
    }

    #[test]
    fn every_configuration_starts_in_equilibrium() {
        let v0 = C64::from_polar(1.01, -0.07);
        let s0 = C64::new(0.2, 0.05);
        for model in [FilterModel::Averaged, FilterModel::Inductive, FilterModel::Lcl] {
            for r in references() {
                for vff in [true, false] {
                    let (c, x) =
                        GflConverter::from_operating_point("c", 0, params(model, r, vff), 377.0, v0, s0).unwrap();
                    let mut f = vec![0.0; c.n_diff()];
                    let i = c.eval(v0, &x, &[], &mut f, &mut []).unwrap();
                    assert!(f.iter().all(|d| d.abs() < 1e-10), "{model:?} {r:?} vff={vff}: {f:?}");
                    assert!((v0 * i.conj() - s0).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn dc_identity_is_pointwise() {
        let v0 = C64::from_polar(1.0, 0.0);
        let r = references()[3];
        let (c, mut x) = GflConverter::from_operating_point(
            "c",
            0,
            params(FilterModel::Inductive, r, true),
            377.0,
            v0,
            C64::new(-0.3, 0.0),
        )
        .unwrap();
        let n = c.n_diff();
        x[n - 3] = 0.97; // disturb v_dc
        let mut f = vec![0.0; n];
        c.eval(v0, &x, &[], &mut f, &mut []).unwrap();
        let sig = c.signals(v0, &x, &[]).unwrap();
        let get = |k: &str| sig.iter().find(|(n, _)| *n == k).unwrap().1;
        assert!((get("rho_dc") - f[n - 3] / x[n - 3]).abs() < 1e-12);
        assert!(get("i_dc") != 0.0);
    }

    #[test]
    fn ki_zero_cannot_hold_filter_drop() {
        let mut p = params(FilterModel::Inductive, references()[1], true);
        p.current.ki = 0.0;
        let r = GflConverter::from_operating_point("c", 0, p, 377.0, C64::new(1.0, 0.0), C64::new(0.5, 0.0));
        assert!(matches!(r, Err(DeviceError::Init(_))));
    }
}
