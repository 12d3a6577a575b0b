use serde::{Deserialize, Serialize};

use super::ControlError;
use crate::park::{CfError, ParkVector, EPS_MAG};
use crate::Scalar;

/// PI current controller in the device frame.
///
/// `lf` is the filter reactance at nominal frequency (pu), so the
/// cross-coupling term `jω_n L_f i` is `j * lf * i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PiCurrentParams<T> {
    pub kp: T,
    pub ki: T,
    pub vff_enabled: bool,
    pub lf: T,
    pub rf: T,
}

impl<T: Scalar> PiCurrentParams<T> {
    pub fn new(kp: T, ki: T, vff_enabled: bool, lf: T, rf: T) -> Result<Self, ControlError> {
        if !(kp > T::zero()) || ki < T::zero() {
            return Err(ControlError::Domain(format!(
                "current controller needs Kp > 0 and Ki >= 0, got Kp={kp}, Ki={ki}"
            )));
        }
        Ok(Self { kp, ki, vff_enabled, lf, rf })
    }

    /// `κ_PI = K_i / K_p`, in 1/s.
    pub fn kappa_pi(&self) -> T {
        self.ki / self.kp
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PiCurrentState<T> {
    pub x: ParkVector<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiCurrentOutput<T> {
    pub v_t: ParkVector<T>,
    pub xdot: ParkVector<T>,
}

pub fn pi_current_output<T: Scalar>(
    state: &PiCurrentState<T>,
    params: &PiCurrentParams<T>,
    i_ref: ParkVector<T>,
    i_local: ParkVector<T>,
    v_local: ParkVector<T>,
) -> PiCurrentOutput<T> {
    let err = i_ref - i_local;
    let ff = if params.vff_enabled { v_local } else { ParkVector::zero() };
    let v_t = ff + i_local.rot90() * params.lf + err * params.kp + state.x * params.ki;
    PiCurrentOutput { v_t, xdot: err }
}

pub fn current_ref_constant<T: Scalar>(i_ref: ParkVector<T>) -> ParkVector<T> {
    i_ref
}

fn check_voltage<T: Scalar>(v: ParkVector<T>) -> Result<(), CfError> {
    let m = v.magnitude();
    if m > T::lit(EPS_MAG) {
        Ok(())
    } else {
        Err(CfError::MagnitudeUnderflow { magnitude: m.to_f64().unwrap_or(0.0) })
    }
}

/// `i_ref = (s_ref / v')*`.
pub fn current_ref_from_power<T: Scalar>(
    s_ref: ParkVector<T>,
    v_local: ParkVector<T>,
) -> Result<ParkVector<T>, CfError> {
    check_voltage(v_local)?;
    Ok((s_ref / v_local).conj())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VirtualAdmittanceParams<T> {
    pub gv: T,
    pub bv: T,
    pub v_ref: ParkVector<T>,
    pub s_ref: ParkVector<T>,
}

impl<T: Scalar> VirtualAdmittanceParams<T> {
    pub fn admittance(&self) -> ParkVector<T> {
        ParkVector::new(self.gv, self.bv)
    }
}

/// `i_ref = (s_ref / v')* + Y_v (v_ref − v')`.
pub fn current_ref_virtual_admittance<T: Scalar>(
    params: &VirtualAdmittanceParams<T>,
    v_local: ParkVector<T>,
) -> Result<ParkVector<T>, CfError> {
    let i_s = current_ref_from_power(params.s_ref, v_local)?;
    Ok(i_s + params.admittance() * (params.v_ref - v_local))
}

/// Outer dc-link and ac-voltage PI loops of a grid-following rectifier.
/// Both axes share gains; `v_ref_o = (v_n_dc, v_n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuterGflParams<T> {
    pub kp_o: T,
    pub ki_o: T,
    pub v_ref_o: ParkVector<T>,
}

/// `x_o = (x_dc, x_ac)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OuterGflState<T> {
    pub x_o: ParkVector<T>,
}

/// Returns `(i_ref, dx_o/dt)` with `i_ref = (i_d_ref, i_q_ref)`.
pub fn current_ref_outer_loops<T: Scalar>(
    state: &OuterGflState<T>,
    params: &OuterGflParams<T>,
    v_dc: T,
    v_mag: T,
) -> (ParkVector<T>, ParkVector<T>) {
    let err = params.v_ref_o - ParkVector::new(v_dc, v_mag);
    (err * params.kp_o + state.x_o * params.ki_o, err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    type P = ParkVector<f64>;

    fn params(kp: f64, ki: f64, vff: bool, lf: f64) -> PiCurrentParams<f64> {
        PiCurrentParams::new(kp, ki, vff, lf, 0.0).unwrap()
    }

    #[test]
    fn pi_zero_error_with_vff() {
        let p = params(0.3, 5.0, true, 0.08);
        let i = P::new(0.5, -0.1);
        let v = P::new(1.01, 0.0);
        let out = pi_current_output(&PiCurrentState::default(), &p, i, i, v);
        let expect = v + i.rot90() * 0.08;
        assert_abs_diff_eq!(out.v_t.d, expect.d, epsilon = 1e-15);
        assert_abs_diff_eq!(out.v_t.q, expect.q, epsilon = 1e-15);
        assert_eq!(out.xdot, P::zero());
    }

    #[test]
    fn pi_proportional_only() {
        let p = params(2.0, 0.0, false, 0.0);
        let out =
            pi_current_output(&PiCurrentState::default(), &p, P::new(0.6, 0.0), P::new(0.5, 0.0), P::new(1.0, 0.0));
        assert_abs_diff_eq!(out.v_t.d, 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(out.v_t.q, 0.0);
    }

    #[test]
    fn pi_equilibrium_means_tracking() {
        let p = params(1.0, 10.0, true, 0.1);
        let i_ref = P::new(0.7, 0.2);
        let out = pi_current_output(&PiCurrentState::default(), &p, i_ref, i_ref, P::new(1.0, 0.0));
        assert_eq!(out.xdot, P::zero());
    }

    #[test]
    fn kappa_follows_gains() {
        let mut p = params(0.5, 10.0, true, 0.1);
        assert_eq!(p.kappa_pi(), 20.0);
        p.ki = 5.0;
        assert_eq!(p.kappa_pi(), 10.0);
        assert!(PiCurrentParams::new(0.0, 1.0, true, 0.1, 0.0).is_err());
    }

    #[test]
    fn power_reference_examples() {
        let i = current_ref_from_power(P::new(1.0, 0.0), P::new(1.0, 0.0)).unwrap();
        assert_eq!(i, P::new(1.0, 0.0));
        let i = current_ref_from_power(P::new(0.0, 1.0), P::new(1.0, 0.0)).unwrap();
        assert_abs_diff_eq!(i.d, 0.0);
        assert_abs_diff_eq!(i.q, -1.0);
        // conj((0.8+0.2j)/(0.98+0.05j)) computed independently by real arithmetic
        let (a, b, c, d) = (0.8, 0.2, 0.98, 0.05);
        let den = c * c + d * d;
        let (re, im) = ((a * c + b * d) / den, (b * c - a * d) / den);
        let i = current_ref_from_power(P::new(0.8, 0.2), P::new(0.98, 0.05)).unwrap();
        assert_abs_diff_eq!(i.d, re, epsilon = 1e-15);
        assert_abs_diff_eq!(i.q, -im, epsilon = 1e-15);
        assert!(current_ref_from_power(P::new(1.0, 0.0), P::zero()).is_err());
    }

    #[test]
    fn virtual_admittance_examples() {
        let mut va = VirtualAdmittanceParams { gv: 1.0, bv: 0.0, v_ref: P::new(1.0, 0.0), s_ref: P::new(0.4, 0.1) };
        let v = P::new(1.0, 0.0);
        let at_ref = current_ref_virtual_admittance(&va, v).unwrap();
        assert_eq!(at_ref, current_ref_from_power(va.s_ref, v).unwrap());

        va.s_ref = P::zero();
        let i = current_ref_virtual_admittance(&va, P::new(0.95, 0.0)).unwrap();
        assert_abs_diff_eq!(i.d, 0.05, epsilon = 1e-15);
        assert_abs_diff_eq!(i.q, 0.0);
        va.gv = 0.0;
        va.bv = 1.0;
        let i = current_ref_virtual_admittance(&va, P::new(0.95, 0.0)).unwrap();
        assert_abs_diff_eq!(i.d, 0.0);
        assert_abs_diff_eq!(i.q, 0.05, epsilon = 1e-15);
    }

    #[test]
    fn outer_loop_examples() {
        let p = OuterGflParams { kp_o: 5.0, ki_o: 20.0, v_ref_o: P::new(1.0, 1.0) };
        let (i, xd) = current_ref_outer_loops(&OuterGflState::default(), &p, 1.0, 1.0);
        assert_eq!(i, P::zero());
        assert_eq!(xd, P::zero());
        let (i, xd) = current_ref_outer_loops(&OuterGflState::default(), &p, 0.98, 1.0);
        assert_abs_diff_eq!(i.d, 0.1, epsilon = 1e-14);
        assert_abs_diff_eq!(xd.d, 0.02, epsilon = 1e-15);
        // any nonzero voltage error leaves a nonzero integrator derivative
        let (_, xd) = current_ref_outer_loops(&OuterGflState::default(), &p, 1.0, 0.99);
        assert!(xd.q != 0.0);
    }
}
