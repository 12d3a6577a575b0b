use serde::{Deserialize, Serialize};

use super::ControlError;
use crate::park::ParkVector;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GfmVoltageParams<T> {
    pub kp_v: T,
    pub ki_v: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GfmVoltageState<T> {
    pub x_v: ParkVector<T>,
}

/// PI voltage controller. Returns `(i_ref, dx_v/dt)`.
pub fn gfm_voltage_ctrl<T: Scalar>(
    state: &GfmVoltageState<T>,
    params: &GfmVoltageParams<T>,
    v_ref: ParkVector<T>,
    v_local: ParkVector<T>,
) -> (ParkVector<T>, ParkVector<T>) {
    let err = v_ref - v_local;
    (err * params.kp_v + state.x_v * params.ki_v, err)
}

/// P/f and Q/V droop with first-order power filters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DroopParams<T> {
    pub m_p: T,
    pub m_q: T,
    pub t_f: T,
    pub p_ref: T,
    pub q_ref: T,
    pub v_n: T,
}

impl<T: Scalar> DroopParams<T> {
    pub fn validate(&self) -> Result<(), ControlError> {
        if !(self.t_f > T::zero()) || self.m_p < T::zero() || self.m_q < T::zero() {
            return Err(ControlError::Domain("droop needs Tf > 0 and non-negative gains".into()));
        }
        Ok(())
    }
}

/// Filtered powers `P`, `Q` and the frame angle.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DroopState<T> {
    pub p: T,
    pub q: T,
    pub delta: T,
}

/// Returns `(δ̇, dP/dt)`; `δ̇` is the slip against the bus frequency (pu).
pub fn pf_droop_derivatives<T: Scalar>(
    state: &DroopState<T>,
    params: &DroopParams<T>,
    p_h: T,
    omega_v_dev: T,
) -> (T, T) {
    let delta_dot = -omega_v_dev - params.m_p * (state.p - params.p_ref);
    (delta_dot, (p_h - state.p) / params.t_f)
}

/// Returns `(v_ref, dQ/dt)`; the reference sits on the d axis.
pub fn qv_droop_vref<T: Scalar>(state: &DroopState<T>, params: &DroopParams<T>, q_h: T) -> (ParkVector<T>, T) {
    let vd = params.v_n - params.m_q * (state.q - params.q_ref);
    (ParkVector::new(vd, T::zero()), (q_h - state.q) / params.t_f)
}

/// `η_vref v_ref = dv_ref/dt = (m_q / T_f)(Q − q_h)`, purely real.
pub fn qv_droop_vref_rate<T: Scalar>(state: &DroopState<T>, params: &DroopParams<T>, q_h: T) -> ParkVector<T> {
    ParkVector::new(params.m_q / params.t_f * (state.q - q_h), T::zero())
}

/// Virtual synchronous machine: swing equation plus virtual-flux voltage
/// loop. Per unit throughout, so `ω_n = 1` and `J_v` coincides with the
/// mechanical starting time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VsmParams<T> {
    pub j_v: T,
    pub d_p: T,
    pub k_q: T,
    pub d_q: T,
    pub p_ref: T,
    pub q_ref: T,
    pub v_n: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VsmState<T> {
    pub delta: T,
    pub omega_vsm: T,
    pub psi_v: T,
}

impl<T: Scalar> Default for VsmState<T> {
    fn default() -> Self {
        Self { delta: T::zero(), omega_vsm: T::one(), psi_v: T::one() }
    }
}

/// Returns `(δ̇, dω_VSM/dt)`; `δ̇ = ω_VSM − ω_v` with both absolute.
pub fn vsm_derivatives<T: Scalar>(
    state: &VsmState<T>,
    params: &VsmParams<T>,
    p_h: T,
    omega_v_dev: T,
) -> Result<(T, T), ControlError> {
    let w = state.omega_vsm;
    if !(w > T::zero()) {
        return Err(ControlError::Domain(format!("VSM speed must stay positive, got {w}")));
    }
    let delta_dot = w - (T::one() + omega_v_dev);
    let omega_dot = (params.p_ref - p_h / w + params.d_p * (T::one() - w)) / params.j_v;
    Ok((delta_dot, omega_dot))
}

/// Returns `(v_ref, dψ_v/dt)`; the reference sits on the q axis.
pub fn vsm_voltage_vref<T: Scalar>(state: &VsmState<T>, params: &VsmParams<T>, q_h: T, v_mag: T) -> (ParkVector<T>, T) {
    let psi_dot = params.k_q * (params.q_ref - q_h + params.d_q * (params.v_n - v_mag));
    (ParkVector::new(T::zero(), state.psi_v * state.omega_vsm), psi_dot)
}

/// `η_vref v_ref = j(ψ̇ ω_VSM + ψ ω̇_VSM)`.
pub fn vsm_vref_rate<T: Scalar>(state: &VsmState<T>, psi_dot: T, omega_dot: T) -> ParkVector<T> {
    ParkVector::new(T::zero(), psi_dot * state.omega_vsm + state.psi_v * omega_dot)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    type P = ParkVector<f64>;

    fn droop() -> DroopParams<f64> {
        DroopParams { m_p: 0.05, m_q: 0.05, t_f: 0.1, p_ref: 0.5, q_ref: 0.1, v_n: 1.0 }
    }

    fn vsm() -> VsmParams<f64> {
        VsmParams { j_v: 2.0, d_p: 0.0, k_q: 10.0, d_q: 0.0, p_ref: 0.9, q_ref: 0.1, v_n: 1.0 }
    }

    #[test]
    fn voltage_controller() {
        let p = GfmVoltageParams { kp_v: 4.0, ki_v: 10.0 };
        let v = P::new(1.0, 0.02);
        let (i, xd) = gfm_voltage_ctrl(&GfmVoltageState::default(), &p, v, v);
        assert_eq!(i, P::zero());
        assert_eq!(xd, P::zero());
        let s = GfmVoltageState { x_v: P::new(0.01, 0.0) };
        let (i, _) = gfm_voltage_ctrl(&s, &p, P::new(1.01, 0.0), P::new(1.0, 0.0));
        assert_abs_diff_eq!(i.d, 0.14, epsilon = 1e-14);
        assert_abs_diff_eq!(i.q, 0.0);
    }

    #[test]
    fn pf_droop() {
        let p = droop();
        let s = DroopState { p: 0.5, q: 0.1, delta: 0.0 };
        assert_eq!(pf_droop_derivatives(&s, &p, 0.5, 0.0), (0.0, 0.0));
        let s = DroopState { p: 0.7, ..s };
        let (dd, _) = pf_droop_derivatives(&s, &p, 0.7, 0.0);
        assert_abs_diff_eq!(dd, -0.01, epsilon = 1e-15);
        let s = DroopState { p: 0.2, ..s };
        let (_, pd) = pf_droop_derivatives(&s, &p, 0.5, 0.0);
        assert_abs_diff_eq!(pd, 3.0, epsilon = 1e-14);
        // equilibrium at an off-nominal bus frequency
        let w = -0.004;
        let s = DroopState { p: p.p_ref - w / p.m_p, ..s };
        let (dd, _) = pf_droop_derivatives(&s, &p, s.p, w);
        assert_abs_diff_eq!(dd, 0.0, epsilon = 1e-16);
    }

    #[test]
    fn qv_droop() {
        let p = droop();
        let s = DroopState { p: 0.5, q: 0.1, delta: 0.0 };
        let (v, qd) = qv_droop_vref(&s, &p, 0.1);
        assert_eq!(v, P::new(1.0, 0.0));
        assert_eq!(qd, 0.0);
        assert_eq!(qv_droop_vref_rate(&s, &p, 0.1), P::zero());
        let s = DroopState { q: 0.2, ..s };
        let (v, _) = qv_droop_vref(&s, &p, 0.2);
        assert_abs_diff_eq!(v.d, 0.995, epsilon = 1e-15);
        // rate matches d/dt of the reference through dQ/dt
        let (_, qd) = qv_droop_vref(&s, &p, 0.3);
        let rate = qv_droop_vref_rate(&s, &p, 0.3);
        assert_abs_diff_eq!(rate.d, -p.m_q * qd, epsilon = 1e-15);
        assert_eq!(rate.q, 0.0);
    }

    #[test]
    fn vsm_swing() {
        let p = vsm();
        let s = VsmState { delta: 0.0, omega_vsm: 1.0, psi_v: 1.0 };
        let (_, wd) = vsm_derivatives(&s, &p, 0.9, 0.0).unwrap();
        assert_eq!(wd, 0.0);
        let (dd, wd) = vsm_derivatives(&s, &p, 1.0, 0.0).unwrap();
        assert_abs_diff_eq!(wd, -0.05, epsilon = 1e-15);
        assert_eq!(dd, 0.0);
        let s2 = VsmState { omega_vsm: 1.003, ..s };
        let (dd, _) = vsm_derivatives(&s2, &p, 0.9, 0.003).unwrap();
        assert_abs_diff_eq!(dd, 0.0, epsilon = 1e-15);
        let bad = VsmState { omega_vsm: 0.0, ..s };
        assert!(vsm_derivatives(&bad, &p, 0.9, 0.0).is_err());
    }

    #[test]
    fn vsm_flux() {
        let p = vsm();
        let s = VsmState { delta: 0.0, omega_vsm: 1.0, psi_v: 1.0 };
        let (v, pd) = vsm_voltage_vref(&s, &p, 0.1, 1.0);
        assert_eq!(v, P::new(0.0, 1.0));
        assert_eq!(pd, 0.0);
        let (_, pd) = vsm_voltage_vref(&s, &p, 0.08, 1.0);
        assert_abs_diff_eq!(pd, 0.2, epsilon = 1e-14);
        let rate = vsm_vref_rate(&s, 0.2, -0.01);
        assert_eq!(rate.d, 0.0);
        assert_abs_diff_eq!(rate.q, 0.19, epsilon = 1e-15);
    }
}
