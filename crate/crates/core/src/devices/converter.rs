//! Pieces shared by the converter models: output filter, bus-frequency
//! measurement and primary frequency response configuration.

use serde::{Deserialize, Serialize};

use crate::controllers::PfrParams;
use crate::network::C64;

/// Time constant of the angle washout that measures bus frequency, s.
pub const OMEGA_WASHOUT_T: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FilterModel {
    /// Infinitely fast current tracking: the current-controller equation is
    /// algebraic and there are no filter states.
    Averaged,
    /// Dynamic converter-side inductor; the filter capacitor is a static
    /// shunt at the bus.
    #[default]
    Inductive,
    /// Converter inductor, capacitor and grid-side coupling inductor, all
    /// dynamic.
    Lcl,
}

/// Filter data in pu (reactances at nominal frequency).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterParams {
    pub model: FilterModel,
    pub lf: f64,
    pub rf: f64,
    pub cf: f64,
    pub lg: f64,
    pub rg: f64,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self { model: FilterModel::Inductive, lf: 0.08, rf: 0.003, cf: 0.074, lg: 0.02, rg: 0.001 }
    }
}

/// Filter quantities at one instant, network frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct FilterPoint {
    /// Voltage at the control measurement point.
    pub v_m: C64,
    /// Converter-side current (controlled current).
    pub i_f: C64,
    /// Current injected into the bus.
    pub i_inj: C64,
}

impl FilterParams {
    pub(crate) fn n_states(&self) -> usize {
        match self.model {
            FilterModel::Averaged => 0,
            FilterModel::Inductive => 2,
            FilterModel::Lcl => 6,
        }
    }

    pub(crate) fn validate(&self) -> Result<(), String> {
        let ok = match self.model {
            FilterModel::Averaged => true,
            FilterModel::Inductive => self.lf > 0.0 && self.rf >= 0.0 && self.cf >= 0.0,
            FilterModel::Lcl => self.lf > 0.0 && self.cf > 0.0 && self.lg > 0.0 && self.rf >= 0.0 && self.rg >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(format!("invalid filter parameters {self:?}"))
        }
    }

    /// Not meaningful for the averaged model, whose current comes from the
    /// controller.
    pub(crate) fn point(&self, v_bus: C64, xf: &[f64]) -> FilterPoint {
        match self.model {
            FilterModel::Averaged => FilterPoint { v_m: v_bus, i_f: C64::default(), i_inj: C64::default() },
            FilterModel::Inductive => {
                let i_f = C64::new(xf[0], xf[1]);
                FilterPoint { v_m: v_bus, i_f, i_inj: i_f - C64::i() * self.cf * v_bus }
            }
            FilterModel::Lcl => {
                FilterPoint { v_m: C64::new(xf[2], xf[3]), i_f: C64::new(xf[0], xf[1]), i_inj: C64::new(xf[4], xf[5]) }
            }
        }
    }

    pub(crate) fn derivatives(&self, omega_b: f64, v_t: C64, v_bus: C64, xf: &[f64], f: &mut [f64]) {
        let j = C64::i();
        match self.model {
            FilterModel::Averaged => {}
            FilterModel::Inductive => {
                let i_f = C64::new(xf[0], xf[1]);
                let d = (v_t - v_bus - (self.rf + j * self.lf) * i_f) * (omega_b / self.lf);
                f[0] = d.re;
                f[1] = d.im;
            }
            FilterModel::Lcl => {
                let i_f = C64::new(xf[0], xf[1]);
                let v_o = C64::new(xf[2], xf[3]);
                let i_g = C64::new(xf[4], xf[5]);
                let di = (v_t - v_o - (self.rf + j * self.lf) * i_f) * (omega_b / self.lf);
                let dv = (i_f - i_g - j * self.cf * v_o) * (omega_b / self.cf);
                let dg = (v_o - v_bus - (self.rg + j * self.lg) * i_g) * (omega_b / self.lg);
                f[..6].copy_from_slice(&[di.re, di.im, dv.re, dv.im, dg.re, dg.im]);
            }
        }
    }

    /// Steady-state filter states for a given bus voltage and injection.
    /// Returns `(states, point, v_t)`.
    pub(crate) fn steady_state(&self, v_bus: C64, i_inj: C64) -> (Vec<f64>, FilterPoint, C64) {
        let j = C64::i();
        match self.model {
            FilterModel::Averaged => (Vec::new(), FilterPoint { v_m: v_bus, i_f: i_inj, i_inj }, v_bus),
            FilterModel::Inductive => {
                let i_f = i_inj + j * self.cf * v_bus;
                let v_t = v_bus + (self.rf + j * self.lf) * i_f;
                (vec![i_f.re, i_f.im], FilterPoint { v_m: v_bus, i_f, i_inj }, v_t)
            }
            FilterModel::Lcl => {
                let v_o = v_bus + (self.rg + j * self.lg) * i_inj;
                let i_f = i_inj + j * self.cf * v_o;
                let v_t = v_o + (self.rf + j * self.lf) * i_f;
                let x = vec![i_f.re, i_f.im, v_o.re, v_o.im, i_inj.re, i_inj.im];
                (x, FilterPoint { v_m: v_o, i_f, i_inj }, v_t)
            }
        }
    }
}

/// Bus frequency deviation (pu) from the angle washout state `z` (rad),
/// and `dz/dt`.
pub(crate) fn measure_omega(v: C64, z: f64, omega_b: f64) -> (f64, f64) {
    let psi = (v * C64::from_polar(1.0, -z)).arg();
    (psi / (OMEGA_WASHOUT_T * omega_b), psi / OMEGA_WASHOUT_T)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PfrInput {
    /// Measured bus frequency deviation.
    #[default]
    Bus,
    /// Frequency in the converter's own frame: bus frequency minus slip.
    Internal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PfrConfig {
    pub params: PfrParams<f64>,
    pub input: PfrInput,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn steady_states_are_equilibria() {
        let v = C64::from_polar(1.01, 0.2);
        let i = C64::new(0.3, -0.1);
        for model in [FilterModel::Inductive, FilterModel::Lcl] {
            let p = FilterParams { model, ..Default::default() };
            let (x, pt, v_t) = p.steady_state(v, i);
            let mut f = vec![0.0; p.n_states()];
            p.derivatives(377.0, v_t, v, &x, &mut f);
            assert!(f.iter().all(|d| d.abs() < 1e-12), "{model:?}: {f:?}");
            assert!((p.point(v, &x).i_inj - i).norm() < 1e-15);
            assert_eq!(p.point(v, &x), pt);
        }
    }

    #[test]
    fn washout_measures_rotation() {
        let wb = 377.0;
        let dw = 0.002;
        // steady lag: the state trails the angle by T·ω_b·Δω
        let z = 0.5 - OMEGA_WASHOUT_T * wb * dw;
        let (w, zd) = measure_omega(C64::from_polar(1.0, 0.5), z, wb);
        assert!((w - dw).abs() < 1e-15);
        assert!((zd - wb * dw).abs() < 1e-12);
    }
}
