use serde::{Deserialize, Serialize};

use super::{push_complex, DeviceAction, DeviceError, DeviceModel};
use crate::network::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadKind {
    ConstantAdmittance,
    ConstantPower,
}

/// Static load. `s_nom` is the consumed power; the admittance is frozen
/// from the initial bus voltage.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticLoad {
    pub name: String,
    pub bus: usize,
    pub kind: LoadKind,
    pub s_nom: C64,
    pub y: C64,
    pub connected: bool,
}

impl StaticLoad {
    pub fn new(name: impl Into<String>, bus: usize, kind: LoadKind, s_nom: C64, v0: C64) -> Result<Self, DeviceError> {
        let vm2 = v0.norm_sqr();
        if !(vm2 > 0.0) {
            return Err(DeviceError::Init("load bus voltage is zero".into()));
        }
        Ok(Self { name: name.into(), bus, kind, s_nom, y: s_nom.conj() / vm2, connected: true })
    }

    pub fn injection(&self, v: C64) -> C64 {
        if !self.connected {
            return C64::default();
        }
        match self.kind {
            LoadKind::ConstantAdmittance => -self.y * v,
            LoadKind::ConstantPower => -(self.s_nom / v).conj(),
        }
    }
}

impl DeviceModel for StaticLoad {
    fn name(&self) -> &str {
        &self.name
    }
    fn bus(&self) -> usize {
        self.bus
    }
    fn n_diff(&self) -> usize {
        0
    }
    fn eval(&self, v: C64, _x: &[f64], _y: &[f64], _f: &mut [f64], _g: &mut [f64]) -> Result<C64, DeviceError> {
        Ok(self.injection(v))
    }
    fn signals(&self, v: C64, _x: &[f64], _y: &[f64]) -> Result<Vec<(&'static str, f64)>, DeviceError> {
        let i = self.injection(v);
        let mut out = Vec::with_capacity(5);
        push_complex(&mut out, ["id", "iq"], i);
        push_complex(&mut out, ["p", "q"], v * i.conj());
        out.push(("connected", if self.connected { 1.0 } else { 0.0 }));
        Ok(out)
    }
    fn apply(&mut self, action: DeviceAction) -> bool {
        match action {
            DeviceAction::Connect(c) => {
                self.connected = c;
                true
            }
            _ => false,
        }
    }
}
