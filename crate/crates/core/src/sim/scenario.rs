//! Declarative scenarios: network, devices, events, an optional parameter
//! sweep and output selection, read from TOML.
//!
//! ```toml
//! name = "example"
//! t_end = 5.0
//! dt = 0.001
//!
//! [network]
//! dataset = "builtin:wscc9"
//! constant_power_loads = [8]
//!
//! [[devices]]
//! name = "ess"
//! kind = "gfl"
//! bus = 5
//! p = 0.2
//! pll = { bandwidth = 30.0 }
//!
//! [[events]]
//! time = 1.0
//! action = "disconnect_load"
//! bus = 5
//!
//! [sweep]
//! parameter = "devices.ess.pll.bandwidth"
//! values = [10.0, 30.0, 100.0]
//!
//! [outputs]
//! channels = ["bus5.*", "ess.p"]
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{simulate, DeviceKindSpec, DeviceSpec, Event, PowerSystem, SimError, SystemSpec, TimeSeries};
use crate::analysis::{coi_frequency, estimate_cf, IdentityKind};
use crate::controllers::{
    DroopParams, GfmVoltageParams, OuterGflParams, PfrParams, PiCurrentParams, PllParams, VirtualAdmittanceParams,
    VsmParams,
};
use crate::devices::{
    DcLink, FilterModel, FilterParams, GflParams, GfmParams, IdealKind, PfrConfig, PfrInput, ReferenceSource,
    SyncScheme,
};
use crate::network::{parse_dataset, NetworkModel, C64};
use crate::park::ParkVector;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("parse error{}: {msg}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Parse { line: Option<usize>, msg: String },
    #[error("invalid scenario: {0}")]
    Validation(String),
}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Validation(msg.into())
}

fn default_t_end() -> f64 {
    5.0
}
fn default_dt() -> f64 {
    1e-3
}
fn default_dataset() -> String {
    "builtin:wscc9".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub devices: Vec<DeviceConfig>,
    #[serde(default)]
    pub events: Vec<Event>,
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub outputs: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    /// `builtin:wscc9` or a dataset path relative to the scenario file.
    pub dataset: String,
    pub constant_power_loads: Vec<usize>,
    pub replace_machines: Vec<usize>,
    /// Inertia constant overrides, keyed by machine bus id.
    pub machine_h: BTreeMap<String, f64>,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            dataset: default_dataset(),
            constant_power_loads: Vec::new(),
            replace_machines: Vec::new(),
            machine_h: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviceKindConfig {
    Gfl,
    GfmDroop,
    GfmVsm,
    Ideal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurrentConfig {
    pub kp: f64,
    pub ki: f64,
    pub vff: bool,
}

impl Default for CurrentConfig {
    fn default() -> Self {
        Self { kp: 0.5, ki: 20.0, vff: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PllConfig {
    /// rad/s
    pub bandwidth: f64,
    pub damping: f64,
}

impl Default for PllConfig {
    fn default() -> Self {
        Self { bandwidth: 30.0, damping: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    Constant,
    #[default]
    Power,
    VirtualAdmittance,
    OuterLoops,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceConfig {
    pub kind: ReferenceKind,
    pub gv: f64,
    pub bv: f64,
    pub kp_o: f64,
    pub ki_o: f64,
    pub c_dc: f64,
    pub v_dc: f64,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        Self { kind: ReferenceKind::Power, gv: 0.0, bv: 0.0, kp_o: 1.0, ki_o: 10.0, c_dc: 0.05, v_dc: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VoltageConfig {
    pub kp_v: f64,
    pub ki_v: f64,
}

impl Default for VoltageConfig {
    fn default() -> Self {
        Self { kp_v: 50.0, ki_v: 10.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DroopConfig {
    pub m_p: f64,
    pub m_q: f64,
    pub t_f: f64,
}

impl Default for DroopConfig {
    fn default() -> Self {
        Self { m_p: 0.05, m_q: 0.05, t_f: 0.05 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VsmConfig {
    pub j_v: f64,
    pub d_p: f64,
    pub k_q: f64,
    pub d_q: f64,
}

impl Default for VsmConfig {
    fn default() -> Self {
        Self { j_v: 10.0, d_p: 20.0, k_q: 1.0, d_q: 10.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PfrFileConfig {
    pub enabled: bool,
    pub gain: f64,
    pub limit: f64,
    pub t_lp: f64,
    pub t_wash: f64,
    pub input: PfrInput,
}

impl Default for PfrFileConfig {
    fn default() -> Self {
        Self { enabled: true, gain: 20.0, limit: 0.1, t_lp: 0.1, t_wash: 10.0, input: PfrInput::Bus }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum IdealConfig {
    Slack,
    CurrentSource,
    ConstPf,
    #[default]
    Pq,
    Pv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceConfig {
    pub name: String,
    pub kind: DeviceKindConfig,
    pub bus: usize,
    /// Injected active power (pu). Without `p` and `q` the device takes
    /// over the generation of its bus.
    pub p: Option<f64>,
    pub q: Option<f64>,
    #[serde(default)]
    pub filter: FilterParams,
    #[serde(default)]
    pub current: CurrentConfig,
    #[serde(default)]
    pub pll: PllConfig,
    #[serde(default)]
    pub reference: ReferenceConfig,
    #[serde(default)]
    pub voltage: VoltageConfig,
    #[serde(default)]
    pub droop: DroopConfig,
    #[serde(default)]
    pub vsm: VsmConfig,
    pub pfr: Option<PfrFileConfig>,
    #[serde(default)]
    pub ideal: IdealConfig,
}

impl DeviceConfig {
    fn sections(&self) -> &'static [&'static str] {
        match self.kind {
            DeviceKindConfig::Gfl => &["filter", "current", "pll", "reference", "pfr"],
            DeviceKindConfig::GfmDroop => &["filter", "current", "voltage", "droop", "pfr"],
            DeviceKindConfig::GfmVsm => &["filter", "current", "voltage", "vsm", "pfr"],
            DeviceKindConfig::Ideal => &["ideal"],
        }
    }

    fn pfr_config(&self) -> Result<Option<PfrConfig>, ScenarioError> {
        match self.pfr {
            Some(c) if c.enabled => {
                let params = PfrParams::new(c.t_lp, c.t_wash, c.gain, c.limit)
                    .map_err(|e| invalid(format!("device {}: {e}", self.name)))?;
                Ok(Some(PfrConfig { params, input: c.input }))
            }
            _ => Ok(None),
        }
    }

    fn current_params(&self) -> Result<PiCurrentParams<f64>, ScenarioError> {
        let c = self.current;
        PiCurrentParams::new(c.kp, c.ki, c.vff, self.filter.lf, self.filter.rf)
            .map_err(|e| invalid(format!("device {}: {e}", self.name)))
    }

    pub fn to_spec(&self, omega_b: f64) -> Result<DeviceSpec, ScenarioError> {
        let err = |e: String| invalid(format!("device {}: {e}", self.name));
        self.filter.validate().map_err(err)?;
        let kind = match self.kind {
            DeviceKindConfig::Gfl => {
                let pll = PllParams::from_bandwidth(self.pll.bandwidth, self.pll.damping, omega_b)
                    .map_err(|e| err(e.to_string()))?;
                let r = self.reference;
                let reference = match r.kind {
                    ReferenceKind::Constant => ReferenceSource::Constant { i_ref: C64::default() },
                    ReferenceKind::Power => ReferenceSource::Power { s_ref: C64::default() },
                    ReferenceKind::VirtualAdmittance => ReferenceSource::VirtualAdmittance(VirtualAdmittanceParams {
                        gv: r.gv,
                        bv: r.bv,
                        v_ref: ParkVector::zero(),
                        s_ref: ParkVector::zero(),
                    }),
                    ReferenceKind::OuterLoops => {
                        if !(r.c_dc > 0.0 && r.v_dc > 0.0) {
                            return Err(err("outer loops need c_dc > 0 and v_dc > 0".into()));
                        }
                        ReferenceSource::OuterLoops {
                            params: OuterGflParams {
                                kp_o: r.kp_o,
                                ki_o: r.ki_o,
                                v_ref_o: ParkVector::new(r.v_dc, 1.0),
                            },
                            dc: DcLink { c_dc: r.c_dc, i_src: 0.0 },
                        }
                    }
                };
                DeviceKindSpec::Gfl(GflParams {
                    filter: self.filter,
                    current: self.current_params()?,
                    pll,
                    reference,
                    pfr: self.pfr_config()?,
                })
            }
            DeviceKindConfig::GfmDroop | DeviceKindConfig::GfmVsm => {
                let sync = if self.kind == DeviceKindConfig::GfmDroop {
                    let d = self.droop;
                    let p = DroopParams { m_p: d.m_p, m_q: d.m_q, t_f: d.t_f, p_ref: 0.0, q_ref: 0.0, v_n: 1.0 };
                    p.validate().map_err(|e| err(e.to_string()))?;
                    SyncScheme::Droop(p)
                } else {
                    let v = self.vsm;
                    if !(v.j_v > 0.0) || v.d_p < 0.0 {
                        return Err(err("VSM needs j_v > 0 and d_p >= 0".into()));
                    }
                    SyncScheme::Vsm(VsmParams {
                        j_v: v.j_v,
                        d_p: v.d_p,
                        k_q: v.k_q,
                        d_q: v.d_q,
                        p_ref: 0.0,
                        q_ref: 0.0,
                        v_n: 1.0,
                    })
                };
                DeviceKindSpec::Gfm(GfmParams {
                    filter: self.filter,
                    current: self.current_params()?,
                    voltage: GfmVoltageParams { kp_v: self.voltage.kp_v, ki_v: self.voltage.ki_v },
                    sync,
                    pfr: self.pfr_config()?,
                })
            }
            DeviceKindConfig::Ideal => {
                let z = ParkVector::zero();
                DeviceKindSpec::Ideal(match self.ideal {
                    IdealConfig::Slack => IdealKind::Slack { v_set: z },
                    IdealConfig::CurrentSource => IdealKind::CurrentSource { i_set: z },
                    IdealConfig::ConstPf => IdealKind::ConstPfCurrentSource { i_mag: 0.0, phi: 0.0 },
                    IdealConfig::Pq => IdealKind::PqSource { s_set: z },
                    IdealConfig::Pv => IdealKind::PvSource { p_set: 0.0, v_set: 0.0 },
                })
            }
        };
        let s = match (self.p, self.q) {
            (None, None) => None,
            (p, q) => Some(C64::new(p.unwrap_or(0.0), q.unwrap_or(0.0))),
        };
        Ok(DeviceSpec { name: self.name.clone(), bus_id: self.bus, s, kind })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// `devices.<name>.<section>.<key>`, a top-level key, or a shorthand
    /// `<section>.<key>` that resolves to a single device.
    pub parameter: String,
    pub values: Vec<toml::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Channel names to keep; a trailing `*` matches a prefix. Empty keeps
    /// everything.
    pub channels: Vec<String>,
    pub check_identities: bool,
}

/// A parsed, validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub file: ScenarioFile,
    raw: toml::Value,
    base_dir: Option<PathBuf>,
}

/// Names of the scenarios shipped with the library.
pub const BUILTIN_SCENARIOS: &[&str] = &[
    "wscc-flat",
    "pll-sweep",
    "sg-inertia-sweep",
    "kappa-sweep",
    "vff-sweep",
    "outer-loop-sweep",
    "droop-sweep",
    "vsm-sweep",
    "pfr-gfl",
    "pfr-gfm",
    "vsm-vs-sg",
];

fn builtin_text(name: &str) -> Option<&'static str> {
    Some(match name {
        "wscc-flat" => include_str!("../../scenarios/wscc-flat.toml"),
        "pll-sweep" => include_str!("../../scenarios/pll-sweep.toml"),
        "sg-inertia-sweep" => include_str!("../../scenarios/sg-inertia-sweep.toml"),
        "kappa-sweep" => include_str!("../../scenarios/kappa-sweep.toml"),
        "vff-sweep" => include_str!("../../scenarios/vff-sweep.toml"),
        "outer-loop-sweep" => include_str!("../../scenarios/outer-loop-sweep.toml"),
        "droop-sweep" => include_str!("../../scenarios/droop-sweep.toml"),
        "vsm-sweep" => include_str!("../../scenarios/vsm-sweep.toml"),
        "pfr-gfl" => include_str!("../../scenarios/pfr-gfl.toml"),
        "pfr-gfm" => include_str!("../../scenarios/pfr-gfm.toml"),
        "vsm-vs-sg" => include_str!("../../scenarios/vsm-vs-sg.toml"),
        _ => return None,
    })
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn parse_err(text: &str, e: toml::de::Error) -> ScenarioError {
    ScenarioError::Parse { line: e.span().map(|s| line_of(text, s.start)), msg: e.message().to_string() }
}

/// Parses a command-line value: integers become floats, `true`/`false`
/// booleans, anything else a string.
pub fn parse_cli_value(s: &str) -> toml::Value {
    let s = s.trim();
    if let Ok(x) = s.parse::<f64>() {
        return toml::Value::Float(x);
    }
    match s {
        "true" => toml::Value::Boolean(true),
        "false" => toml::Value::Boolean(false),
        _ => toml::Value::String(s.to_string()),
    }
}

fn value_label(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

impl Scenario {
    pub fn parse(text: &str, base_dir: Option<&Path>) -> Result<Self, ScenarioError> {
        let raw: toml::Value = toml::from_str(text).map_err(|e| parse_err(text, e))?;
        let file: ScenarioFile = toml::from_str(text).map_err(|e| parse_err(text, e))?;
        let s = Self { file, raw, base_dir: base_dir.map(Path::to_path_buf) };
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ScenarioError::Parse { line: None, msg: format!("{}: {e}", path.display()) })?;
        Self::parse(&text, path.parent())
    }

    pub fn builtin(name: &str) -> Option<Result<Self, ScenarioError>> {
        builtin_text(name).map(|t| Self::parse(t, None))
    }

    /// A built-in name, or else a file path.
    pub fn resolve(name_or_path: &str) -> Result<Self, ScenarioError> {
        let stem = name_or_path.strip_suffix(".toml").or_else(|| name_or_path.strip_suffix(".scn"));
        let path = Path::new(name_or_path);
        if !path.exists() {
            if let Some(s) = Self::builtin(stem.unwrap_or(name_or_path)) {
                return s;
            }
        }
        Self::load(path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.raw).unwrap_or_default()
    }

    fn validate(&self) -> Result<(), ScenarioError> {
        let f = &self.file;
        if !(f.dt > 0.0 && f.dt.is_finite()) {
            return Err(invalid(format!("dt must be positive, got {}", f.dt)));
        }
        if !(f.t_end >= 0.0 && f.t_end.is_finite()) {
            return Err(invalid(format!("t_end must be non-negative, got {}", f.t_end)));
        }
        for e in &f.events {
            if !(e.time >= 0.0 && e.time <= f.t_end) {
                return Err(invalid(format!("event time {} outside [0, {}]", e.time, f.t_end)));
            }
        }
        let mut names: Vec<&str> = f.devices.iter().map(|d| d.name.as_str()).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(invalid(format!("duplicate device name {:?}", w[0])));
        }
        for d in &f.devices {
            if d.name.is_empty() || d.name.contains('.') || d.name.starts_with("bus") || d.name == "system" {
                return Err(invalid(format!("device name {:?} is reserved or contains '.'", d.name)));
            }
        }
        if let Some(sw) = &f.sweep {
            for v in &sw.values {
                if let toml::Value::Float(x) = v {
                    if !x.is_finite() {
                        return Err(invalid(format!("sweep value {x} is not finite")));
                    }
                }
            }
            self.resolve_path(&sw.parameter)?;
        }
        Ok(())
    }

    /// Resolves a parameter path to key segments from the document root,
    /// with `devices.<name>` replaced by the device's array index.
    fn resolve_path(&self, path: &str) -> Result<Vec<PathSeg>, ScenarioError> {
        let parts: Vec<&str> = path.split('.').filter(|s| !s.is_empty()).collect();
        if parts.is_empty() {
            return Err(invalid("empty parameter path"));
        }
        let devices = &self.file.devices;
        let device_index = |name: &str| {
            devices
                .iter()
                .position(|d| d.name == name)
                .ok_or_else(|| invalid(format!("sweep parameter {path:?}: no device named {name:?}")))
        };
        let key = |s: &&str| PathSeg::Key(s.to_string());
        if parts[0] == "devices" {
            if parts.len() < 3 {
                return Err(invalid(format!("sweep parameter {path:?} needs devices.<name>.<key>")));
            }
            let mut out = vec![PathSeg::Key("devices".into()), PathSeg::Index(device_index(parts[1])?)];
            out.extend(parts[2..].iter().map(key));
            return Ok(out);
        }
        const TOP: &[&str] = &["name", "description", "t_end", "dt", "network", "events", "outputs"];
        if TOP.contains(&parts[0]) {
            return Ok(parts.iter().map(key).collect());
        }
        let cands: Vec<usize> = (0..devices.len())
            .filter(|&k| {
                let d = &devices[k];
                d.sections().contains(&parts[0]) || (parts.len() == 1 && ["p", "q", "bus"].contains(&parts[0]))
            })
            .collect();
        match cands.as_slice() {
            [k] => {
                let mut out = vec![PathSeg::Key("devices".into()), PathSeg::Index(*k)];
                out.extend(parts.iter().map(key));
                Ok(out)
            }
            [] => Err(invalid(format!("sweep parameter {path:?} matches no device"))),
            _ => Err(invalid(format!("sweep parameter {path:?} is ambiguous; use devices.<name>.{path}"))),
        }
    }

    /// Copy of the scenario with one parameter replaced.
    pub fn with_override(&self, path: &str, value: toml::Value) -> Result<Self, ScenarioError> {
        let segs = self.resolve_path(path)?;
        let mut raw = self.raw.clone();
        let mut node = &mut raw;
        let (last, init) = segs.split_last().expect("non-empty path");
        for seg in init {
            node = match seg {
                PathSeg::Index(i) => node
                    .as_array_mut()
                    .and_then(|a| a.get_mut(*i))
                    .ok_or_else(|| invalid(format!("parameter {path:?} does not exist")))?,
                PathSeg::Key(k) => {
                    let table = node
                        .as_table_mut()
                        .ok_or_else(|| invalid(format!("parameter {path:?}: {k} is not a table")))?;
                    table.entry(k.clone()).or_insert_with(|| toml::Value::Table(Default::default()))
                }
            };
        }
        match last {
            PathSeg::Key(k) => {
                node.as_table_mut()
                    .ok_or_else(|| invalid(format!("parameter {path:?} does not name a table field")))?
                    .insert(k.clone(), value);
            }
            PathSeg::Index(_) => return Err(invalid(format!("parameter {path:?} names a device, not a value"))),
        }
        let file: ScenarioFile = raw
            .clone()
            .try_into()
            .map_err(|e: toml::de::Error| invalid(format!("override {path}: {}", e.message())))?;
        let s = Self { file, raw, base_dir: self.base_dir.clone() };
        s.validate()?;
        Ok(s)
    }

    /// Replaces (or removes, with `None`) the sweep.
    pub fn with_sweep(&self, sweep: Option<SweepConfig>) -> Result<Self, ScenarioError> {
        let mut raw = self.raw.clone();
        let table = raw.as_table_mut().expect("scenario root is a table");
        match &sweep {
            Some(sw) => {
                let v = toml::Value::try_from(sw).map_err(|e| invalid(e.to_string()))?;
                table.insert("sweep".into(), v);
            }
            None => {
                table.remove("sweep");
            }
        }
        let mut file = self.file.clone();
        file.sweep = sweep;
        let s = Self { file, raw, base_dir: self.base_dir.clone() };
        s.validate()?;
        Ok(s)
    }

    /// One scenario per sweep value (without the sweep), or the scenario
    /// itself when there is no sweep or the sweep is empty.
    pub fn sweep_members(&self) -> Result<Vec<(Option<String>, Scenario)>, ScenarioError> {
        let base = self.with_sweep(None)?;
        match &self.file.sweep {
            Some(sw) if !sw.values.is_empty() => sw
                .values
                .iter()
                .map(|v| Ok((Some(value_label(v)), base.with_override(&sw.parameter, v.clone())?)))
                .collect(),
            _ => Ok(vec![(None, base)]),
        }
    }

    pub fn network_model(&self) -> Result<NetworkModel, ScenarioError> {
        let ds = &self.file.network.dataset;
        if let Some(name) = ds.strip_prefix("builtin:") {
            return match name {
                "wscc9" => Ok(NetworkModel::wscc9()),
                _ => Err(invalid(format!("unknown built-in dataset {name:?}"))),
            };
        }
        let path = match &self.base_dir {
            Some(d) => d.join(ds),
            None => PathBuf::from(ds),
        };
        let text = std::fs::read_to_string(&path)
            .map_err(|e| ScenarioError::Parse { line: None, msg: format!("{}: {e}", path.display()) })?;
        parse_dataset(&text).map_err(|e| ScenarioError::Parse { line: None, msg: format!("{}: {e}", path.display()) })
    }

    pub fn system_spec(&self) -> Result<SystemSpec, ScenarioError> {
        let mut network = self.network_model()?;
        for (bus, &h) in &self.file.network.machine_h {
            let id: usize = bus.parse().map_err(|_| invalid(format!("machine_h key {bus:?} is not a bus id")))?;
            if !(h > 0.0) {
                return Err(invalid(format!("machine at bus {id}: H must be positive, got {h}")));
            }
            let m = network
                .machines
                .iter_mut()
                .find(|m| m.bus == id)
                .ok_or_else(|| invalid(format!("no machine at bus {id}")))?;
            m.h = h;
        }
        let omega_b = 2.0 * std::f64::consts::PI * network.f_n;
        for d in &self.file.devices {
            if network.index_of(d.bus).is_err() {
                return Err(invalid(format!("device {} is at unknown bus {}", d.name, d.bus)));
            }
        }
        let devices = self.file.devices.iter().map(|d| d.to_spec(omega_b)).collect::<Result<_, _>>()?;
        Ok(SystemSpec {
            network,
            constant_power_loads: self.file.network.constant_power_loads.clone(),
            replace_machines: self.file.network.replace_machines.clone(),
            devices,
        })
    }

    /// Builds and integrates the scenario (ignoring any sweep) and adds
    /// derived channels. Every channel is kept.
    pub fn simulate_all(&self) -> Result<TimeSeries, RunError> {
        let spec = self.system_spec()?;
        let (mut sys, x0, y0) = PowerSystem::build(&spec)?;
        let ts = simulate(&mut sys, x0, y0, self.file.t_end, self.file.dt, &self.file.events)?;
        Ok(add_derived_channels(&sys, ts))
    }

    /// Applies `[outputs] channels`.
    pub fn select_outputs(&self, ts: &TimeSeries) -> Result<TimeSeries, ScenarioError> {
        ts.select(&self.file.outputs.channels).map_err(|c| invalid(format!("output channel {c:?} does not exist")))
    }

    /// [`Scenario::simulate_all`] followed by the output selection.
    pub fn run(&self) -> Result<TimeSeries, RunError> {
        let ts = self.simulate_all()?;
        Ok(self.select_outputs(&ts)?)
    }

    /// Identities that hold by construction for the loads, machines and
    /// devices of this scenario. They need the unselected channel set.
    pub fn identity_checks(&self) -> Result<Vec<IdentityKind>, ScenarioError> {
        let net = self.network_model()?;
        let cfg = &self.file.network;
        let mut out = Vec::new();
        for b in net.buses.iter().filter(|b| b.p_load != 0.0 || b.q_load != 0.0) {
            let (device, bus) = (format!("load{}", b.id), b.id);
            out.push(IdentityKind::ComplexPower { device: device.clone(), bus });
            out.push(if cfg.constant_power_loads.contains(&bus) {
                IdentityKind::ConstantPower { device, bus }
            } else {
                IdentityKind::ConstantAdmittance { device, bus }
            });
        }
        for m in net.machines.iter().filter(|m| !cfg.replace_machines.contains(&m.bus)) {
            out.push(IdentityKind::ComplexPower { device: format!("gen{}", m.bus), bus: m.bus });
        }
        for d in &self.file.devices {
            let (device, bus) = (d.name.clone(), d.bus);
            out.push(IdentityKind::ComplexPower { device: device.clone(), bus });
            let kappa = d.current.ki / d.current.kp;
            match d.kind {
                DeviceKindConfig::Gfl => {
                    if d.filter.model == FilterModel::Averaged {
                        out.push(if d.current.vff {
                            IdentityKind::CurrentController { device: device.clone(), kappa }
                        } else {
                            IdentityKind::CurrentControllerNoVff { device: device.clone(), kappa, kp: d.current.kp }
                        });
                    }
                    match d.reference.kind {
                        ReferenceKind::Constant => {
                            out.push(IdentityKind::ConstantCurrentReference { device: device.clone() })
                        }
                        ReferenceKind::Power
                            if d.filter.model == FilterModel::Averaged && d.pfr.is_none_or(|p| !p.enabled) =>
                        {
                            out.push(IdentityKind::PowerReference { device: device.clone(), kappa })
                        }
                        ReferenceKind::OuterLoops => {
                            out.push(IdentityKind::DcLink { device: device.clone(), c_dc: d.reference.c_dc })
                        }
                        _ => {}
                    }
                    out.push(IdentityKind::NonIdealCurrentControl { device, kappa });
                }
                DeviceKindConfig::GfmDroop => {
                    out.push(IdentityKind::QvDroopReference { device, m_q: d.droop.m_q, t_f: d.droop.t_f })
                }
                DeviceKindConfig::GfmVsm => out.push(IdentityKind::VirtualFluxReference { device }),
                DeviceKindConfig::Ideal => out.push(match d.ideal {
                    IdealConfig::Slack => IdentityKind::Slack { device, bus },
                    IdealConfig::CurrentSource => IdentityKind::CurrentSource { device, bus },
                    IdealConfig::ConstPf => IdentityKind::ConstantPowerFactor { device, bus },
                    IdealConfig::Pq => IdentityKind::ConstantPower { device, bus },
                    IdealConfig::Pv => IdentityKind::PvBus { device, bus },
                }),
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum PathSeg {
    Key(String),
    Index(usize),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RunError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Appends `bus<id>.rho` and `bus<id>.omega` (estimated complex frequency,
/// pu) for every bus and, with machines present, `system.omega_coi`.
pub fn add_derived_channels(sys: &PowerSystem, mut ts: TimeSeries) -> TimeSeries {
    let omega_n = sys.omega_b;
    for bus in sys.network.buses.iter().map(|b| b.id).collect::<Vec<_>>() {
        let (Some(d), Some(q)) = (ts.channel(&format!("bus{bus}.vd")), ts.channel(&format!("bus{bus}.vq"))) else {
            continue;
        };
        let v: Vec<ParkVector<f64>> = d.iter().zip(q).map(|(&d, &q)| ParkVector::new(d, q)).collect();
        let (rho, omega) = match estimate_cf(&ts.time, &v, omega_n) {
            Ok(cf) => (cf.rho(), cf.omega()),
            Err(_) => (vec![f64::NAN; ts.len()], vec![f64::NAN; ts.len()]),
        };
        ts.add_channel(format!("bus{bus}.rho"), rho);
        ts.add_channel(format!("bus{bus}.omega"), omega);
    }
    let machines = sys.machine_inertias();
    let speeds: Option<Vec<&[f64]>> = machines.iter().map(|(n, _)| ts.channel(&format!("{n}.omega"))).collect();
    if let (Some(speeds), false) = (speeds, machines.is_empty()) {
        let m: Vec<f64> = machines.iter().map(|(_, m)| *m).collect();
        let coi = (0..ts.len())
            .map(|k| {
                let w: Vec<f64> = speeds.iter().map(|s| s[k]).collect();
                coi_frequency(&w, &m).unwrap_or(f64::NAN)
            })
            .collect();
        ts.add_channel("system.omega_coi", coi);
    }
    ts
}

/// Result of one sweep member.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRun {
    /// Sweep value as text; `None` for a scenario without a sweep.
    pub label: Option<String>,
    pub scenario: Scenario,
    pub result: Result<TimeSeries, RunError>,
}

/// Runs every sweep member concurrently. Results are in sweep order; a
/// failing member does not affect the others.
pub fn run_sweep(scenario: &Scenario) -> Result<Vec<SweepRun>, ScenarioError> {
    sweep_with(scenario, Scenario::run)
}

/// Like [`run_sweep`], but keeps every channel of each member.
pub fn run_sweep_all(scenario: &Scenario) -> Result<Vec<SweepRun>, ScenarioError> {
    sweep_with(scenario, Scenario::simulate_all)
}

fn sweep_with(
    scenario: &Scenario,
    f: fn(&Scenario) -> Result<TimeSeries, RunError>,
) -> Result<Vec<SweepRun>, ScenarioError> {
    let members = scenario.sweep_members()?;
    Ok(members
        .into_par_iter()
        .map(|(label, scenario)| {
            let result = f(&scenario);
            SweepRun { label, scenario, result }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
name = "t"
t_end = 0.05
dt = 0.001

[[devices]]
name = "ess"
kind = "gfl"
bus = 5
p = 0.2

[sweep]
parameter = "pll.bandwidth"
values = [10.0, 20.0, 40.0]
"#;

    #[test]
    fn parses_with_defaults() {
        let s = Scenario::parse(BASE, None).unwrap();
        let d = &s.file.devices[0];
        assert_eq!(d.pll, PllConfig { bandwidth: 30.0, damping: 1.0 });
        assert_eq!(d.current, CurrentConfig::default());
        assert_eq!(s.file.network.dataset, "builtin:wscc9");
    }

    #[test]
    fn parse_errors_carry_lines() {
        let text = "name = \"x\"\nt_end = 1.0\n[[devices]]\nname = \"a\"\nkind = \"gfl\"\nbus = 5\nbogus = 1\n";
        match Scenario::parse(text, None) {
            Err(ScenarioError::Parse { line: Some(l), msg }) => {
                assert!(l >= 3, "line {l}: {msg}");
                assert!(msg.contains("bogus"), "{msg}");
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(Scenario::parse("name = ", None), Err(ScenarioError::Parse { line: Some(1), .. })));
    }

    #[test]
    fn validation_errors() {
        let bad_dt = BASE.replace("dt = 0.001", "dt = 0.0");
        assert!(matches!(Scenario::parse(&bad_dt, None), Err(ScenarioError::Validation(_))));
        let late = format!("{BASE}\n[[events]]\ntime = 3.0\naction = \"disconnect_load\"\nbus = 5\n");
        let late = late.replace("[sweep]\nparameter = \"pll.bandwidth\"\nvalues = [10.0, 20.0, 40.0]\n", "");
        assert!(matches!(Scenario::parse(&late, None), Err(ScenarioError::Validation(_))));
        let unknown = BASE.replace("pll.bandwidth", "devices.nope.pll.bandwidth");
        assert!(matches!(Scenario::parse(&unknown, None), Err(ScenarioError::Validation(_))));
    }

    #[test]
    fn sweep_members_override_the_parameter() {
        let s = Scenario::parse(BASE, None).unwrap();
        let m = s.sweep_members().unwrap();
        assert_eq!(m.len(), 3);
        let bw: Vec<f64> = m.iter().map(|(_, s)| s.file.devices[0].pll.bandwidth).collect();
        assert_eq!(bw, vec![10.0, 20.0, 40.0]);
        assert_eq!(m[1].0.as_deref(), Some("20.0"));
        assert!(m.iter().all(|(_, s)| s.file.sweep.is_none()));
    }

    #[test]
    fn empty_sweep_is_a_single_run() {
        let s = Scenario::parse(&BASE.replace("[10.0, 20.0, 40.0]", "[]"), None).unwrap();
        let m = s.sweep_members().unwrap();
        assert_eq!(m.len(), 1);
        assert!(m[0].0.is_none());
    }

    #[test]
    fn overrides_reject_typos() {
        let s = Scenario::parse(BASE, None).unwrap();
        assert!(s.with_override("devices.ess.pll.bandwith", toml::Value::Float(1.0)).is_err());
        let t = s.with_override("t_end", toml::Value::Float(2.0)).unwrap();
        assert_eq!(t.file.t_end, 2.0);
        let c = s.with_override("current.vff", toml::Value::Boolean(false)).unwrap();
        assert!(!c.file.devices[0].current.vff);
    }

    #[test]
    fn cli_values() {
        assert_eq!(parse_cli_value("2"), toml::Value::Float(2.0));
        assert_eq!(parse_cli_value("false"), toml::Value::Boolean(false));
        assert_eq!(parse_cli_value("averaged"), toml::Value::String("averaged".into()));
    }

    #[test]
    fn every_builtin_parses() {
        for name in BUILTIN_SCENARIOS {
            let s = Scenario::builtin(name).unwrap().unwrap_or_else(|e| panic!("{name}: {e}"));
            s.system_spec().unwrap_or_else(|e| panic!("{name}: {e}"));
            s.sweep_members().unwrap_or_else(|e| panic!("{name}: {e}"));
        }
        assert!(Scenario::builtin("nope").is_none());
    }
}
