use serde::{Deserialize, Serialize};

use super::{solve_algebraic, Dae, NewtonSettings, PowerSystem, SimError, Trapezoid};
use crate::devices::DeviceAction;

/// Uniformly sampled named channels.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TimeSeries {
    pub time: Vec<f64>,
    pub names: Vec<String>,
    /// Column-major: `data[c][k]` is channel `c` at `time[k]`.
    pub data: Vec<Vec<f64>>,
}

impl TimeSeries {
    pub fn new(names: Vec<String>) -> Self {
        let data = vec![Vec::new(); names.len()];
        Self { time: Vec::new(), names, data }
    }

    pub fn push(&mut self, t: f64, row: &[f64]) {
        debug_assert_eq!(row.len(), self.names.len());
        self.time.push(t);
        for (c, v) in self.data.iter_mut().zip(row) {
            c.push(*v);
        }
    }

    /// Replaces the last sample.
    pub fn overwrite_last(&mut self, row: &[f64]) {
        for (c, v) in self.data.iter_mut().zip(row) {
            *c.last_mut().expect("non-empty series") = *v;
        }
    }

    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    pub fn channel(&self, name: &str) -> Option<&[f64]> {
        self.names.iter().position(|n| n == name).map(|c| self.data[c].as_slice())
    }

    pub fn add_channel(&mut self, name: impl Into<String>, values: Vec<f64>) {
        debug_assert_eq!(values.len(), self.len());
        self.names.push(name.into());
        self.data.push(values);
    }

    pub fn dt(&self) -> f64 {
        if self.time.len() > 1 {
            self.time[1] - self.time[0]
        } else {
            0.0
        }
    }

    /// Keeps the listed channels, in order. A trailing `*` matches a prefix.
    pub fn select(&self, patterns: &[String]) -> Result<TimeSeries, String> {
        if patterns.is_empty() {
            return Ok(self.clone());
        }
        let mut out = TimeSeries { time: self.time.clone(), names: Vec::new(), data: Vec::new() };
        for p in patterns {
            let hits: Vec<usize> = match p.strip_suffix('*') {
                Some(prefix) => (0..self.names.len()).filter(|&c| self.names[c].starts_with(prefix)).collect(),
                None => self.names.iter().position(|n| n == p).into_iter().collect(),
            };
            if hits.is_empty() {
                return Err(p.clone());
            }
            for c in hits {
                if !out.names.contains(&self.names[c]) {
                    out.names.push(self.names[c].clone());
                    out.data.push(self.data[c].clone());
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventAction {
    DisconnectLoad,
    ConnectLoad,
    StepPm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Event {
    pub time: f64,
    pub action: EventAction,
    pub bus: usize,
    #[serde(default)]
    pub value: f64,
}

impl Event {
    fn target(&self) -> (String, DeviceAction) {
        match self.action {
            EventAction::DisconnectLoad => (format!("load{}", self.bus), DeviceAction::Connect(false)),
            EventAction::ConnectLoad => (format!("load{}", self.bus), DeviceAction::Connect(true)),
            EventAction::StepPm => (format!("gen{}", self.bus), DeviceAction::StepPm(self.value)),
        }
    }
}

/// Integrates from the initial point to `t_end` on a fixed grid.
///
/// Events are snapped to the grid. At an event step the discrete change is
/// applied, algebraic variables are re-solved with the states frozen, and
/// the post-event values replace the sample at the event time.
pub fn simulate(
    sys: &mut PowerSystem,
    x0: Vec<f64>,
    y0: Vec<f64>,
    t_end: f64,
    dt: f64,
    events: &[Event],
) -> Result<TimeSeries, SimError> {
    if !(dt > 0.0) || !(t_end >= 0.0) {
        return Err(SimError::Validation(format!("need dt > 0 and t_end >= 0, got {dt} and {t_end}")));
    }
    let n_steps = (t_end / dt).round() as usize;
    let mut scheduled: Vec<(usize, &Event)> = events.iter().map(|e| ((e.time / dt).round() as usize, e)).collect();
    scheduled.sort_by_key(|(k, _)| *k);
    for (_, e) in &scheduled {
        let (dev, _) = e.target();
        if !sys.device_names().contains(&dev.as_str()) {
            return Err(SimError::Validation(format!("event targets unknown device {dev:?}")));
        }
    }

    let (mut x, mut y) = (x0, y0);
    let mut ts = TimeSeries::new(sys.channel_names(&x, &y)?);
    ts.push(0.0, &sys.sample(&x, &y)?);
    let mut f = vec![0.0; sys.n_diff()];
    let mut g = vec![0.0; sys.n_alg()];
    sys.residual(0.0, &x, &y, &mut f, &mut g)?;
    let mut integ = Trapezoid::new(dt);
    let settings = NewtonSettings::default();
    let mut next = 0;
    for k in 0..=n_steps {
        let t = k as f64 * dt;
        let mut changed = false;
        while next < scheduled.len() && scheduled[next].0 == k {
            let (dev, action) = scheduled[next].1.target();
            sys.apply(&dev, action)?;
            next += 1;
            changed = true;
        }
        if changed {
            y = solve_algebraic(sys, t, &x, &y, &settings)?;
            sys.residual(t, &x, &y, &mut f, &mut g)?;
            integ.invalidate();
            ts.overwrite_last(&sys.sample(&x, &y)?);
        }
        if k == n_steps {
            break;
        }
        let (x1, y1, f1, _) =
            if changed { integ.damped_step(&*sys, t, &x, &y, &f)? } else { integ.step(&*sys, t, &x, &y, &f)? };
        x = x1;
        y = y1;
        f = f1;
        ts.push((k + 1) as f64 * dt, &sys.sample(&x, &y)?);
    }
    Ok(ts)
}
