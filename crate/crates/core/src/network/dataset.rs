//! Plain-text network dataset.
//!
//! ```text
//! [system]
//! base_mva 100
//! f_n 60
//! [bus]
//! # id type v_set p_gen q_gen p_load q_load [g_sh b_sh]
//! [branch]
//! # from to r x b [tap]
//! [machine]
//! # bus H D xd xd' xq xq' Td0' Tq0'
//! ```
//!
//! `#` starts a comment; fields are whitespace separated; bus type is one of
//! `slack`, `pv`, `pq`.

use super::{Branch, Bus, BusKind, MachineData, NetworkError, NetworkModel};

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    System,
    Bus,
    Branch,
    Machine,
}

fn err(line: usize, msg: impl Into<String>) -> NetworkError {
    NetworkError::Parse { line, msg: msg.into() }
}

fn numbers(line: usize, fields: &[&str], min: usize, max: usize) -> Result<Vec<f64>, NetworkError> {
    if fields.len() < min || fields.len() > max {
        return Err(err(line, format!("expected {min}..={max} fields, got {}", fields.len())));
    }
    fields
        .iter()
        .map(|f| {
            let v: f64 = f.parse().map_err(|_| err(line, format!("not a number: {f:?}")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(err(line, format!("non-finite value {f:?}")))
            }
        })
        .collect()
}

fn bus_id(line: usize, f: &str) -> Result<usize, NetworkError> {
    f.parse().map_err(|_| err(line, format!("bad bus id {f:?}")))
}

pub fn parse_dataset(text: &str) -> Result<NetworkModel, NetworkError> {
    let mut model = NetworkModel::new(Vec::new(), Vec::new());
    let mut section = Section::None;
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            section = match name.trim() {
                "system" => Section::System,
                "bus" => Section::Bus,
                "branch" => Section::Branch,
                "machine" => Section::Machine,
                other => return Err(err(line, format!("unknown section [{other}]"))),
            };
            continue;
        }
        let fields: Vec<&str> = content.split_whitespace().collect();
        match section {
            Section::None => return Err(err(line, "data outside of a section")),
            Section::System => {
                let v = numbers(line, &fields[1..], 1, 1)?[0];
                match fields[0] {
                    "base_mva" => model.base_mva = v,
                    "f_n" => model.f_n = v,
                    other => return Err(err(line, format!("unknown system key {other:?}"))),
                }
            }
            Section::Bus => {
                if fields.len() < 2 {
                    return Err(err(line, "bus row needs id and type"));
                }
                let id = bus_id(line, fields[0])?;
                let kind = match fields[1].to_ascii_lowercase().as_str() {
                    "slack" => BusKind::Slack,
                    "pv" => BusKind::Pv,
                    "pq" => BusKind::Pq,
                    other => return Err(err(line, format!("unknown bus type {other:?}"))),
                };
                let v = numbers(line, &fields[2..], 5, 7)?;
                if model.buses.iter().any(|b| b.id == id) {
                    return Err(NetworkError::DuplicateBus(id));
                }
                model.buses.push(Bus {
                    id,
                    kind,
                    v_set: v[0],
                    p_gen: v[1],
                    q_gen: v[2],
                    p_load: v[3],
                    q_load: v[4],
                    g_sh: v.get(5).copied().unwrap_or(0.0),
                    b_sh: v.get(6).copied().unwrap_or(0.0),
                });
            }
            Section::Branch => {
                if fields.len() < 2 {
                    return Err(err(line, "branch row needs from and to"));
                }
                let (from, to) = (bus_id(line, fields[0])?, bus_id(line, fields[1])?);
                let v = numbers(line, &fields[2..], 3, 4)?;
                if v[0] == 0.0 && v[1] == 0.0 {
                    return Err(err(line, "branch impedance is zero"));
                }
                model.branches.push(Branch {
                    from,
                    to,
                    r: v[0],
                    x: v[1],
                    b: v[2],
                    tap: v.get(3).copied().unwrap_or(0.0),
                });
            }
            Section::Machine => {
                let bus = bus_id(line, fields[0])?;
                let v = numbers(line, &fields[1..], 8, 8)?;
                if v[0] <= 0.0 || v[6] <= 0.0 || v[7] <= 0.0 {
                    return Err(err(line, "H and open-circuit time constants must be positive"));
                }
                model.machines.push(MachineData {
                    bus,
                    h: v[0],
                    d: v[1],
                    xd: v[2],
                    xd_p: v[3],
                    xq: v[4],
                    xq_p: v[5],
                    td0_p: v[6],
                    tq0_p: v[7],
                });
            }
        }
    }
    for br in &model.branches {
        model.index_of(br.from)?;
        model.index_of(br.to)?;
    }
    for m in &model.machines {
        model.index_of(m.bus)?;
    }
    Ok(model)
}
