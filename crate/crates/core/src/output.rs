//! Result files: CSV time series, SVG line plots and the run manifest.

use std::fmt::Write as _;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::TimeSeries;

#[derive(Debug, Error)]
pub enum OutputError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("malformed CSV: {0}")]
    Format(String),
    #[error("missing channel {0:?}")]
    MissingChannel(String),
    #[error("no channels selected for plotting")]
    EmptySelection,
}

/// Shortest text that parses back to the same `f64`, in exponent form for
/// very small or large magnitudes.
pub fn format_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Writes a header row (`time`, then channel names) and one row per sample.
pub fn write_csv<W: Write>(ts: &TimeSeries, out: W) -> Result<(), OutputError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = Vec::with_capacity(ts.names.len() + 1);
    header.push("time");
    header.extend(ts.names.iter().map(String::as_str));
    w.write_record(&header)?;
    let mut row = Vec::with_capacity(header.len());
    for k in 0..ts.len() {
        row.clear();
        row.push(format_f64(ts.time[k]));
        row.extend(ts.data.iter().map(|c| format_f64(c[k])));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<TimeSeries, OutputError> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    if header.get(0) != Some("time") {
        return Err(OutputError::Format("first column must be \"time\"".into()));
    }
    let mut ts = TimeSeries::new(header.iter().skip(1).map(str::to_string).collect());
    let mut row = vec![0.0; header.len() - 1];
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let parse =
            |s: &str| s.parse::<f64>().map_err(|_| OutputError::Format(format!("row {}: bad number {s:?}", line + 2)));
        let t = parse(&rec[0])?;
        for (slot, s) in row.iter_mut().zip(rec.iter().skip(1)) {
            *slot = parse(s)?;
        }
        ts.push(t, &row);
    }
    Ok(ts)
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 50.0;
const COLORS: &[&str] = &["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Renders the selected channels against time as a standalone SVG. Small
/// signals (all below 0.1 in magnitude) are drawn scaled by 10³.
pub fn plot_svg(ts: &TimeSeries, channels: &[String], title: &str) -> Result<String, OutputError> {
    if channels.is_empty() {
        return Err(OutputError::EmptySelection);
    }
    let series: Vec<&[f64]> = channels
        .iter()
        .map(|c| ts.channel(c).ok_or_else(|| OutputError::MissingChannel(c.clone())))
        .collect::<Result<_, _>>()?;
    let finite = || series.iter().flat_map(|s| s.iter().copied()).filter(|v| v.is_finite());
    let peak = finite().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = if peak > 0.0 && peak < 0.1 { 1e3 } else { 1.0 };
    let (mut lo, mut hi) = finite().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 0.0);
    }
    let (lo, hi) = (lo * scale, hi * scale);
    let pad = if hi > lo { 0.05 * (hi - lo) } else { lo.abs().max(1.0) * 0.05 };
    let (y0, y1) = (lo - pad, hi + pad);
    let (t0, t1) = match (ts.time.first(), ts.time.last()) {
        (Some(&a), Some(&b)) if b > a => (a, b),
        (Some(&a), _) => (a, a + 1.0),
        _ => (0.0, 1.0),
    };
    let pw = WIDTH - MARGIN_L - MARGIN_R;
    let ph = HEIGHT - MARGIN_T - MARGIN_B;
    let px = |t: f64| MARGIN_L + (t - t0) / (t1 - t0) * pw;
    let py = |v: f64| MARGIN_T + (y1 - v) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ =
        writeln!(s, r#"<text x="{}" y="18" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(title));
    let _ =
        writeln!(s, r#"<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    for k in 0..=5 {
        let f = k as f64 / 5.0;
        let t = t0 + f * (t1 - t0);
        let v = y0 + f * (y1 - y0);
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            px(t),
            HEIGHT - MARGIN_B + 18.0,
            fmt_tick(t)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            MARGIN_L - 6.0,
            py(v) + 4.0,
            fmt_tick(v)
        );
        let _ = writeln!(
            s,
            r##"<line x1="{MARGIN_L}" x2="{:.2}" y1="{:.2}" y2="{:.2}" stroke="#dddddd"/>"##,
            MARGIN_L + pw,
            py(v),
            py(v)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">time (s)</text>"#,
        MARGIN_L + pw / 2.0,
        HEIGHT - 12.0
    );
    let ylabel = if scale == 1.0 { "pu".to_string() } else { "pu ×10⁻³".to_string() };
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{ylabel}</text>"#,
        MARGIN_T + ph / 2.0,
        MARGIN_T + ph / 2.0
    );
    for (c, (name, data)) in channels.iter().zip(&series).enumerate() {
        let color = COLORS[c % COLORS.len()];
        let mut d = String::new();
        let mut pen_down = false;
        for (t, v) in ts.time.iter().zip(data.iter()) {
            if !v.is_finite() {
                pen_down = false;
                continue;
            }
            let _ = write!(d, "{}{:.2},{:.2} ", if pen_down { "L" } else { "M" }, px(*t), py(v * scale));
            pen_down = true;
        }
        let _ = writeln!(s, r#"<path d="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, d.trim_end());
        let ly = MARGIN_T + 16.0 + 16.0 * c as f64;
        let lx = MARGIN_L + pw - 160.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" x2="{:.2}" y1="{ly:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#,
            lx + 20.0
        );
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, lx + 26.0, ly + 4.0, escape(name));
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn fmt_tick(v: f64) -> String {
    let r = (v * 1000.0).round() / 1000.0;
    if r == 0.0 {
        "0".into()
    } else {
        format!("{r}")
    }
}

/// Everything needed to reproduce a run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub scenario: String,
    /// The fully resolved scenario (after command-line overrides), as TOML.
    pub resolved: String,
    pub output_dir: String,
    pub runs: Vec<String>,
    pub determinism: String,
    pub tool_version: String,
}

impl RunManifest {
    pub fn new(scenario: &str, resolved: String, output_dir: &str, runs: Vec<String>) -> Self {
        Self {
            scenario: scenario.to_string(),
            resolved,
            output_dir: output_dir.to_string(),
            runs,
            determinism: "fixed-step integration without random inputs; reruns of this manifest reproduce the CSV files byte for byte".into(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}
