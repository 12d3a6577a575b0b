//! Acceptance suite: one PASS/FAIL line per criterion.

use std::f64::consts::PI;
use std::time::Instant;

use cfgrid::analysis::{estimate_cf, identity_residual, IdentityKind, EVENT_WINDOW_STEPS};
use cfgrid::output::write_csv;
use cfgrid::sim::{run_sweep, Scenario, TimeSeries};
use cfgrid::Park;

const WN: f64 = 2.0 * PI * 60.0;

struct Outcome {
    pass: bool,
    detail: String,
}

/// Accumulates the hygiene numbers of every simulated trajectory.
#[derive(Default)]
struct Hygiene {
    net: f64,
    balance: f64,
    runs: usize,
}

impl Hygiene {
    fn record(&mut self, ts: &TimeSeries) {
        self.net = self.net.max(max_abs(ts.channel("system.net_residual").unwrap()));
        self.balance = self.balance.max(max_abs(ts.channel("system.power_balance").unwrap()));
        self.runs += 1;
    }
}

fn max_abs(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| if v.is_nan() { f64::INFINITY } else { m.max(v.abs()) })
}

fn scenario(name: &str) -> Scenario {
    Scenario::builtin(name).expect("builtin scenario").expect("valid scenario")
}

fn set(s: &Scenario, path: &str, value: impl Into<toml::Value>) -> Scenario {
    s.with_override(path, value.into()).expect("override")
}

fn event_times(s: &Scenario) -> Vec<f64> {
    s.file.events.iter().map(|e| e.time).collect()
}

/// Samples that are kept: finite and outside the window around each event.
fn mask(ts: &TimeSeries, events: &[f64]) -> Vec<bool> {
    let dt = ts.dt();
    ts.time.iter().map(|t| events.iter().all(|e| (t - e).abs() > EVENT_WINDOW_STEPS * dt + 1e-12)).collect()
}

fn peak(x: &[f64], keep: &[bool]) -> f64 {
    x.iter().zip(keep).filter(|(v, &k)| k && v.is_finite()).fold(0.0, |m, (v, _)| m.max(v.abs()))
}

fn max_diff(a: &[f64], b: &[f64], keep: &[bool]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    peak(&d, keep)
}

fn max_pairwise(series: &[Vec<f64>], keep: &[bool]) -> f64 {
    let mut m = 0.0f64;
    for i in 0..series.len() {
        for j in i + 1..series.len() {
            m = m.max(max_diff(&series[i], &series[j], keep));
        }
    }
    m
}

fn sweep(s: &Scenario, h: &mut Hygiene) -> Vec<TimeSeries> {
    run_sweep(s)
        .expect("sweep expands")
        .into_iter()
        .map(|r| {
            let ts = r.result.unwrap_or_else(|e| panic!("{}: {e}", r.label.unwrap_or_default()));
            h.record(&ts);
            ts
        })
        .collect()
}

fn run(s: &Scenario, h: &mut Hygiene) -> TimeSeries {
    let ts = s.run().unwrap_or_else(|e| panic!("{}: {e}", s.file.name));
    h.record(&ts);
    ts
}

fn ch(ts: &TimeSeries, name: &str) -> Vec<f64> {
    ts.channel(name).unwrap_or_else(|| panic!("channel {name}")).to_vec()
}

/// Frequency seen in the device frame: `ω_v − δ̇`.
fn local_omega(ts: &TimeSeries, bus: usize, device: &str) -> Vec<f64> {
    ch(ts, &format!("bus{bus}.omega")).iter().zip(ch(ts, &format!("{device}.delta_dot"))).map(|(w, d)| w - d).collect()
}

fn flat_run(h: &mut Hygiene) -> Outcome {
    let s = scenario("wscc-flat");
    let start = Instant::now();
    let ts = run(&s, h);
    let elapsed = start.elapsed().as_secs_f64();
    let mut worst = 0.0f64;
    for name in ts.names.iter().filter(|n| n.starts_with("bus") && (n.ends_with(".omega") || n.ends_with(".rho"))) {
        worst = worst.max(max_abs(ts.channel(name).unwrap()));
    }
    Outcome {
        pass: worst < 1e-6 && elapsed < 5.0 && s.file.dt == 1e-3 && s.file.t_end == 5.0,
        detail: format!("max |η| over buses {worst:.2e} pu, runtime {elapsed:.2} s"),
    }
}

fn estimator_oracle() -> Outcome {
    let (sigma, dw) = (-0.8, 2.0 * PI * 0.7);
    let dt = 1e-3;
    let t: Vec<f64> = (0..3001).map(|k| k as f64 * dt).collect();
    let v: Vec<Park> = t.iter().map(|&t| Park::from_polar((sigma * t).exp(), dw * t)).collect();
    let cf = estimate_cf(&t, &v, WN).unwrap();
    let mut rel = 0.0f64;
    for e in &cf.eta[1..t.len() - 1] {
        rel = rel.max(((e.rho - sigma / WN) / (sigma / WN)).abs());
        rel = rel.max(((e.omega - dw / WN) / (dw / WN)).abs());
    }

    // Non-exponential signal: magnitude and angle both modulated.
    let mag = |t: f64| 1.0 + 0.2 * (3.0 * t).sin();
    let ang = |t: f64| 0.5 * (5.0 * t).sin() + 2.0 * t;
    let rho = |t: f64| 0.6 * (3.0 * t).cos() / mag(t);
    let omega = |t: f64| 2.5 * (5.0 * t).cos() + 2.0;
    let err = |dt: f64| {
        let n = (1.0 / dt).round() as usize;
        let t: Vec<f64> = (0..=n).map(|k| k as f64 * dt).collect();
        let v: Vec<Park> = t.iter().map(|&t| Park::from_polar(mag(t), ang(t))).collect();
        let cf = estimate_cf(&t, &v, 1.0).unwrap();
        (1..n).map(|k| (cf.eta[k].rho - rho(t[k])).abs().max((cf.eta[k].omega - omega(t[k])).abs())).fold(0.0, f64::max)
    };
    let e: Vec<f64> = [2e-3, 1e-3, 0.5e-3].iter().map(|&d| err(d)).collect();
    let (r1, r2) = (e[0] / e[1], e[1] / e[2]);
    let second_order = [r1, r2].iter().all(|r| (3.5..4.5).contains(r));
    Outcome {
        pass: rel < 1e-8 && second_order,
        detail: format!("exponential rel. error {rel:.2e}; error ratios {r1:.3}, {r2:.3} for dt halving"),
    }
}

fn identity(kind: IdentityKind, ts: &TimeSeries, events: &[f64]) -> f64 {
    identity_residual(&kind, ts, events, WN).expect("identity evaluates").max_relative
}

fn load_identities(h: &mut Hygiene) -> Outcome {
    let s = set(&scenario("sg-inertia-sweep").with_sweep(None).unwrap(), "network.constant_power_loads", vec![8i64]);
    let ts = run(&s, h);
    let ev = event_times(&s);
    let cp = identity(IdentityKind::ConstantPower { device: "load8".into(), bus: 8 }, &ts, &ev);
    let cz = identity(IdentityKind::ConstantAdmittance { device: "load6".into(), bus: 6 }, &ts, &ev);
    let moved = peak(&ch(&ts, "bus8.omega"), &mask(&ts, &ev));
    Outcome {
        pass: cp < 1e-3 && cz < 1e-3 && moved > 1e-5,
        detail: format!(
            "constant power (bus 8) {cp:.2e}, constant admittance (bus 6) {cz:.2e}; bus-8 peak |ω| {moved:.2e}"
        ),
    }
}

fn pv_identity(h: &mut Hygiene) -> Outcome {
    let text = r#"
name = "pv-check"
t_end = 3.0
[network]
replace_machines = [3]
[[devices]]
name = "pv"
kind = "ideal"
bus = 3
ideal = "pv"
[[events]]
time = 1.0
action = "disconnect_load"
bus = 5
"#;
    let s = Scenario::parse(text, None).expect("pv scenario");
    let ts = run(&s, h);
    let ev = event_times(&s);
    let r = identity(IdentityKind::PvBus { device: "pv".into(), bus: 3 }, &ts, &ev);
    let q_swing =
        peak(&ch(&ts, "pv.q").iter().map(|q| q - ts.channel("pv.q").unwrap()[0]).collect::<Vec<_>>(), &mask(&ts, &ev));
    Outcome { pass: r < 1e-3 && q_swing > 1e-4, detail: format!("residual {r:.2e}; q excursion {q_swing:.2e} pu") }
}

fn current_nonideality(h: &mut Hygiene) -> Outcome {
    let s = scenario("kappa-sweep");
    let runs = sweep(&s, h);
    let ev = event_times(&s);
    let kp = s.file.devices[0].current.kp;
    let mut worst = 0.0f64;
    let mut peaks = Vec::new();
    for ts in &runs {
        let kappa = ch(ts, "ess.kappa")[0];
        worst = worst.max(identity(IdentityKind::NonIdealCurrentControl { device: "ess".into(), kappa }, ts, &ev));
        let (xd, xq, vd, vq) = (ch(ts, "ess.xd"), ch(ts, "ess.xq"), ch(ts, "ess.vpd"), ch(ts, "ess.vpq"));
        let ds: Vec<f64> = (0..ts.len())
            .map(|k| cfgrid::analysis::delta_sdot(Park::new(xd[k], xq[k]), Park::new(vd[k], vq[k]), kappa).magnitude())
            .collect();
        peaks.push(peak(&ds, &mask(ts, &ev)));
    }
    let increasing = peaks.windows(2).all(|w| w[1] > w[0]);
    let kis: Vec<String> = runs.iter().map(|ts| format!("{:.0}", ch(ts, "ess.kappa")[0] * kp)).collect();
    Outcome {
        pass: worst < 1e-2 && increasing,
        detail: format!(
            "match residual {worst:.2e} (need < 1e-2); peak |Δṡ| {:?} for K_i {} (strictly increasing: {increasing})",
            peaks.iter().map(|p| format!("{p:.3e}")).collect::<Vec<_>>(),
            kis.join("/")
        ),
    }
}

fn bus_cf(ts: &TimeSeries, bus: usize) -> (Vec<f64>, Vec<f64>) {
    (ch(ts, &format!("bus{bus}.rho")), ch(ts, &format!("bus{bus}.omega")))
}

fn cf_spread(runs: &[TimeSeries], bus: usize, keep: &[bool]) -> f64 {
    let (rho, omega): (Vec<_>, Vec<_>) = runs.iter().map(|ts| bus_cf(ts, bus)).unzip();
    max_pairwise(&rho, keep).max(max_pairwise(&omega, keep))
}

fn vff_effect(h: &mut Hygiene) -> Outcome {
    let on = scenario("vff-sweep");
    let off = set(&on, "devices.ess.current.vff", false);
    let ev = event_times(&on);
    let runs_on = sweep(&on, h);
    let runs_off = sweep(&off, h);
    let keep = mask(&runs_on[0], &ev);
    let (d_on, d_off) = (cf_spread(&runs_on, 5, &keep), cf_spread(&runs_off, 5, &keep));
    Outcome {
        pass: d_on < 1e-5 && d_off > 1e-4,
        detail: format!("bus-5 CF spread across K_p: with feed-forward {d_on:.2e}, without {d_off:.2e}"),
    }
}

fn outer_loops(h: &mut Hygiene) -> Outcome {
    let s = scenario("outer-loop-sweep");
    let ev = event_times(&s);
    let runs = sweep(&s, h);
    let keep = mask(&runs[0], &ev);
    let omegas: Vec<Vec<f64>> = runs.iter().map(|ts| ch(ts, "bus5.omega")).collect();
    let rhos: Vec<Vec<f64>> = runs.iter().map(|ts| ch(ts, "bus5.rho")).collect();
    let (dw, dr) = (max_pairwise(&omegas, &keep), max_pairwise(&rhos, &keep));
    let c_dc = s.file.devices[0].reference.c_dc;
    let mut dc = 0.0f64;
    for ts in &runs {
        let (vdot, i_dc, v_dc) = (ch(ts, "ess.vdc_dot"), ch(ts, "ess.i_dc"), ch(ts, "ess.v_dc"));
        for k in 0..ts.len() {
            dc = dc.max((vdot[k] / v_dc[k] - i_dc[k] / (c_dc * v_dc[k])).abs());
        }
    }
    Outcome {
        pass: dw < 1e-6 && dr > 1e-5 && dc < 1e-9 && c_dc == 0.05,
        detail: format!("bus-5 ω spread {dw:.2e}, ρ spread {dr:.2e}, dc-link relation error {dc:.2e}"),
    }
}

fn pll_decoupling(h: &mut Hygiene) -> Outcome {
    let s = scenario("pll-sweep");
    let ev = event_times(&s);
    let runs = sweep(&s, h);
    let keep = mask(&runs[0], &ev);
    let omegas: Vec<Vec<f64>> = runs.iter().map(|ts| ch(ts, "bus5.omega")).collect();
    let spread = max_pairwise(&omegas, &keep);
    let peaks: Vec<f64> = runs.iter().map(|ts| peak(&local_omega(ts, 5, "ess"), &keep)).collect();
    let peak_gap = peaks.iter().cloned().fold(f64::MIN, f64::max) - peaks.iter().cloned().fold(f64::MAX, f64::min);
    let zeta_one = s.file.devices[0].pll.damping == 1.0;
    Outcome {
        pass: spread < 1e-4 && peak_gap > 1e-3 && zeta_one,
        detail: format!(
            "bus-5 ω spread {spread:.2e}; converter-frame peaks {:?} (gap {peak_gap:.2e})",
            peaks.iter().map(|p| format!("{p:.3e}")).collect::<Vec<_>>()
        ),
    }
}

fn internal_vs_bus(h: &mut Hygiene) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, device) in [("droop-sweep", "gfm"), ("vsm-sweep", "vsm")] {
        let s = scenario(name);
        let ev = event_times(&s);
        let bus = s.file.devices[0].bus;
        assert_eq!(s.file.devices[0].name, device);
        for ts in sweep(&s, h) {
            let keep = mask(&ts, &ev);
            let internal = peak(&local_omega(&ts, bus, device), &keep);
            let at_bus = peak(&ch(&ts, &format!("bus{bus}.omega")), &keep);
            ok &= internal >= at_bus;
            parts.push(format!("{internal:.2e}≥{at_bus:.2e}"));
        }
    }
    Outcome { pass: ok, detail: format!("internal vs bus peaks (droop ×3, VSM ×3): {}", parts.join(", ")) }
}

fn pfr_effect(h: &mut Hygiene) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for name in ["pfr-gfl", "pfr-gfm"] {
        let s = scenario(name);
        let device = s.file.devices[0].name.clone();
        let limit = s.file.devices[0].pfr.as_ref().unwrap().limit;
        let ev = event_times(&s);
        let base = run(&set(&s.with_sweep(None).unwrap(), &format!("devices.{device}.pfr.enabled"), false), h);
        let keep = mask(&base, &ev);
        let base_peak = peak(&ch(&base, "bus5.omega"), &keep);
        for (ts, input) in sweep(&s, h).iter().zip(["bus", "internal"]) {
            let p = peak(&ch(ts, "bus5.omega"), &keep);
            let out = max_abs(&ch(ts, &format!("{device}.dpref")));
            ok &= p < base_peak && out <= limit;
            parts.push(format!("{name}/{input}: {p:.3e} vs {base_peak:.3e}, |Δp_ref| {out:.3}≤{limit}"));
        }
    }
    Outcome { pass: ok, detail: parts.join("; ") }
}

fn csv_bytes(ts: &TimeSeries) -> Vec<u8> {
    let mut buf = Vec::new();
    write_csv(ts, &mut buf).unwrap();
    buf
}

fn hygiene(h: &mut Hygiene) -> Outcome {
    let s = scenario("pll-sweep");
    let first: Vec<Vec<u8>> = sweep(&s, h).iter().map(csv_bytes).collect();
    let again: Vec<Vec<u8>> = sweep(&s, h).iter().map(csv_bytes).collect();
    let single = csv_bytes(&run(&s.sweep_members().unwrap()[1].1, h));
    let identical = first == again && first[1] == single;
    Outcome {
        pass: h.net < 1e-10 && h.balance < 1e-8 && identical,
        detail: format!(
            "over {} runs: max network residual {:.2e}, max power balance {:.2e}; reruns byte-identical: {identical}",
            h.runs, h.net, h.balance
        ),
    }
}

fn main() {
    let mut h = Hygiene::default();
    let results = [
        ("flat run", flat_run(&mut h)),
        ("estimator oracle", estimator_oracle()),
        ("load identities", load_identities(&mut h)),
        ("PV identity", pv_identity(&mut h)),
        ("current-controller non-ideality", current_nonideality(&mut h)),
        ("feed-forward effect", vff_effect(&mut h)),
        ("outer-loop decoupling", outer_loops(&mut h)),
        ("PLL decoupling", pll_decoupling(&mut h)),
        ("internal vs bus frequency", internal_vs_bus(&mut h)),
        ("frequency response", pfr_effect(&mut h)),
        ("numerical hygiene", hygiene(&mut h)),
    ];
    let mut failed = 0;
    for (k, (name, o)) in results.iter().enumerate() {
        println!("{} criterion {:>2} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, k + 1, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
