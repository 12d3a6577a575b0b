use std::path::Path;
use std::process::{Command, Output};

use cfgrid::output::read_csv;

fn cfgrid(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cfgrid")).args(args).current_dir(cwd).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    std::fs::write(dir.join(name), text).unwrap();
    name.to_string()
}

#[test]
fn flat_run_writes_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = cfgrid(&["run", "wscc-flat.scn", "--t-end", "0.5", "--out", "res"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let res = dir.path().join("res");
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(res.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["runs"][0], "wscc-flat.csv");
    let ts = read_csv(std::fs::File::open(res.join("wscc-flat.csv")).unwrap()).unwrap();
    assert_eq!(ts.len(), 501);
    assert!(ts.names.iter().any(|n| n == "ess.delta_dot"));
    for name in ts.names.iter().filter(|n| n.starts_with("bus") && n.ends_with(".omega")) {
        assert!(ts.channel(name).unwrap().iter().all(|w| w.abs() < 1e-6), "{name}");
    }
}

#[test]
fn sweep_writes_one_csv_per_value_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["run", "-s", "pll-sweep", "--t-end", "1.1", "--sweep", "devices.ess.pll.bandwidth=10,50", "-o", "a"];
    let o = cfgrid(&args, dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let a = dir.path().join("a");
    let names = ["pll-sweep_bandwidth-10.0.csv", "pll-sweep_bandwidth-50.0.csv"];
    for n in names {
        assert!(a.join(n).exists(), "{n}");
    }
    let o = cfgrid(&["rerun", "a/manifest.json", "--out", "b"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for n in names {
        assert_eq!(std::fs::read(a.join(n)).unwrap(), std::fs::read(dir.path().join("b").join(n)).unwrap());
    }
}

#[test]
fn identity_summary_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "run",
        "sg-inertia-sweep",
        "--t-end",
        "1.5",
        "--check-identities",
        "--plot",
        "bus5.omega,bus6.omega",
        "-o",
        "r",
    ];
    let o = cfgrid(&args, dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = dir.path().join("r");
    let summary = std::fs::read_to_string(r.join("identities.csv")).unwrap();
    assert!(summary.starts_with("run,identity,max_abs,scale,max_relative\n"));
    // three sweep members × (three machines + three loads × two identities)
    assert_eq!(summary.lines().count(), 1 + 3 * 9);
    assert!(summary.contains("load6.constant_admittance"));
    let svg = std::fs::read_to_string(r.join("sg-inertia-sweep_2-3.2.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.matches("<path").count() == 2);

    let csv = "r/sg-inertia-sweep_2-3.2.csv";
    let o = cfgrid(&["plot", csv, "--channels", "gen2.omega", "-o", "g.svg"], dir.path());
    assert_eq!(code(&o), 0);
    assert!(std::fs::read_to_string(dir.path().join("g.svg")).unwrap().contains("gen2.omega"));
    assert_eq!(code(&cfgrid(&["plot", csv, "--channels", "nope", "-o", "x.svg"], dir.path())), 3);
    assert_eq!(code(&cfgrid(&["plot", csv, "-o", "x.svg"], dir.path())), 3);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let parse = write(d, "parse.toml", "name = \"x\"\nt_end = [\n");
    assert_eq!(code(&cfgrid(&["run", "-s", &parse], d)), 2);
    assert_eq!(code(&cfgrid(&["run", "-s", "no-such-scenario"], d)), 2);
    let invalid = write(d, "invalid.toml", "name = \"x\"\ndt = -1.0\n");
    assert_eq!(code(&cfgrid(&["run", "-s", &invalid], d)), 3);
    let unknown = write(d, "unknown.toml", "name = \"x\"\n[network]\nfrobnicate = 1\n");
    assert_eq!(code(&cfgrid(&["run", "-s", &unknown], d)), 2);
    assert_eq!(code(&cfgrid(&["run", "wscc-flat", "--set", "devices.ess.pll.nonsense=1", "--t-end", "0.01"], d)), 3);
    let diverge = write(
        d,
        "diverge.toml",
        "name = \"diverge\"\nt_end = 1.0\n[[events]]\ntime = 0.1\naction = \"step_pm\"\nbus = 2\nvalue = 500.0\n",
    );
    let o = cfgrid(&["run", "-s", &diverge, "-o", "dv"], d);
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stderr).contains("did not converge"));
    // the manifest is written before any run output
    assert!(d.join("dv/manifest.json").exists());
}

#[test]
fn list_and_show() {
    let dir = tempfile::tempdir().unwrap();
    let o = cfgrid(&["list"], dir.path());
    let text = String::from_utf8(o.stdout).unwrap();
    for name in ["pll-sweep", "kappa-sweep", "vsm-vs-sg", "pfr-gfm"] {
        assert!(text.contains(name));
    }
    let o = cfgrid(&["show", "vsm-sweep", "--set", "vsm.d_p=7"], dir.path());
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8(o.stdout).unwrap().contains("d_p = 7"));
}
