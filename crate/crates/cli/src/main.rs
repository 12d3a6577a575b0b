use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use cfgrid::analysis::identity_residual;
use cfgrid::output::{format_f64, plot_svg, read_csv, write_csv, RunManifest};
use cfgrid::sim::{parse_cli_value, run_sweep_all, Scenario, SweepConfig, BUILTIN_SCENARIOS};

#[derive(Parser)]
#[command(
    name = "cfgrid",
    version,
    about = "Complex-frequency simulation of converter controls on the WSCC 9-bus system"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario (and its sweep) and write CSV results.
    Run(RunArgs),
    /// Re-run the scenario recorded in a manifest.json.
    Rerun {
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Plot channels of a result CSV as SVG.
    Plot {
        csv: PathBuf,
        /// Comma-separated channel names.
        #[arg(long, value_delimiter = ',')]
        channels: Vec<String>,
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long)]
        title: Option<String>,
    },
    /// List the built-in scenarios.
    List,
    /// Print a scenario, with overrides applied, as TOML.
    Show {
        scenario: String,
        #[arg(long = "set", value_name = "PATH=VALUE")]
        set: Vec<String>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Built-in scenario name or path to a scenario file.
    #[arg(long, short, required_unless_present = "name")]
    scenario: Option<String>,
    #[arg(conflicts_with = "scenario", hide = true)]
    name: Option<String>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    /// Output directory (default: out/<scenario name>).
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Replace the scenario's sweep: `param=v1,v2,...`.
    #[arg(long)]
    sweep: Option<String>,
    /// Override a parameter, e.g. `--set devices.ess.pll.bandwidth=50`.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    set: Vec<String>,
    /// Write identities.csv with residuals of the applicable identities.
    #[arg(long)]
    check_identities: bool,
    /// Also render these channels (comma-separated) to one SVG per run.
    #[arg(long, value_delimiter = ',')]
    plot: Vec<String>,
}

fn split_assignment(s: &str) -> Result<(&str, &str)> {
    s.split_once('=').filter(|(k, _)| !k.is_empty()).with_context(|| format!("expected PATH=VALUE, got {s:?}"))
}

fn apply_overrides(mut scenario: Scenario, set: &[String]) -> Result<Scenario> {
    for kv in set {
        let (k, v) = split_assignment(kv)?;
        scenario = scenario.with_override(k, parse_cli_value(v)).map_err(cfgrid::Error::from)?;
    }
    Ok(scenario)
}

fn file_stem(name: &str, parameter: Option<&str>, label: Option<&str>) -> String {
    let raw = match (parameter, label) {
        (Some(p), Some(l)) => format!("{name}_{}-{l}", p.rsplit('.').next().unwrap_or(p)),
        _ => name.to_string(),
    };
    raw.chars().map(|c| if c.is_ascii_alphanumeric() || "._-".contains(c) { c } else { '_' }).collect()
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn execute(scenario: Scenario, source: &str, out: Option<PathBuf>, check: bool, plot: &[String]) -> Result<()> {
    let out = out.unwrap_or_else(|| PathBuf::from("out").join(&scenario.file.name));
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let members = scenario.sweep_members().map_err(cfgrid::Error::from)?;
    let parameter = scenario.file.sweep.as_ref().map(|s| s.parameter.clone());
    let stems: Vec<String> = members
        .iter()
        .map(|(label, _)| file_stem(&scenario.file.name, parameter.as_deref(), label.as_deref()))
        .collect();

    let manifest = RunManifest::new(
        source,
        scenario.to_toml(),
        &out.display().to_string(),
        stems.iter().map(|s| format!("{s}.csv")).collect(),
    );
    write_file(&out.join("manifest.json"), manifest.to_json().as_bytes())?;

    let check = check || scenario.file.outputs.check_identities;
    let mut identity_rows = Vec::new();
    let mut first_error: Option<cfgrid::Error> = None;
    for (run, stem) in run_sweep_all(&scenario).map_err(cfgrid::Error::from)?.into_iter().zip(&stems) {
        let full = match run.result {
            Ok(ts) => ts,
            Err(e) => {
                if stems.len() > 1 {
                    eprintln!("{stem}: {e}");
                }
                first_error.get_or_insert(e.into());
                continue;
            }
        };
        if check {
            let events: Vec<f64> = run.scenario.file.events.iter().map(|e| e.time).collect();
            let omega_n = 2.0 * std::f64::consts::PI * run.scenario.network_model().map_err(cfgrid::Error::from)?.f_n;
            for kind in run.scenario.identity_checks().map_err(cfgrid::Error::from)? {
                let r = identity_residual(&kind, &full, &events, omega_n).map_err(cfgrid::Error::from)?;
                identity_rows.push([
                    stem.clone(),
                    r.label,
                    format_f64(r.max_abs),
                    format_f64(r.scale),
                    format_f64(r.max_relative),
                ]);
            }
        }
        let ts = run.scenario.select_outputs(&full).map_err(cfgrid::Error::from)?;
        let csv_path = out.join(format!("{stem}.csv"));
        let file = fs::File::create(&csv_path).with_context(|| format!("creating {}", csv_path.display()))?;
        write_csv(&ts, BufWriter::new(file)).map_err(cfgrid::Error::from)?;
        println!("{}: {} samples, {} channels", csv_path.display(), ts.len(), ts.names.len());
        if !plot.is_empty() {
            let svg = plot_svg(&full, plot, stem).map_err(cfgrid::Error::from)?;
            let svg_path = out.join(format!("{stem}.svg"));
            write_file(&svg_path, svg.as_bytes())?;
            println!("{}", svg_path.display());
        }
    }
    if check {
        let path = out.join("identities.csv");
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("creating {}", path.display()))?;
        w.write_record(["run", "identity", "max_abs", "scale", "max_relative"])?;
        for row in &identity_rows {
            w.write_record(row)?;
        }
        w.flush()?;
        println!("{}: {} identity checks", path.display(), identity_rows.len());
    }
    match first_error {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

fn run(args: RunArgs) -> Result<()> {
    let source = args.scenario.or(args.name).expect("clap requires a scenario");
    let mut scenario = Scenario::resolve(&source).map_err(cfgrid::Error::from)?;
    if let Some(t) = args.t_end {
        scenario = scenario.with_override("t_end", t.into()).map_err(cfgrid::Error::from)?;
    }
    if let Some(dt) = args.dt {
        scenario = scenario.with_override("dt", dt.into()).map_err(cfgrid::Error::from)?;
    }
    scenario = apply_overrides(scenario, &args.set)?;
    if let Some(spec) = &args.sweep {
        let (parameter, values) = split_assignment(spec)?;
        let values: Vec<toml::Value> = values.split(',').map(|v| parse_cli_value(v.trim())).collect();
        let sweep = SweepConfig { parameter: parameter.to_string(), values };
        scenario = scenario.with_sweep(Some(sweep)).map_err(cfgrid::Error::from)?;
    }
    execute(scenario, &source, args.out, args.check_identities, &args.plot)
}

fn rerun(manifest: &Path, out: Option<PathBuf>) -> Result<()> {
    let text = fs::read_to_string(manifest).with_context(|| format!("reading {}", manifest.display()))?;
    let m: RunManifest = serde_json::from_str(&text).with_context(|| format!("parsing {}", manifest.display()))?;
    let base = manifest.parent().map(Path::to_path_buf);
    let scenario = Scenario::parse(&m.resolved, base.as_deref()).map_err(cfgrid::Error::from)?;
    execute(scenario, &m.scenario, Some(out.unwrap_or_else(|| PathBuf::from(&m.output_dir))), false, &[])
}

fn plot(csv: &Path, channels: &[String], out: &Path, title: Option<String>) -> Result<()> {
    let file = fs::File::open(csv).with_context(|| format!("opening {}", csv.display()))?;
    let ts = read_csv(std::io::BufReader::new(file)).map_err(cfgrid::Error::from)?;
    let title = title.unwrap_or_else(|| csv.file_stem().unwrap_or_default().to_string_lossy().into_owned());
    let svg = plot_svg(&ts, channels, &title).map_err(cfgrid::Error::from)?;
    write_file(out, svg.as_bytes())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Rerun { manifest, out } => rerun(&manifest, out),
        Command::Plot { csv, channels, out, title } => plot(&csv, &channels, &out, title),
        Command::List => {
            for name in BUILTIN_SCENARIOS {
                let s = Scenario::resolve(name).expect("built-in scenarios are valid");
                println!("{name:18} {}", s.file.description);
            }
            Ok(())
        }
        Command::Show { scenario, set } => Scenario::resolve(&scenario)
            .map_err(|e| anyhow::Error::from(cfgrid::Error::from(e)))
            .and_then(|s| apply_overrides(s, &set))
            .map(|s| print!("{}", s.to_toml())),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<cfgrid::Error>().map_or(1, cfgrid::Error::exit_code);
            ExitCode::from(code as u8)
        }
    }
}
