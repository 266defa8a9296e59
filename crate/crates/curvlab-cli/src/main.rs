mod config;
mod output;
mod pipelines;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Result};
use clap::{Parser, Subcommand};
use serde_json::json;

use config::{check_tol, merge, parse_grid, ConfigFile, Globals};
use output::{write_atomic, Report};
use pipelines::*;

/// Numerical checks for negatively curved Kähler metrics, comparison
/// geometry on surfaces, planar conformal metrics and dimension counts.
#[derive(Parser, Debug)]
#[command(name = "curvlab", version)]
struct Cli {
    /// TOML run configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// JSON report path; the report goes to stdout when absent
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// CSV data path; a `.meta.json` sidecar is written next to it
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// Seed for every random choice
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Sample grid as lo:hi:n
    #[arg(long, global = true)]
    grid: Option<String>,
    /// Integrator or quadrature tolerance where a pipeline has one
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a metric from a generating function and validate it
    Metric(SpecArgs),
    /// Curvature components and sign classification
    Curvature(SpecArgs),
    /// Volume growth, average curvature decay or tube volumes
    Volume(SpecArgs),
    /// Solve the comparison equation u'' = k u
    Compare(CompareArgs),
    /// Three-circle inequality for f = z^m on a surface
    #[command(name = "three_circle", alias = "three-circle")]
    ThreeCircle(ThreeCircleArgs),
    /// Dimension bounds for functions of polynomial growth
    Dims(DimsArgs),
    /// Conformal metrics on the plane
    Planar(PlanarArgs),
    /// Run the example gallery of radial metrics
    Zoo(ZooArgs),
    /// Verdicts over a parameter range, as CSV
    Sweep(SweepArgs),
}

fn globals(cli: &Cli, cfg: &ConfigFile) -> Result<Globals> {
    let grid = match (&cli.grid, &cfg.grid) {
        (Some(g), _) => Some(parse_grid(g, "--grid")?),
        (None, Some(g)) => Some(parse_grid(g, "config key `grid`")?),
        _ => None,
    };
    let tol = match (cli.tol, cfg.tol) {
        (Some(t), _) => Some(check_tol(t, "--tol")?),
        (None, Some(t)) => Some(check_tol(t, "config key `tol`")?),
        _ => None,
    };
    Ok(Globals {
        out: cli.out.clone().or_else(|| cfg.out.clone()),
        data: cli.data.clone().or_else(|| cfg.data.clone()),
        seed: cli.seed.or(cfg.seed).unwrap_or(0),
        grid,
        tol,
    })
}

fn dispatch(cli: &Cli, cfg: &ConfigFile, g: &Globals) -> Result<Report> {
    macro_rules! run {
        ($args:expr, $name:literal, $f:ident) => {{
            let a = merge($args, cfg.section($name), $name)?;
            $f(&a, g)
        }};
    }
    let default;
    let command = match &cli.command {
        Some(c) => c,
        None => {
            let p = cfg.pipeline.as_deref().ok_or_else(|| anyhow!("no subcommand given and the config names no `pipeline`"))?;
            default = match p {
                "metric" => Command::Metric(Default::default()),
                "curvature" => Command::Curvature(Default::default()),
                "volume" => Command::Volume(Default::default()),
                "compare" => Command::Compare(Default::default()),
                "three_circle" => Command::ThreeCircle(Default::default()),
                "dims" => Command::Dims(Default::default()),
                "planar" => Command::Planar(Default::default()),
                "zoo" => Command::Zoo(Default::default()),
                _ => Command::Sweep(Default::default()),
            };
            &default
        }
    };
    match command {
        Command::Metric(a) => run!(a, "metric", metric),
        Command::Curvature(a) => run!(a, "curvature", curvature),
        Command::Volume(a) => run!(a, "volume", volume),
        Command::Compare(a) => run!(a, "compare", compare),
        Command::ThreeCircle(a) => run!(a, "three_circle", three_circle),
        Command::Dims(a) => run!(a, "dims", dims),
        Command::Planar(a) => run!(a, "planar", planar),
        Command::Zoo(a) => run!(a, "zoo", zoo_cmd),
        Command::Sweep(a) => run!(a, "sweep", sweep),
    }
}

fn emit(report: &Report, g: &Globals) -> Result<()> {
    let mut artifacts = Vec::new();
    let table = report.table.as_ref();
    if let (Some(path), Some(t)) = (&g.data, table) {
        write_atomic(path, &t.to_csv()?)?;
        let meta = json!({ "command": report.command, "columns": t.header, "rows": t.rows.len(), "inputs": report.inputs });
        let mut side = path.clone().into_os_string();
        side.push(".meta.json");
        write_atomic(&PathBuf::from(side), format!("{}\n", serde_json::to_string_pretty(&meta)?).as_bytes())?;
        artifacts.push(path.display().to_string());
    }
    let doc = format!("{}\n", serde_json::to_string_pretty(&report.to_json(&artifacts))?);
    match &g.out {
        Some(path) => {
            write_atomic(path, doc.as_bytes())?;
            for line in &report.summary {
                println!("{line}");
            }
        }
        // Sweeps print their table when nothing else is requested.
        None if report.command == "sweep" && g.data.is_none() => {
            if let Some(t) = table {
                print!("{}", String::from_utf8(t.to_csv()?)?);
            }
        }
        None => print!("{doc}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let started = Instant::now();
    let result = (|| -> Result<Report> {
        let cfg = match &cli.config {
            Some(p) => ConfigFile::load(p)?,
            None => ConfigFile::default(),
        };
        let g = globals(&cli, &cfg)?;
        let report = dispatch(&cli, &cfg, &g)?;
        emit(&report, &g)?;
        Ok(report)
    })();
    match result {
        Ok(report) => {
            eprintln!("finished in {:.3} s", started.elapsed().as_secs_f64());
            if report.verdict() {
                ExitCode::SUCCESS
            } else {
                for c in report.failing() {
                    eprintln!("check failed: {} (margin {:e} at {})", c.name, c.worst_margin, c.location);
                }
                ExitCode::from(2)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
