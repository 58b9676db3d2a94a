use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Result};
use clap::{Args, Parser, Subcommand};

use zsense::io::{read_result_set, write_result_set};
use zsense::{load_config, report, run_experiment, ReportKind, Task};

#[derive(Parser, Debug)]
#[command(name = "zsense", version, about = "Lattice field sensing simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Ground-state energy and gap of the lattice model.
    GroundState(RunArgs),
    /// Reconstructed propagators with oracle columns.
    Propagator(RunArgs),
    /// Raw parity records of every source set, plus the estimates.
    Protocol(RunArgs),
    /// Ion-crystal equilibrium and effective field couplings.
    IonMap(RunArgs),
    /// Runs the task named in the config over its sweep axes.
    Sweep(RunArgs),
    /// Writes CSV and JSON report files from a result set.
    Report {
        results: PathBuf,
        #[arg(long, value_enum)]
        kind: ReportKind,
        /// Output directory (defaults to the result set's directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct RunArgs {
    /// TOML experiment description.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Overrides any config key, e.g. `--set couplings.lambda=0.5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    n_sites: Option<usize>,
    #[arg(long)]
    n_max: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    m0sq: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Source strength 𝖩.
    #[arg(long)]
    strength: Option<f64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Largest Hilbert dimension.
    #[arg(long)]
    max_dim: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<String>,
    /// Result file stem.
    #[arg(long)]
    name: Option<String>,
    /// Reports to write after the run.
    #[arg(long, value_enum)]
    report: Vec<ReportKind>,
}

impl RunArgs {
    fn overrides(&self, task: Option<Task>) -> Result<Vec<(String, String)>> {
        let mut out = Vec::new();
        if let Some(t) = task {
            out.push(("task".into(), format!("\"{}\"", serde_json::to_value(t)?.as_str().unwrap())));
        }
        for s in &self.set {
            let (k, v) = s.split_once('=').ok_or_else(|| anyhow!("--set expects KEY=VALUE, got `{s}`"))?;
            out.push((k.trim().into(), v.trim().into()));
        }
        let mut push = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                out.push((k.into(), v));
            }
        };
        push("lattice.n_sites", self.n_sites.map(|v| v.to_string()));
        push("basis.n_max", self.n_max.map(|v| v.to_string()));
        push("couplings.m0sq", self.m0sq.map(fmt_f64));
        push("couplings.lambda", self.lambda.map(fmt_f64));
        push("propagator.strength", self.strength.map(fmt_f64));
        push("resources.workers", self.workers.map(|v| v.to_string()));
        push("resources.max_dim", self.max_dim.map(|v| v.to_string()));
        push("output.dir", self.out.as_ref().map(|s| format!("{s:?}")));
        push("output.name", self.name.as_ref().map(|s| format!("{s:?}")));
        Ok(out)
    }
}

/// TOML float literal (always with a decimal point or exponent).
fn fmt_f64(x: f64) -> String {
    let s = format!("{x:?}");
    if s.contains(['.', 'e', 'i', 'n']) {
        s
    } else {
        format!("{s}.0")
    }
}

/// Returns whether any row was skipped or failed.
fn run(args: &RunArgs, task: Option<Task>) -> Result<bool> {
    let config = load_config(args.config.as_deref(), &args.overrides(task)?)?;
    let rs = run_experiment(&config)?;
    let dir = Path::new(&config.output.dir);
    let path = dir.join(format!("{}.json", config.output.name));
    write_result_set(&path, &rs)?;
    let bad = rs.rows.iter().filter(|r| r.status != zsense::RowStatus::Ok).count();
    println!("{}: {} rows ({} not ok) over {} runs", path.display(), rs.rows.len(), bad, rs.runs.len());
    for kind in &args.report {
        let f = report(&rs, *kind, dir, &config.output.name)?;
        println!("{}", f.csv.display());
    }
    Ok(rs.is_partial())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::GroundState(a) => run(a, Some(Task::GroundState)),
        Command::Propagator(a) => run(a, Some(Task::Propagator)),
        Command::Protocol(a) => run(a, Some(Task::Protocol)),
        Command::IonMap(a) => run(a, Some(Task::IonMap)),
        Command::Sweep(a) => run(a, None),
        Command::Report { results, kind, out } => (|| {
            let rs = read_result_set(results)?;
            let dir = out.clone().unwrap_or_else(|| {
                results.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."))
            });
            let stem = results.file_stem().and_then(|s| s.to_str()).unwrap_or("results");
            let f = report(&rs, *kind, &dir, stem)?;
            println!("{}\n{}", f.csv.display(), f.json.display());
            Ok(false)
        })(),
    };
    match result {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
