use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use causalkv::checker;
use causalkv::sim::trace::read_jsonl;
use causalkv_cli::{experiment, Preset, PresetName};

#[derive(Parser)]
#[command(name = "causalkv", about = "Causal key-value store simulator and experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a preset for both protocols and check the resulting trace.
    RunExperiment {
        preset: PresetName,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Output directory for metrics.csv, trace.jsonl and verdict.json.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// JSON merge patch applied to the preset's parameters.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Print the effective parameters and exit.
        #[arg(long)]
        dump_config: bool,
    },
    /// Check a JSON-lines trace and print one verdict per run.
    Check { trace: PathBuf },
}

fn run_experiment(
    name: PresetName,
    seed: u64,
    out: PathBuf,
    config: Option<PathBuf>,
    dump_config: bool,
) -> Result<bool> {
    let mut preset = Preset::defaults(name);
    if let Some(path) = config {
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let patch: serde_json::Value =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        preset = preset.patch(&patch)?;
    }
    if dump_config {
        println!("{}", serde_json::to_string_pretty(&preset)?);
        return Ok(true);
    }
    let report = experiment::run(&preset, seed)?;
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    fs::write(out.join("metrics.csv"), report.metrics.to_csv())?;
    report.write_trace(BufWriter::new(File::create(out.join("trace.jsonl"))?))?;
    fs::write(out.join("verdict.json"), report.verdict_json())?;
    for r in &report.runs {
        println!("{:<11} {:<16} {}", r.protocol, r.param, r.verdict.summary());
    }
    println!("wrote {}", out.display());
    Ok(report.pass())
}

fn check(path: PathBuf) -> Result<bool> {
    let file = File::open(&path).with_context(|| format!("opening {}", path.display()))?;
    let events = read_jsonl(BufReader::new(file))?;
    let verdicts = checker::check_runs(events)?;
    let mut pass = true;
    for v in &verdicts {
        pass &= v.pass;
        println!("{}", serde_json::to_string(v)?);
    }
    Ok(pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::RunExperiment {
            preset,
            seed,
            out,
            config,
            dump_config,
        } => run_experiment(preset, seed, out, config, dump_config),
        Command::Check { trace } => check(trace),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("consistency check failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
