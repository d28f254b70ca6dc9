use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use ehsched::harvest::read_trace_csv;
use ehsched::metrics::packet_bound;
use ehsched::oracle::offline_optimum;
use ehsched::{BatteryCap, HarvestTiming, NetworkConfig};
use ehsched_cli::{
    bounds_csv, run_bounds, run_experiment, write_outputs, ExperimentSpec, OutputFormat, Seeds,
};

#[derive(Parser)]
#[command(
    name = "ehsched",
    version,
    about = "Energy-harvesting multichannel scheduling experiments"
)]
struct Cli {
    /// Directory for result files.
    #[arg(
        long,
        global = true,
        env = "EHSCHED_OUT_DIR",
        default_value = "results"
    )]
    out_dir: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (policy, seed) cell of a spec and write results.
    Simulate {
        #[arg(long)]
        spec: PathBuf,
        /// Seed count (`30`) or list (`1,4,9`); overrides `[run] seeds`.
        #[arg(long, value_parser = Seeds::parse)]
        seeds: Option<Seeds>,
        /// Write only this format; both are written by default.
        #[arg(long, value_enum)]
        format: Option<OutputFormat>,
    },
    /// Tabulate analytic bounds for the spec's grid.
    Bounds {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: OutputFormat,
    },
    /// Offline optimum of a trace CSV.
    Oracle {
        #[arg(long)]
        trace: PathBuf,
        /// Channel count.
        #[arg(short, long)]
        k: usize,
        /// Battery capacity; unbounded when omitted.
        #[arg(long)]
        battery_cap: Option<f64>,
        /// Energy becomes spendable one slot after it is harvested.
        #[arg(long)]
        next_slot: bool,
        #[arg(long, value_enum, default_value = "csv")]
        format: OutputFormat,
    },
}

fn simulate(
    spec: PathBuf,
    seeds: Option<Seeds>,
    format: Option<OutputFormat>,
    out_dir: PathBuf,
) -> Result<()> {
    let mut spec = ExperimentSpec::load(&spec)?;
    if let Some(s) = seeds {
        spec.run.seeds = s;
    }
    let results = run_experiment(&spec)?;
    for path in write_outputs(&results, &out_dir, format)? {
        eprintln!("wrote {}", path.display());
    }
    println!("policy,runs,mean_efficiency,min_efficiency,mean_jain,violations");
    for s in &results.summary {
        println!(
            "{},{},{:.6},{:.6},{},{}",
            s.policy,
            s.runs,
            s.mean_efficiency,
            s.min_efficiency,
            s.mean_jain.map(|j| format!("{j:.6}")).unwrap_or_default(),
            s.violations
        );
    }
    Ok(())
}

fn bounds(spec: PathBuf, format: OutputFormat, out_dir: PathBuf) -> Result<()> {
    let spec = ExperimentSpec::load(&spec)?;
    let rows = run_bounds(&spec)?;
    let (text, file) = match format {
        OutputFormat::Csv => (bounds_csv(&rows), spec.output.bounds.clone()),
        OutputFormat::Json => (
            serde_json::to_string_pretty(&rows)? + "\n",
            std::path::Path::new(&spec.output.bounds)
                .with_extension("json")
                .display()
                .to_string(),
        ),
    };
    let path = out_dir.join(file);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .with_context(|| format!("creating {}", parent.display()))?;
    }
    std::fs::write(&path, &text).with_context(|| format!("writing {}", path.display()))?;
    eprintln!("wrote {}", path.display());
    print!("{text}");
    Ok(())
}

fn oracle(
    trace: PathBuf,
    k: usize,
    cap: Option<f64>,
    next_slot: bool,
    format: OutputFormat,
) -> Result<()> {
    let file = File::open(&trace).with_context(|| format!("opening {}", trace.display()))?;
    let trace = read_trace_csv(BufReader::new(file))?;
    let cfg = NetworkConfig::new(trace.nodes(), k, trace.horizon())?
        .with_battery_cap(cap.map_or(BatteryCap::Unbounded, BatteryCap::Finite))?
        .with_harvest_timing(if next_slot {
            HarvestTiming::NextSlot
        } else {
            HarvestTiming::SameSlot
        });
    let opt = offline_optimum(&trace, &cfg)?;
    let bound = packet_bound(&trace, &cfg);
    match format {
        OutputFormat::Csv => {
            println!("m,k,N,optimum,packet_bound");
            println!(
                "{},{},{},{opt},{bound}",
                cfg.nodes, cfg.channels, cfg.horizon
            );
        }
        OutputFormat::Json => println!(
            "{}",
            serde_json::json!({
                "m": cfg.nodes,
                "k": cfg.channels,
                "N": cfg.horizon,
                "optimum": opt,
                "packet_bound": bound,
            })
        ),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate {
            spec,
            seeds,
            format,
        } => simulate(spec, seeds, format, cli.out_dir),
        Command::Bounds { spec, format } => bounds(spec, format, cli.out_dir),
        Command::Oracle {
            trace,
            k,
            battery_cap,
            next_slot,
            format,
        } => oracle(trace, k, battery_cap, next_slot, format),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
