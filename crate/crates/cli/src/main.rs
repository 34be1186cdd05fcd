use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};

use clap::{Parser, Subcommand};
use rsma_ofdm::harness::{
    complexity_table, emit_outputs, prepare_output_dir, run_experiment_with, write_complexity_csv,
    write_traces_csv, ExperimentSpec, OutputFormat, FAILURE_THRESHOLD,
};
use rsma_ofdm::Error;

#[derive(Parser)]
#[command(name = "rsma-ofdm", version, about = "RSMA hybrid-SIC MIMO-OFDM sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Overrides {
    /// Master seed (overrides the config file).
    #[arg(long)]
    seed: Option<u64>,
    /// Monte-Carlo trials (overrides the config file).
    #[arg(long)]
    trials: Option<usize>,
    /// Output directory (overrides the config file).
    #[arg(long)]
    out: Option<PathBuf>,
    /// No progress on stderr.
    #[arg(long, short)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run a sweep and write results, summary and metadata.
    Run {
        spec: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long, value_parser = ["csv", "json"])]
        format: Option<String>,
    },
    /// Print the receiver complexity table.
    Table1 {
        /// Spec supplying the system size and cluster grid; defaults otherwise.
        spec: Option<PathBuf>,
        /// Cluster counts, e.g. `1,2,4,16`.
        #[arg(long, value_delimiter = ',')]
        g: Option<Vec<usize>>,
        /// Write to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the trace trials of a spec and write per-iteration convergence traces.
    Trace {
        spec: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Print the default spec as a starting point.
    DefaultSpec,
}

enum Failure {
    Validation(Error),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Argument(_) | Error::Parse(_) | Error::Io(_) | Error::Dimension(_) => {
                Failure::Validation(e)
            }
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn load(path: &PathBuf, o: &Overrides) -> Result<ExperimentSpec, Failure> {
    let mut spec = ExperimentSpec::from_file(path)?;
    if let Some(seed) = o.seed {
        spec.sweep.master_seed = seed;
    }
    if let Some(trials) = o.trials {
        spec.sweep.trials = trials;
    }
    if let Some(out) = &o.out {
        spec.output.dir = out.clone();
    }
    spec.validate()?;
    prepare_output_dir(&spec.output.dir)?;
    Ok(spec)
}

fn progress(quiet: bool) -> impl Fn(usize, usize) + Sync {
    let last = AtomicUsize::new(0);
    move |done, total| {
        if quiet {
            return;
        }
        // about a hundred updates per run
        let pct = done * 100 / total.max(1);
        if last.fetch_max(pct + 1, Ordering::Relaxed) <= pct {
            eprint!("\r{done}/{total} points");
            if done == total {
                eprintln!();
            }
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { spec, overrides, format } => {
            let mut spec = load(&spec, &overrides)?;
            if let Some(f) = format {
                spec.output.format = f.parse::<OutputFormat>()?;
            }
            let results = run_experiment_with(&spec, &progress(overrides.quiet))?;
            for path in emit_outputs(&spec, &results)? {
                println!("{}", path.display());
            }
            if results.exceeds_failure_threshold() {
                return Err(Failure::Runtime(format!(
                    "{} of {} points failed (threshold {:.0}%)",
                    results.failures.len(),
                    results.rows.len() + results.failures.len(),
                    FAILURE_THRESHOLD * 100.0
                )));
            }
            Ok(())
        }
        Command::Table1 { spec, g, out } => {
            let spec = match spec {
                Some(p) => ExperimentSpec::from_file(&p)?,
                None => ExperimentSpec::default(),
            };
            let n_c = spec.system.subcarriers;
            let grid = g.unwrap_or_else(|| {
                let mut v: Vec<usize> = [1, 2, 4, n_c].into_iter().filter(|&g| g <= n_c).collect();
                v.dedup();
                v
            });
            if let Some(bad) = grid.iter().find(|&&g| g == 0 || g > n_c) {
                return Err(Error::Config(format!("cluster count {bad} outside 1..={n_c}")).into());
            }
            let table = complexity_table(&spec.system, &grid);
            match out {
                Some(p) => write_complexity_csv(fs::File::create(p).map_err(Error::from)?, &table)?,
                None => write_complexity_csv(io::stdout().lock(), &table)?,
            }
            Ok(())
        }
        Command::Trace { spec, overrides } => {
            let mut spec = load(&spec, &overrides)?;
            spec.sweep.trials = spec.sweep.trace_trials.max(1);
            spec.sweep.trace_trials = spec.sweep.trials;
            let results = run_experiment_with(&spec, &progress(overrides.quiet))?;
            let path = spec.output.dir.join("traces.csv");
            write_traces_csv(fs::File::create(&path).map_err(Error::from)?, &results.traces)?;
            println!("{}", path.display());
            for f in &results.failures {
                eprintln!(
                    "trial {} {} G={} {} dB failed: {}",
                    f.trial, f.scheme, f.clusters, f.snr_db, f.error
                );
            }
            Ok(())
        }
        Command::DefaultSpec => {
            let text = ExperimentSpec::default().to_toml_string()?;
            io::stdout().write_all(text.as_bytes()).map_err(Error::from)?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
