use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use vdba::cli::{self, CliError, Overrides, RunManifest};

/// SLA-aware merging of virtual PON bandwidth maps: experiment runner.
#[derive(Debug, Parser)]
#[command(name = "vdba", version)]
struct Args {
    #[command(subcommand)]
    command: Command,

    /// Seed for every scenario, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, env = "VDBA_OUT_DIR")]
    out_dir: Option<PathBuf>,

    /// Jobs to run in parallel.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Built-in grid: paper-heuristic, paper-stateless or paper-exact.
    #[arg(long, global = true)]
    preset: Option<String>,

    /// Fill the timing columns of results.csv (makes the file non-reproducible).
    #[arg(long, global = true)]
    timing: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a sweep and write results.csv, run_summary.json and charts.
    Run { config: Option<PathBuf> },
    /// Time the heuristic and stateless schedulers and write bench.csv.
    Bench { config: Option<PathBuf> },
    /// Check a config and print the jobs it expands to.
    Validate { config: Option<PathBuf> },
}

fn manifest(config: Option<&PathBuf>, args: &Args) -> Result<RunManifest, CliError> {
    let overrides = Overrides {
        seed: args.seed,
        out_dir: args.out_dir.clone(),
        jobs: args.jobs,
        preset: args.preset.clone(),
        timing: args.timing,
    };
    cli::load_manifest(config.map(PathBuf::as_path), &overrides)
}

fn run(args: &Args) -> Result<ExitCode, CliError> {
    match &args.command {
        Command::Run { config } => {
            let manifest = manifest(config.as_ref(), args)?;
            let report = cli::run_sweep(&manifest)?;
            for o in &report.outcomes {
                if let Err(e) = &o.result {
                    eprintln!(
                        "job failed: {} load {} share {} {}: {e}",
                        o.job.scheduler,
                        o.job.scenario.load_fraction,
                        o.job.scenario.sla_share,
                        o.job.scenario.burst_class
                    );
                }
            }
            println!(
                "{} jobs, {} failed; wrote {}",
                report.outcomes.len(),
                report.failures(),
                report.csv_path.display()
            );
            Ok(ExitCode::from(report.exit_code() as u8))
        }
        Command::Bench { config } => {
            let manifest = manifest(config.as_ref(), args)?;
            let report = cli::run_bench(&manifest);
            let (path, summary) = cli::emit_bench(&report, &manifest.out_dir)?;
            print!("{summary}");
            println!("wrote {}", path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { config } => {
            let manifest = manifest(config.as_ref(), args)?;
            let frames: u64 = manifest.jobs.iter().map(|j| j.scenario.frames).sum();
            println!(
                "ok: {} jobs, {} frames in total, output to {}",
                manifest.jobs.len(),
                frames,
                manifest.out_dir.display()
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
