use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use tdfsa::harness::{
    run_scenario, run_sweep, write_results, write_run_dir, ConfigFile, RunResult,
};
use tdfsa::par::{self, Execution};
use tdfsa::verify;

#[derive(Parser)]
#[command(name = "tdfsa", version, about = "Age-aware framed ALOHA simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the base scenario of a config file.
    Run(RunArgs),
    /// Run every point of the config's [sweep] grid.
    Sweep(RunArgs),
    /// Check a config file without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the brute-force verification suites.
    Oracle {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for results.csv and the frame-length files; stdout if unset.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

fn load(args: &RunArgs) -> Result<ConfigFile, String> {
    let mut file = ConfigFile::load(&args.config).map_err(|e| e.to_string())?;
    if let Some(seed) = args.seed {
        file.base.seed = seed;
    }
    if let Some(t) = args.threads {
        par::set_threads(t.max(1));
    }
    Ok(file)
}

fn emit(args: &RunArgs, rows: &[RunResult]) -> Result<(), String> {
    let Format::Csv = args.format;
    match &args.out {
        Some(dir) => write_run_dir(dir, rows).map_err(|e| e.to_string()),
        None => write_results(std::io::stdout().lock(), rows).map_err(|e| e.to_string()),
    }
}

fn run(args: RunArgs) -> Result<(), String> {
    let file = load(&args)?;
    let result = run_scenario(&file.base, Execution::Parallel).map_err(|e| e.to_string())?;
    if result.closure_violations > 0 {
        eprintln!(
            "warning: {} frames broke estimator closure",
            result.closure_violations
        );
    }
    emit(&args, &[result])
}

fn sweep(args: RunArgs) -> Result<(), String> {
    let file = load(&args)?;
    let mut rows = Vec::new();
    let mut failed = 0;
    for (i, r) in run_sweep(&file, Execution::Parallel)
        .into_iter()
        .enumerate()
    {
        match r {
            Ok(row) => rows.push(row),
            Err(e) => {
                failed += 1;
                eprintln!("point {i}: {e}");
            }
        }
    }
    emit(&args, &rows)?;
    if failed > 0 {
        return Err(format!("{failed} sweep points failed"));
    }
    Ok(())
}

fn validate(config: PathBuf) -> Result<(), String> {
    let file = ConfigFile::load(&config).map_err(|e| e.to_string())?;
    let mut problems = Vec::new();
    for (i, p) in file.points().into_iter().enumerate() {
        match p {
            Ok(cfg) => problems.extend(cfg.diagnostics().into_iter().map(|d| (i, d))),
            Err(e) => problems.push((i, e.to_string())),
        }
    }
    if problems.is_empty() {
        println!("ok");
        return Ok(());
    }
    for (i, d) in &problems {
        if file.sweep.is_empty() {
            println!("{d}");
        } else {
            println!("point {i}: {d}");
        }
    }
    Err(format!("{} problems", problems.len()))
}

fn oracle(seed: u64) -> Result<(), String> {
    let reports = verify::run_all(seed);
    for r in &reports {
        println!(
            "{} {}: {}",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.detail
        );
    }
    if reports.iter().all(|r| r.passed) {
        Ok(())
    } else {
        Err("oracle failure".into())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(a) => run(a),
        Command::Sweep(a) => sweep(a),
        Command::Validate { config } => validate(config),
        Command::Oracle { seed } => oracle(seed),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
