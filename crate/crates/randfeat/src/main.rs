//! Thin experiment-runner binary: reads a sweep description from a config
//! file, runs it, and writes the result table.
//!
//! Exit codes: 0 when every cell succeeded, 2 when some cells recorded
//! errors (the sweep itself still completes).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use randfeat::experiment::{
    emit_results, parse_config, read_results, run_depth_sweep, run_grid, ExperimentKind,
    OutputFormat, ResultRecord,
};

#[derive(Parser)]
#[command(name = "randfeat", about = "Random-feature experiment runner")]
struct Args {
    /// Experiment description file.
    #[arg(long)]
    config: PathBuf,

    /// Where to write the result table.
    #[arg(long)]
    out: PathBuf,

    /// Output format.
    #[arg(long, default_value = "csv")]
    format: String,

    /// Worker threads for the sweep.
    #[arg(long, default_value_t = 1)]
    jobs: usize,

    /// Overrides the seed from the config file.
    #[arg(long)]
    seed: Option<u64>,

    /// Skip cells whose config hash already appears in the output file.
    #[arg(long)]
    resume: bool,
}

fn run(args: &Args) -> randfeat::Result<Vec<ResultRecord>> {
    let format: OutputFormat = args.format.parse()?;
    let text = std::fs::read_to_string(&args.config).map_err(|e| randfeat::Error::Io {
        path: args.config.display().to_string(),
        source: e,
    })?;
    let mut file = parse_config(&text)?;
    if let Some(seed) = args.seed {
        file.config.base_seed = seed;
    }

    rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs.max(1))
        .build_global()
        .ok();

    let existing = if args.resume && args.out.exists() {
        read_results(&args.out, format)?
    } else {
        Vec::new()
    };

    let records = match &file.kind {
        ExperimentKind::Grid => run_grid(&file.config, &existing)?,
        ExperimentKind::Depth { budgets } => run_depth_sweep(&file.config, budgets, &existing)?,
    };
    emit_results(&records, &args.out, format)?;
    Ok(records)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(records) => {
            let failed = records.iter().filter(|r| r.error.is_some()).count();
            eprintln!(
                "wrote {} records to {} ({} with errors)",
                records.len(),
                args.out.display(),
                failed
            );
            if failed > 0 {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
