use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use alpert_lab::cli::{run, RunOptions};

/// Batch runner for Alpert-wavelet and two-weight experiments.
#[derive(Parser, Debug)]
#[command(version, about)]
struct Args {
    /// TOML experiment file
    #[arg(long, env = "ALPERT_LAB_CONFIG")]
    config: PathBuf,
    /// output directory for the CSVs and manifest.json
    #[arg(long, env = "ALPERT_LAB_OUT", default_value = "out")]
    out: PathBuf,
    /// master seed, overrides the config
    #[arg(long, env = "ALPERT_LAB_SEED")]
    seed: Option<u64>,
    /// experiments run in parallel when above 1
    #[arg(long, env = "ALPERT_LAB_JOBS", default_value_t = 1)]
    jobs: usize,
    /// largest mesh depth an experiment may allocate
    #[arg(long, env = "ALPERT_LAB_DEPTH_CAP")]
    depth_cap: Option<u32>,
}

fn main() -> ExitCode {
    let a = Args::parse();
    let opts = RunOptions { config: a.config, out: a.out, seed: a.seed, jobs: a.jobs.max(1), depth_cap: a.depth_cap };
    match run(&opts) {
        Ok(m) => {
            for e in m.experiments.iter().filter(|e| e.status != "ok") {
                eprintln!("experiment {} ({}) failed: {}", e.index, e.kind, e.message);
            }
            eprintln!("{} experiments, {} failed, output in {}", m.experiments.len(), m.failures(), opts.out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
