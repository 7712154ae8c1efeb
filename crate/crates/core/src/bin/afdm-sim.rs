use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use afdm_core::harness::{
    complexity_benchmark, curve_csv, run_sweep_with_threads, run_validation, write_curve, Profile, SimConfig,
    SweepMode, SweepVariable,
};
use afdm_core::Result;

#[derive(Parser)]
#[command(name = "afdm-sim", version, about = "AFDM channel estimation and detection simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Configuration file (JSON, or TOML by extension).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<u64>,
    /// Output path; CSV for sweeps (with a .json sidecar), JSON for bench.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "desk")]
    profile: Profile,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Channel-estimation NMSE, Monte Carlo against the closed form.
    NmseSweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "snr-p")]
        over: SweepVariable,
        /// Comma-separated grid; defaults to the config's grid.
        #[arg(long, value_delimiter = ',')]
        grid: Vec<f64>,
    },
    /// Detection BER with the Jensen bound and per-subcarrier theory.
    BerSweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "snr-d")]
        over: SweepVariable,
        #[arg(long, value_delimiter = ',')]
        grid: Vec<f64>,
    },
    /// Estimator wall time, BEM-structured against full-N MMSE.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "64,128,256")]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        reps: usize,
    },
    /// Runs the built-in oracle checks.
    Validate {
        #[command(flatten)]
        common: Common,
    },
}

fn resolve(common: &Common, ber: bool) -> Result<SimConfig> {
    let mut cfg = match &common.config {
        Some(path) => SimConfig::load(path)?,
        None if ber => SimConfig::ber_profile(common.profile),
        None => SimConfig::profile(common.profile),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = common.trials {
        cfg.trials = trials;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn sweep(common: &Common, over: SweepVariable, grid: &[f64], mode: SweepMode) -> Result<()> {
    let cfg = resolve(common, mode == SweepMode::Ber)?;
    let grid = if grid.is_empty() { over.default_grid(&cfg) } else { grid.to_vec() };
    let threads = common.threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let points = run_sweep_with_threads(&cfg, over, &grid, mode, threads)?;
    match &common.out {
        Some(out) => {
            write_curve(out, &cfg, over, mode, &points)?;
            eprintln!("wrote {}", out.display());
        }
        None => print!("{}", curve_csv(&points)?),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::NmseSweep { common, over, grid } => sweep(&common, over, &grid, SweepMode::Nmse).map(|_| true),
        Command::BerSweep { common, over, grid } => sweep(&common, over, &grid, SweepMode::Ber).map(|_| true),
        Command::Bench { common, sizes, reps } => {
            let cfg = resolve(&common, false)?;
            let rows = complexity_benchmark(&cfg, &sizes, reps)?;
            println!("{:>6} {:>12} {:>12} {:>9} {:>9} {:>9}", "N", "bem_s", "naive_s", "speedup", "bem_dim", "naive_dim");
            for r in &rows {
                println!(
                    "{:>6} {:>12.3e} {:>12.3e} {:>9.1} {:>9} {:>9}",
                    r.n, r.bem_seconds, r.naive_seconds, r.speedup, r.bem_gram_dim, r.naive_gram_dim
                );
            }
            if let Some(out) = &common.out {
                std::fs::write(out, serde_json::to_string_pretty(&rows)?)?;
            }
            Ok(true)
        }
        Command::Validate { common } => {
            let checks = run_validation(common.seed.unwrap_or(1))?;
            for c in &checks {
                println!("{} {:<28} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            if let Some(out) = &common.out {
                std::fs::write(out, serde_json::to_string_pretty(&checks)?)?;
            }
            Ok(checks.iter().all(|c| c.passed))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
