//! Monte Carlo engine: configuration, trials, sweeps, benchmark and export.

pub mod bench;
pub mod config;
pub mod output;
pub mod sweep;
pub mod trial;
pub mod validate;

pub use bench::{complexity_benchmark, BenchRow};
pub use config::{speed_to_alpha, Profile, SimConfig};
pub use output::{curve_csv, write_curve};
pub use sweep::{run_point, run_sweep, run_sweep_with_threads, CurvePoint, SweepMode, SweepVariable};
pub use trial::{run_trial, TrialRecord, TrialSetup};
pub use validate::{run_validation, ValidationCheck};
