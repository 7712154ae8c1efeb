//! Sweeps over SNR_p, SNR_d or speed, with order-stable parallel aggregation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::EstimationDiagnostics;

use super::config::SimConfig;
use super::trial::{run_trial, TrialRecord, TrialSetup};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    SnrP,
    SnrD,
    Speed,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::SnrP => "snr_p_db",
            SweepVariable::SnrD => "snr_d_db",
            SweepVariable::Speed => "speed_kmh",
        }
    }

    /// The configuration at one grid value. Only the swept quantity moves:
    /// for speed that is the channel's Doppler, while the chirp design,
    /// BEM order and frame stay at their configured values.
    pub fn apply(self, cfg: &SimConfig, value: f64) -> SimConfig {
        let mut out = cfg.clone();
        match self {
            SweepVariable::SnrP => out.frame.snr_p_db = value,
            SweepVariable::SnrD => out.detection.snr_d_db = value,
            SweepVariable::Speed => {
                out.channel.speed_kmh = Some(value);
                out.channel.alpha_max = None;
            }
        }
        out
    }

    pub fn default_grid(self, cfg: &SimConfig) -> Vec<f64> {
        match self {
            SweepVariable::SnrP => cfg.sweeps.snr_p_db.clone(),
            SweepVariable::SnrD => cfg.sweeps.snr_d_db.clone(),
            SweepVariable::Speed => cfg.sweeps.speed_kmh.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    /// Channel estimation only.
    Nmse,
    /// Estimation plus equalization and detection.
    Ber,
}

/// Aggregated result at one grid value.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurvePoint {
    pub x: f64,
    pub nmse_mc_db: f64,
    pub nmse_closed_db: f64,
    pub ber_mc: Option<f64>,
    pub ber_bound: Option<f64>,
    pub ber_theory: Option<f64>,
    /// Binomial 95 % half-width of `ber_mc`.
    pub ci_halfwidth: Option<f64>,
    pub trials: u64,
    pub failed_trials: u64,
    pub bit_errors: u64,
    pub bits: u64,
    /// Every trial's diagonal of `T` sat in one convex interval.
    pub all_convex: Option<bool>,
    pub nmse_mc: f64,
    pub nmse_closed: f64,
    pub diagnostics: EstimationDiagnostics,
}

/// Exact sums over successful trials.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Accumulator {
    pub trials: u64,
    pub failed: u64,
    pub error_energy: f64,
    pub channel_energy: f64,
    pub bit_errors: u64,
    pub bits: u64,
    pub bound_sum: f64,
    pub theory_sum: f64,
    pub all_convex: bool,
}

impl Accumulator {
    fn new() -> Self {
        Self { all_convex: true, ..Self::default() }
    }

    fn add(&mut self, r: &Result<TrialRecord>) {
        match r {
            Ok(r) => {
                self.trials += 1;
                self.error_energy += r.error_energy;
                self.channel_energy += r.channel_energy;
                self.bit_errors += r.bit_errors;
                self.bits += r.bits;
                if r.bits > 0 {
                    self.bound_sum += r.ber_bound;
                    self.theory_sum += r.ber_theory;
                    self.all_convex &= r.convex;
                }
            }
            Err(_) => self.failed += 1,
        }
    }
}

pub fn to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// `1.96 sqrt(p (1 - p) / n)`.
pub fn binomial_halfwidth(errors: u64, bits: u64) -> f64 {
    if bits == 0 {
        return f64::NAN;
    }
    let p = errors as f64 / bits as f64;
    1.96 * (p * (1.0 - p) / bits as f64).sqrt()
}

/// Runs `[start, end)` in parallel and folds the records in trial order, so
/// the sums are identical for any worker count.
fn run_range(setup: &TrialSetup, seed: u64, start: u64, end: u64, detection: bool, acc: &mut Accumulator) {
    let records: Vec<Result<TrialRecord>> =
        (start..end).into_par_iter().map(|t| run_trial(setup, seed, t, detection)).collect();
    for r in &records {
        acc.add(r);
    }
}

/// Trials for one configuration; BER runs honour the stop rule.
pub fn run_point(cfg: &SimConfig, x: f64, mode: SweepMode) -> Result<CurvePoint> {
    let setup = TrialSetup::new(cfg)?;
    let detection = mode == SweepMode::Ber;
    let mut acc = Accumulator::new();
    match (&cfg.stop, detection) {
        (Some(stop), true) => {
            let mut next = 0;
            while next < cfg.trials && acc.bit_errors < stop.min_bit_errors && acc.bits < stop.max_bits {
                let end = (next + stop.batch).min(cfg.trials);
                run_range(&setup, cfg.seed, next, end, true, &mut acc);
                next = end;
            }
        }
        _ => run_range(&setup, cfg.seed, 0, cfg.trials, detection, &mut acc),
    }
    if acc.trials == 0 {
        return Err(Error::Config(format!("all {} trials failed", acc.failed)));
    }
    let nmse_mc = acc.error_energy / acc.channel_energy;
    let nmse_closed = setup.nmse_theory.total;
    let (ber_mc, ber_bound, ber_theory, ci, convex) = if detection {
        let t = acc.trials as f64;
        (
            Some(acc.bit_errors as f64 / acc.bits as f64),
            Some(acc.bound_sum / t),
            Some(acc.theory_sum / t),
            Some(binomial_halfwidth(acc.bit_errors, acc.bits)),
            Some(acc.all_convex),
        )
    } else {
        (None, None, None, None, None)
    };
    Ok(CurvePoint {
        x,
        nmse_mc_db: to_db(nmse_mc),
        nmse_closed_db: to_db(nmse_closed),
        ber_mc,
        ber_bound,
        ber_theory,
        ci_halfwidth: ci,
        trials: acc.trials,
        failed_trials: acc.failed,
        bit_errors: acc.bit_errors,
        bits: acc.bits,
        all_convex: convex,
        nmse_mc,
        nmse_closed,
        diagnostics: setup.diagnostics(),
    })
}

/// One point per grid value. Every point reuses the same per-trial streams.
pub fn run_sweep(cfg: &SimConfig, variable: SweepVariable, grid: &[f64], mode: SweepMode) -> Result<Vec<CurvePoint>> {
    if grid.is_empty() {
        return Err(Error::Config("sweep grid is empty".into()));
    }
    grid.iter().map(|&v| run_point(&variable.apply(cfg, v), v, mode)).collect()
}

/// [`run_sweep`] on a dedicated pool of `threads` workers.
pub fn run_sweep_with_threads(
    cfg: &SimConfig,
    variable: SweepVariable,
    grid: &[f64],
    mode: SweepMode,
    threads: usize,
) -> Result<Vec<CurvePoint>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| run_sweep(cfg, variable, grid, mode))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::Profile;

    fn quick() -> SimConfig {
        let mut cfg = SimConfig::profile(Profile::Desk);
        cfg.trials = 40;
        cfg
    }

    #[test]
    fn single_point_equals_direct_run() {
        let cfg = quick();
        let p = &run_sweep(&cfg, SweepVariable::SnrP, &[cfg.frame.snr_p_db], SweepMode::Nmse).unwrap()[0];
        let setup = TrialSetup::new(&cfg).unwrap();
        let (mut e, mut h) = (0.0, 0.0);
        for t in 0..cfg.trials {
            let r = run_trial(&setup, cfg.seed, t, false).unwrap();
            e += r.error_energy;
            h += r.channel_energy;
        }
        assert_eq!(p.nmse_mc, e / h);
        assert_eq!(p.trials, 40);
        assert!(p.ber_mc.is_none());
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let cfg = quick();
        let a = run_sweep_with_threads(&cfg, SweepVariable::SnrD, &[5.0, 10.0], SweepMode::Ber, 1).unwrap();
        let b = run_sweep_with_threads(&cfg, SweepVariable::SnrD, &[5.0, 10.0], SweepMode::Ber, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn stop_rule_halts_early() {
        let mut cfg = quick();
        cfg.trials = 10_000;
        cfg.stop = Some(super::super::config::StopRule { min_bit_errors: 50, max_bits: 1_000_000, batch: 8 });
        cfg.detection.snr_d_db = 0.0;
        let p = run_point(&cfg, 0.0, SweepMode::Ber).unwrap();
        assert!(p.bit_errors >= 50);
        assert!(p.trials < 100);
        assert_eq!(p.trials % 8, 0);
    }

    #[test]
    fn empty_grid_rejected() {
        assert!(run_sweep(&quick(), SweepVariable::SnrP, &[], SweepMode::Nmse).is_err());
    }

    #[test]
    fn halfwidth() {
        assert!((binomial_halfwidth(100, 10_000) - 1.96 * (0.01f64 * 0.99 / 1e4).sqrt()).abs() < 1e-15);
        assert!(binomial_halfwidth(0, 0).is_nan());
    }

    #[test]
    fn speed_sweep_moves_only_the_channel() {
        let cfg = SimConfig::default();
        let s = SweepVariable::Speed.apply(&cfg, 135.0);
        assert!((s.alpha_max() - 0.2).abs() < 1e-12);
        assert_eq!(s.bem_order().unwrap(), cfg.bem_order().unwrap());
        assert_eq!(s.grid, cfg.grid);
    }
}
