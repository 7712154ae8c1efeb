//! CSV curves and JSON provenance sidecars.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::Result;

use super::config::SimConfig;
use super::sweep::{CurvePoint, SweepMode, SweepVariable};

#[derive(Serialize)]
struct CsvRow {
    sweep_var: f64,
    nmse_mc_db: f64,
    nmse_closed_db: f64,
    ber_mc: Option<f64>,
    ber_bound: Option<f64>,
    ber_theory: Option<f64>,
    ci_halfwidth: Option<f64>,
    trials: u64,
}

/// The curve as CSV text; BER columns are empty for estimation-only sweeps.
pub fn curve_csv(points: &[CurvePoint]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for p in points {
        w.serialize(CsvRow {
            sweep_var: p.x,
            nmse_mc_db: p.nmse_mc_db,
            nmse_closed_db: p.nmse_closed_db,
            ber_mc: p.ber_mc,
            ber_bound: p.ber_bound,
            ber_theory: p.ber_theory,
            ci_halfwidth: p.ci_halfwidth,
            trials: p.trials,
        })?;
    }
    let bytes = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

#[derive(Serialize)]
struct Sidecar<'a> {
    sweep_variable: &'a str,
    mode: SweepMode,
    config: &'a SimConfig,
    points: &'a [CurvePoint],
}

/// Path of the JSON sidecar next to a CSV file.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

/// Writes `<out>` as CSV and `<out>.json` with the resolved config and full
/// per-point detail.
pub fn write_curve(out: &Path, cfg: &SimConfig, variable: SweepVariable, mode: SweepMode, points: &[CurvePoint]) -> Result<()> {
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::File::create(out)?.write_all(curve_csv(points)?.as_bytes())?;
    let side = Sidecar { sweep_variable: variable.name(), mode, config: cfg, points };
    fs::write(sidecar_path(out), serde_json::to_string_pretty(&side)?)?;
    Ok(())
}
