//! Embedded two-pilot frame: pilot placement, guards, data indices and the
//! observation window used by the estimator.
//!
//! Layout (zero-based): `0..Q_B` null, pilot at `Q_B`, `Q_B+1..=2Q_B` null,
//! pilot at `2Q_B+1`, `2Q_B+2..=3Q_B+1` null, the rest data.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::{select_entries, CMat, CVec};
use crate::transforms::AfdmGrid;

/// Pilots per frame. Fixed by the layout; not a tunable.
pub const PILOT_COUNT: usize = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PilotFrame {
    n: usize,
    bem_order: usize,
    max_delay: usize,
    q_guard: usize,
    pilot_positions: [usize; PILOT_COUNT],
    pilot_values: [Complex64; PILOT_COUNT],
    guard_indices: Vec<usize>,
    data_indices: Vec<usize>,
    obs_indices: Vec<usize>,
}

/// Transmit vector and its pilot / data split, `x = x_p + x_d`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddedFrame {
    pub x: CVec,
    pub x_p: CVec,
    pub x_d: CVec,
}

/// Builds the frame for BEM order `bem_order` and maximum delay `max_delay`.
///
/// `Q_B = Q + 2 N c1 l_max`; requires `2 N c1` to be an integer, `Q` even and
/// `3 Q_B + 2 < N`.
pub fn design_pilot_frame(grid: &AfdmGrid, bem_order: usize, max_delay: usize, pilot_power: f64) -> Result<PilotFrame> {
    let n = grid.n();
    if !bem_order.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!("BEM order {bem_order} must be even")));
    }
    if !(pilot_power >= 0.0) || !pilot_power.is_finite() {
        return Err(Error::InvalidParameter(format!("pilot power {pilot_power} must be finite and >= 0")));
    }
    let shift = grid.delay_bin_shift().ok_or_else(|| {
        Error::InvalidParameter(format!("2 N c1 = {} is not an integer", 2.0 * n as f64 * grid.c1()))
    })?;
    let q_guard = bem_order + shift * max_delay;
    let required = 3 * q_guard + 3;
    if required > n {
        return Err(Error::FrameTooSmall { required, n });
    }
    let amplitude = Complex64::new(pilot_power.sqrt(), 0.0);
    let pilot_positions = [q_guard, 2 * q_guard + 1];
    let guard_indices = (0..q_guard).chain(q_guard + 1..=2 * q_guard).chain(2 * q_guard + 2..=3 * q_guard + 1).collect();
    let data_indices = (3 * q_guard + 2..n).collect();
    let half = bem_order / 2;
    let obs_indices = (half..=2 * q_guard + half + 1).collect();
    Ok(PilotFrame {
        n,
        bem_order,
        max_delay,
        q_guard,
        pilot_positions,
        pilot_values: [amplitude; PILOT_COUNT],
        guard_indices,
        data_indices,
        obs_indices,
    })
}

impl PilotFrame {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bem_order(&self) -> usize {
        self.bem_order
    }

    pub fn max_delay(&self) -> usize {
        self.max_delay
    }

    /// `Q_B`.
    pub fn q_guard(&self) -> usize {
        self.q_guard
    }

    pub fn pilot_positions(&self) -> [usize; PILOT_COUNT] {
        self.pilot_positions
    }

    pub fn pilot_values(&self) -> [Complex64; PILOT_COUNT] {
        self.pilot_values
    }

    pub fn guard_indices(&self) -> &[usize] {
        &self.guard_indices
    }

    pub fn data_indices(&self) -> &[usize] {
        &self.data_indices
    }

    /// `ind_p`, the rows kept by `T_p`.
    pub fn obs_indices(&self) -> &[usize] {
        &self.obs_indices
    }

    /// Pilot-only transmit vector `x_p`.
    pub fn pilot_vector(&self) -> CVec {
        let mut x = CVec::zeros(self.n);
        for (&pos, &val) in self.pilot_positions.iter().zip(&self.pilot_values) {
            x[pos] = val;
        }
        x
    }

    /// Same layout with every pilot set to `sqrt(power)`.
    pub fn with_pilot_power(&self, power: f64) -> Result<Self> {
        if !(power >= 0.0) || !power.is_finite() {
            return Err(Error::InvalidParameter(format!("pilot power {power} must be finite and >= 0")));
        }
        let mut out = self.clone();
        out.pilot_values = [Complex64::new(power.sqrt(), 0.0); PILOT_COUNT];
        Ok(out)
    }

    /// Selector `T_p = [I_N]_{ind_p}`.
    pub fn selector_matrix(&self) -> CMat {
        let mut t = CMat::zeros(self.obs_indices.len(), self.n);
        for (r, &c) in self.obs_indices.iter().enumerate() {
            t[(r, c)] = Complex64::new(1.0, 0.0);
        }
        t
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Places the pilots and `data_symbols` (in data-index order) into a frame.
pub fn embed(frame: &PilotFrame, data_symbols: &[Complex64]) -> Result<EmbeddedFrame> {
    check_len(frame.data_indices.len(), data_symbols.len())?;
    let x_p = frame.pilot_vector();
    let mut x_d = CVec::zeros(frame.n);
    for (&k, &s) in frame.data_indices.iter().zip(data_symbols) {
        x_d[k] = s;
    }
    Ok(EmbeddedFrame { x: &x_p + &x_d, x_p, x_d })
}

/// `y_p = T_p y`.
pub fn extract_observation(frame: &PilotFrame, y: &CVec) -> Result<CVec> {
    check_len(frame.n, y.len())?;
    Ok(select_entries(y, &frame.obs_indices))
}
