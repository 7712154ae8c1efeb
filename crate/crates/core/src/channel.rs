//! Doubly selective multipath channel with Jakes Doppler.
//!
//! A realization is a list of discrete paths `(h_i, l_i, alpha_i)`. The
//! received sample is `r[n] = sum_i h_i e^{-j 2 pi alpha_i n / N} s[n - l_i]`
//! where samples before the frame start come from the chirp-periodic prefix
//! `s[n] = s[n + N] e^{-j 2 pi c1 (N^2 + 2 N n)}`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::{phase_cycles, CMat, CVec};
use crate::special::bessel_j0;
use crate::transforms::AfdmGrid;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelPath {
    pub gain: Complex64,
    /// Integer delay in samples.
    pub delay: usize,
    /// Doppler normalized to the subcarrier spacing; the per-sample
    /// frequency is `alpha / N`.
    pub alpha: f64,
}

/// Statistical description of the multipath channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DopplerProfile {
    alpha_max: f64,
    delays: Vec<usize>,
    path_power: Vec<f64>,
    shared_delays: bool,
}

impl DopplerProfile {
    pub fn new(
        alpha_max: f64,
        delays: Vec<usize>,
        path_power: Vec<f64>,
        shared_delays: bool,
    ) -> Result<Self> {
        if !(alpha_max >= 0.0 && alpha_max.is_finite()) {
            return Err(Error::InvalidParameter(format!("alpha_max = {alpha_max} must be >= 0")));
        }
        if delays.is_empty() || delays.len() != path_power.len() {
            return Err(Error::InvalidParameter(format!(
                "{} delays for {} path powers",
                delays.len(),
                path_power.len()
            )));
        }
        if path_power.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::InvalidParameter("path powers must be non-negative".into()));
        }
        let total: f64 = path_power.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!("path powers sum to {total}, not 1")));
        }
        if !shared_delays {
            let mut sorted = delays.clone();
            sorted.sort_unstable();
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::InvalidParameter(
                    "paths share a delay; enable shared-delay mode".into(),
                ));
            }
        }
        Ok(Self { alpha_max, delays, path_power, shared_delays })
    }

    /// Uniform power-delay profile, `sigma_l^2 = 1/P`.
    pub fn uniform(alpha_max: f64, delays: Vec<usize>, shared_delays: bool) -> Result<Self> {
        let p = delays.len().max(1);
        Self::new(alpha_max, delays, vec![1.0 / p as f64; p], shared_delays)
    }

    pub fn alpha_max(&self) -> f64 {
        self.alpha_max
    }

    pub fn delays(&self) -> &[usize] {
        &self.delays
    }

    pub fn path_power(&self) -> &[f64] {
        &self.path_power
    }

    pub fn num_paths(&self) -> usize {
        self.delays.len()
    }

    pub fn max_delay(&self) -> usize {
        self.delays.iter().copied().max().unwrap_or(0)
    }

    pub fn with_alpha_max(&self, alpha_max: f64) -> Result<Self> {
        Self::new(alpha_max, self.delays.clone(), self.path_power.clone(), self.shared_delays)
    }

    /// Total power per delay tap `l = 0..taps-1`.
    pub fn tap_powers(&self, taps: usize) -> Vec<f64> {
        let mut out = vec![0.0; taps];
        for (&d, &p) in self.delays.iter().zip(&self.path_power) {
            if d < taps {
                out[d] += p;
            }
        }
        out
    }
}

/// `alpha_max cos(theta)`.
pub fn jakes_doppler(alpha_max: f64, theta: f64) -> f64 {
    alpha_max * theta.cos()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization {
    pub paths: Vec<ChannelPath>,
}

/// Draws one realization: `theta_i ~ U[-pi, pi]`, `h_i ~ CN(0, sigma_i^2)`.
pub fn sample_jakes_paths<R: Rng + ?Sized>(profile: &DopplerProfile, rng: &mut R) -> ChannelRealization {
    let paths = profile
        .delays
        .iter()
        .zip(&profile.path_power)
        .map(|(&delay, &power)| {
            let theta = rng.random_range(-PI..PI);
            let scale = (0.5 * power).sqrt();
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            ChannelPath {
                gain: Complex64::new(re * scale, im * scale),
                delay,
                alpha: jakes_doppler(profile.alpha_max, theta),
            }
        })
        .collect();
    ChannelRealization { paths }
}

/// Chirp-periodic prefix phase on row `row` of a path with delay `delay`:
/// `e^{-j 2 pi c1 (N^2 - 2 N (delay - row))}` when the input sample wraps,
/// one otherwise.
pub fn cpp_phase(grid: &AfdmGrid, row: usize, delay: usize) -> Complex64 {
    if row >= delay {
        return Complex64::new(1.0, 0.0);
    }
    let n = grid.n() as f64;
    let back = (delay - row) as f64;
    phase_cycles(grid.c1() * n * n - 2.0 * grid.c1() * n * back)
}

impl ChannelRealization {
    pub fn max_delay(&self) -> usize {
        self.paths.iter().map(|p| p.delay).max().unwrap_or(0)
    }

    /// Per-tap time-varying gains `h_l(n) = H(n, (n - l) mod N)` for
    /// `l = 0..taps-1`, chirp-periodic prefix phase included.
    pub fn tap_gains(&self, grid: &AfdmGrid, taps: usize) -> Result<Vec<CVec>> {
        let n = grid.n();
        let mut out = vec![CVec::zeros(n); taps];
        for path in &self.paths {
            if path.delay >= n {
                return Err(Error::DelayTooLarge { delay: path.delay, n });
            }
            if path.delay >= taps {
                return Err(Error::InvalidParameter(format!(
                    "path delay {} exceeds the modelled maximum {}",
                    path.delay,
                    taps.saturating_sub(1)
                )));
            }
            let tap = &mut out[path.delay];
            for k in 0..n {
                let doppler = phase_cycles(path.alpha * k as f64 / n as f64);
                tap[k] += path.gain * doppler * cpp_phase(grid, k, path.delay);
            }
        }
        Ok(out)
    }

    /// Time-domain channel matrix `H`.
    pub fn time_domain_matrix(&self, grid: &AfdmGrid) -> Result<CMat> {
        build_time_domain_matrix(self, grid)
    }
}

pub fn build_time_domain_matrix(realization: &ChannelRealization, grid: &AfdmGrid) -> Result<CMat> {
    let taps = realization.max_delay() + 1;
    if taps > grid.n() {
        return Err(Error::DelayTooLarge { delay: taps - 1, n: grid.n() });
    }
    Ok(delay_tap_matrix(&realization.tap_gains(grid, taps)?))
}

/// Places tap gains on the cyclic delay diagonals: `H(n, (n - l) mod N) = h_l(n)`.
pub fn delay_tap_matrix(taps: &[CVec]) -> CMat {
    let n = taps.first().map_or(0, |t| t.len());
    let mut h = CMat::zeros(n, n);
    for (l, tap) in taps.iter().enumerate() {
        for k in 0..n {
            h[(k, (k + n - l % n) % n)] += tap[k];
        }
    }
    h
}

/// Reads the delay diagonals back out of a time-domain matrix.
pub fn tap_gains_of(h: &CMat, taps: usize) -> Vec<CVec> {
    let n = h.nrows();
    (0..taps).map(|l| CVec::from_fn(n, |k, _| h[(k, (k + n - l) % n)])).collect()
}

/// Time-domain channel output `r(n) = sum_l h_l(n) s((n - l) mod N)`.
pub fn apply_taps(taps: &[CVec], s: &CVec) -> Result<CVec> {
    let n = s.len();
    let mut r = CVec::zeros(n);
    for (l, tap) in taps.iter().enumerate() {
        check_len(n, tap.len())?;
        for k in 0..n {
            r[k] += tap[k] * s[(k + n - l % n) % n];
        }
    }
    Ok(r)
}

/// `A H A^H x` evaluated through the taps without forming any N x N matrix.
pub fn effective_response(grid: &AfdmGrid, taps: &[CVec], x: &CVec) -> Result<CVec> {
    let s = grid.idaft(x)?;
    grid.daft(&apply_taps(taps, &s)?)
}

/// Effective DAFT-domain channel `A H A^H`.
pub fn build_effective_matrix(h: &CMat, grid: &AfdmGrid) -> Result<CMat> {
    if h.nrows() != grid.n() || h.ncols() != grid.n() {
        return Err(Error::DimensionMismatch { expected: grid.n(), actual: h.nrows() });
    }
    Ok(grid.conjugate(h))
}

/// Jakes autocorrelation `J0(2 pi alpha_max lag / N)` of a unit-power tap.
pub fn jakes_correlation(alpha_max: f64, lag: i64, n: usize) -> f64 {
    bessel_j0(2.0 * PI * alpha_max * lag as f64 / n as f64)
}

/// Per-tap autocorrelation matrices `R_hh,l(n, m) = sigma_l^2 J0(2 pi alpha_max (n - m) / N)`
/// for `l = 0..taps-1`. Taps without a path get the zero matrix.
pub fn channel_autocorrelation(profile: &DopplerProfile, n: usize, taps: usize) -> Vec<CMat> {
    let lags: Vec<f64> = (0..n as i64).map(|d| jakes_correlation(profile.alpha_max, d, n)).collect();
    profile
        .tap_powers(taps)
        .into_iter()
        .map(|power| {
            CMat::from_fn(n, n, |r, c| Complex64::new(power * lags[r.abs_diff(c)], 0.0))
        })
        .collect()
}
