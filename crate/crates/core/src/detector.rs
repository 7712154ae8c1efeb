//! Pilot cancellation, linear MMSE equalization, QAM detection and the
//! SINR-based BER expressions.

use nalgebra::Cholesky;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::{hermitian_part, select_entries, CMat, CVec};
use crate::special::erfc;

/// Diagonal entries of `T` at or above `1 - SATURATION_EPS` give infinite SINR.
pub const SATURATION_EPS: f64 = 1e-12;

/// Largest accepted `|Im T(i,i)|`, relative to `max(1, |Re T(i,i)|)`.
pub const MAX_T_IMAG: f64 = 1e-8;

/// Square Gray-mapped QAM with unit average energy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QamConstellation {
    order: usize,
    bits_per_axis: usize,
    scale: f64,
    points: Vec<Complex64>,
    a_m: f64,
    b_m: f64,
}

fn gray(i: usize) -> usize {
    i ^ (i >> 1)
}

fn gray_inverse(mut g: usize) -> usize {
    let mut i = g;
    while g > 0 {
        g >>= 1;
        i ^= g;
    }
    i
}

impl QamConstellation {
    /// `M`-QAM for `M` a power of four, with the usual nearest-neighbour
    /// constants `a_M = 2 (1 - 1/sqrt(M)) / log2 M`,
    /// `b_M = 3 / (2 (M - 1))` against the per-symbol SINR.
    pub fn new(order: usize) -> Result<Self> {
        let bits = order.trailing_zeros() as usize;
        if order < 4 || !order.is_power_of_two() || !bits.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!("QAM order {order} must be a power of four")));
        }
        let bits_per_axis = bits / 2;
        let side = 1usize << bits_per_axis;
        let scale = (1.5 / (order as f64 - 1.0)).sqrt();
        let level = |i: usize| (2.0 * i as f64 - side as f64 + 1.0) * scale;
        let points = (0..order)
            .map(|label| {
                let i = gray_inverse(label >> bits_per_axis);
                let q = gray_inverse(label & (side - 1));
                Complex64::new(level(i), level(q))
            })
            .collect();
        let a_m = 2.0 * (1.0 - 1.0 / side as f64) / bits as f64;
        let b_m = 1.5 / (order as f64 - 1.0);
        Ok(Self { order, bits_per_axis, scale, points, a_m, b_m })
    }

    pub fn qpsk() -> Self {
        Self::new(4).expect("4 is a power of four")
    }

    pub fn qam16() -> Self {
        Self::new(16).expect("16 is a power of four")
    }

    /// Overrides the BER approximation constants.
    pub fn with_ber_constants(mut self, a_m: f64, b_m: f64) -> Result<Self> {
        if !(a_m > 0.0 && b_m > 0.0 && a_m.is_finite() && b_m.is_finite()) {
            return Err(Error::InvalidParameter(format!("BER constants ({a_m}, {b_m}) must be positive")));
        }
        self.a_m = a_m;
        self.b_m = b_m;
        Ok(self)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn bits_per_symbol(&self) -> usize {
        2 * self.bits_per_axis
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn a_m(&self) -> f64 {
        self.a_m
    }

    pub fn b_m(&self) -> f64 {
        self.b_m
    }

    /// Symbol for a label whose bits are read most significant first.
    pub fn map(&self, label: usize) -> Complex64 {
        self.points[label]
    }

    /// Maps a bit slice (`len` a multiple of the bits per symbol).
    pub fn map_bits(&self, bits: &[u8]) -> Result<Vec<Complex64>> {
        let k = self.bits_per_symbol();
        if !bits.len().is_multiple_of(k) {
            return Err(Error::DimensionMismatch { expected: bits.len().div_ceil(k) * k, actual: bits.len() });
        }
        Ok(bits.chunks(k).map(|c| self.map(c.iter().fold(0, |acc, &b| (acc << 1) | b as usize))).collect())
    }

    fn axis_index(&self, v: f64) -> usize {
        let side = 1usize << self.bits_per_axis;
        let i = ((v / self.scale + side as f64 - 1.0) / 2.0).round();
        i.clamp(0.0, side as f64 - 1.0) as usize
    }

    /// Nearest-point label.
    pub fn demap(&self, z: Complex64) -> usize {
        (gray(self.axis_index(z.re)) << self.bits_per_axis) | gray(self.axis_index(z.im))
    }

    /// Appends the bits of `label`, most significant first.
    pub fn push_bits(&self, label: usize, out: &mut Vec<u8>) {
        let k = self.bits_per_symbol();
        out.extend((0..k).rev().map(|b| ((label >> b) & 1) as u8));
    }
}

/// `y_hat = y - H_eff_hat x_p`.
pub fn cancel_pilot(y: &CVec, h_eff_hat: &CMat, x_p: &CVec) -> Result<CVec> {
    check_len(h_eff_hat.nrows(), y.len())?;
    check_len(h_eff_hat.ncols(), x_p.len())?;
    Ok(y - h_eff_hat * x_p)
}

/// `G = R_xd H^H (H R_xd H^H + E + R_n)^{-1}` with `E` the estimation-error
/// term and `R_n = R_z + sigma^2 I`.
pub fn mmse_equalizer(h_eff_hat: &CMat, r_xd: &CMat, error_term: &CMat, r_n: &CMat) -> Result<CMat> {
    let n = h_eff_hat.nrows();
    for m in [r_xd, error_term, r_n] {
        if m.nrows() != n || m.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: m.nrows() });
        }
    }
    let cross = h_eff_hat * r_xd;
    let c = hermitian_part(&(&cross * h_eff_hat.adjoint() + error_term + r_n));
    let chol = Cholesky::new(c).ok_or(Error::NotPositiveDefinite)?;
    // C^{-1} H R_xd = G^H.
    Ok(chol.solve(&cross).adjoint())
}

/// Data rows of the MMSE equalizer and the matching diagonal of `T = G H_eff_hat`.
#[derive(Clone, Debug)]
pub struct DataEqualizer {
    data_indices: Vec<usize>,
    gain: CMat,
    t_diag: Vec<Complex64>,
}

impl DataEqualizer {
    /// Data rows for white data of power `data_power`, i.e.
    /// `R_xd = data_power` on the data indices. `other` is
    /// `E + R_z + sigma^2 I`. Only the `N x N` Cholesky factor is formed.
    pub fn new(h_eff_hat: &CMat, data_indices: &[usize], data_power: f64, other: &CMat) -> Result<Self> {
        let n = h_eff_hat.nrows();
        if other.nrows() != n || other.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: other.nrows() });
        }
        let h_d = CMat::from_fn(n, data_indices.len(), |r, k| h_eff_hat[(r, data_indices[k])]);
        let eps = Complex64::new(data_power, 0.0);
        let c = hermitian_part(&(&h_d * h_d.adjoint() * eps + other));
        let chol = Cholesky::new(c).ok_or(Error::NotPositiveDefinite)?;
        let w = chol.solve(&h_d);
        let gain = w.adjoint() * eps;
        let t_diag = (0..data_indices.len()).map(|k| gain.row(k).transpose().dot(&h_d.column(k))).collect();
        Ok(Self { data_indices: data_indices.to_vec(), gain, t_diag })
    }

    /// Data rows of a full `N x N` equalizer.
    pub fn from_full(g: &CMat, h_eff_hat: &CMat, data_indices: &[usize]) -> Self {
        let gain = CMat::from_fn(data_indices.len(), g.ncols(), |r, c| g[(data_indices[r], c)]);
        let t_diag = data_indices.iter().enumerate().map(|(r, &i)| gain.row(r).transpose().dot(&h_eff_hat.column(i))).collect();
        Self { data_indices: data_indices.to_vec(), gain, t_diag }
    }

    pub fn data_indices(&self) -> &[usize] {
        &self.data_indices
    }

    /// `G` restricted to the data rows.
    pub fn gain(&self) -> &CMat {
        &self.gain
    }

    /// `T(i, i)` for each data index `i`.
    pub fn t_diag(&self) -> &[Complex64] {
        &self.t_diag
    }
}

/// Per-subcarrier SINR; `Saturated` marks `T(i, i)` numerically at one.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Sinr {
    Finite(f64),
    Saturated,
}

impl Sinr {
    pub fn value(self) -> f64 {
        match self {
            Sinr::Finite(v) => v,
            Sinr::Saturated => f64::INFINITY,
        }
    }
}

fn checked_real(t: Complex64) -> Result<f64> {
    if !t.re.is_finite() || t.im.abs() > MAX_T_IMAG * t.re.abs().max(1.0) {
        return Err(Error::GainOutOfRange(t.re));
    }
    if t.re < -SATURATION_EPS {
        return Err(Error::GainOutOfRange(t.re));
    }
    Ok(t.re.max(0.0))
}

/// `zeta_i = T(i,i) / (1 - T(i,i))` using the real part of `T(i,i)`.
pub fn per_subcarrier_sinr(t_diag: &[Complex64]) -> Result<Vec<Sinr>> {
    t_diag
        .iter()
        .map(|&t| {
            let t = checked_real(t)?;
            Ok(if t >= 1.0 - SATURATION_EPS { Sinr::Saturated } else { Sinr::Finite(t / (1.0 - t)) })
        })
        .collect()
}

/// `phi(t) = erfc(sqrt(b t / (1 - t)))` is convex exactly where
/// `4 t^2 - (5 - 2b) t + 1 >= 0` on `(0, 1)`.
pub fn jensen_convex(t: f64, b_m: f64) -> bool {
    4.0 * t * t - (5.0 - 2.0 * b_m) * t + 1.0 >= 0.0
}

/// True when every point lies in one interval on which `phi` is convex,
/// the condition under which the averaged bound is a true lower bound.
pub fn jensen_applies(ts: &[f64], b_m: f64) -> bool {
    let disc = (5.0 - 2.0 * b_m).powi(2) - 16.0;
    if disc <= 0.0 {
        return true;
    }
    let lo = ((5.0 - 2.0 * b_m) - disc.sqrt()) / 8.0;
    let hi = ((5.0 - 2.0 * b_m) + disc.sqrt()) / 8.0;
    ts.iter().all(|&t| t <= lo) || ts.iter().all(|&t| t >= hi)
}

/// Theoretical BER from the diagonal of `T` over the data subcarriers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BerTheory {
    /// `a_M erfc(sqrt(b_M T_bar / (1 - T_bar)))`.
    pub bound: f64,
    /// `mean_i a_M erfc(sqrt(b_M zeta_i))`.
    pub average: f64,
    pub t_bar: f64,
    /// Whether the Jensen step is valid for these diagonal values.
    pub convex: bool,
}

/// Jensen lower bound and per-subcarrier average BER.
pub fn ber_lower_bound(t_diag: &[Complex64], constellation: &QamConstellation) -> Result<BerTheory> {
    if t_diag.is_empty() {
        return Err(Error::InvalidParameter("no data subcarriers".into()));
    }
    let ts: Vec<f64> = t_diag.iter().map(|&t| checked_real(t)).collect::<Result<_>>()?;
    let t_bar = ts.iter().sum::<f64>() / ts.len() as f64;
    if !(t_bar > 0.0 && t_bar < 1.0) {
        return Err(Error::GainOutOfRange(t_bar));
    }
    let (a, b) = (constellation.a_m(), constellation.b_m());
    let bound = a * erfc((b * t_bar / (1.0 - t_bar)).sqrt());
    let average = per_subcarrier_sinr(t_diag)?
        .iter()
        .map(|s| match s {
            Sinr::Finite(z) => a * erfc((b * z).sqrt()),
            Sinr::Saturated => 0.0,
        })
        .sum::<f64>()
        / ts.len() as f64;
    Ok(BerTheory { bound, average, t_bar, convex: jensen_applies(&ts, b) })
}

#[derive(Clone, Debug)]
pub struct DetectionResult {
    /// `x_hat_d = G y_hat` at the data indices.
    pub soft_symbols: Vec<Complex64>,
    /// Decisions on the bias-corrected soft symbols `x_hat_d(i) / T(i, i)`.
    pub labels: Vec<usize>,
    pub hard_bits: Vec<u8>,
    pub sinr: Vec<Sinr>,
    pub ber: BerTheory,
}

/// Equalizes `y_hat`, slices to the nearest point and demaps to bits.
pub fn detect(y_hat: &CVec, equalizer: &DataEqualizer, constellation: &QamConstellation) -> Result<DetectionResult> {
    check_len(equalizer.gain().ncols(), y_hat.len())?;
    let soft = equalizer.gain() * y_hat;
    let sinr = per_subcarrier_sinr(equalizer.t_diag())?;
    let ber = ber_lower_bound(equalizer.t_diag(), constellation)?;
    let mut hard_bits = Vec::with_capacity(soft.len() * constellation.bits_per_symbol());
    let labels: Vec<usize> = soft
        .iter()
        .zip(equalizer.t_diag())
        .map(|(&z, &t)| {
            let unbiased = if t.re > 0.0 { z / t.re } else { z };
            let label = constellation.demap(unbiased);
            constellation.push_bits(label, &mut hard_bits);
            label
        })
        .collect();
    Ok(DetectionResult { soft_symbols: soft.iter().copied().collect(), labels, hard_bits, sinr, ber })
}

/// Bit errors between transmitted and detected bit strings.
pub fn count_bit_errors(sent: &[u8], detected: &[u8]) -> Result<u64> {
    check_len(sent.len(), detected.len())?;
    Ok(sent.iter().zip(detected).filter(|(a, b)| a != b).count() as u64)
}

/// How the equalizer accounts for the unknown channel-estimation error.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorTermModel {
    /// `E[H~ R_x H~^H]` from the estimation-error covariance.
    #[default]
    Expected,
    /// The realized `H~ R_x H~^H` (validation only; needs the true channel).
    Genie,
}

/// Realized `H~ R_x H~^H`.
pub fn genie_error_term(h_tilde_eff: &CMat, r_x: &CMat) -> CMat {
    hermitian_part(&(h_tilde_eff * r_x * h_tilde_eff.adjoint()))
}

/// Soft-symbol energy `E|x_hat(i)|^2 = G_i C G_i^H` with `C` the full
/// received covariance.
pub fn soft_symbol_energy(equalizer: &DataEqualizer, received_cov: &CMat) -> Vec<f64> {
    let g = equalizer.gain();
    (0..g.nrows())
        .map(|r| {
            let row = g.row(r);
            (row * received_cov * row.adjoint())[(0, 0)].re
        })
        .collect()
}

/// Data-symbol entries of a transmit vector.
pub fn data_symbols(x: &CVec, data_indices: &[usize]) -> CVec {
    select_entries(x, data_indices)
}
