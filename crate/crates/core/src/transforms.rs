//! Chirp diagonals and the discrete affine Fourier transform.
//!
//! The DAFT matrix is `A = Lambda_{c2} F Lambda_{c1}` with the unitary DFT
//! `F` and `Lambda_c = diag(e^{-j 2 pi c n^2})`. The dense matrix is the
//! reference; [`AfdmGrid::apply_daft`] and [`AfdmGrid::conjugate`] use an
//! FFT-backed path for whole matrices.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{check_len, Error, Result};
use crate::linalg::{phase_cycles, CMat, CVec};

/// Default second chirp rate, well below `1/(2N)` for every desk-scale `N`.
pub const DEFAULT_C2: f64 = 1e-5;

/// `diag(e^{-j 2 pi c k^2})`, `k = 0..n-1`.
pub fn chirp_diag(c: f64, n: usize) -> CMat {
    CMat::from_diagonal(&chirp_vector(c, n))
}

fn chirp_vector(c: f64, n: usize) -> CVec {
    CVec::from_fn(n, |k, _| quadratic_phase(c, k))
}

fn quadratic_phase(c: f64, k: usize) -> Complex64 {
    // c k^2 = floor(c k) k + frac(c k) k; the first term is an integer.
    let k = k as f64;
    phase_cycles((c * k).fract() * k)
}

/// Dense `Lambda_{c2} F Lambda_{c1}` for an `n`-point grid.
pub fn build_daft_matrix(n: usize, c1: f64, c2: f64) -> CMat {
    let scale = 1.0 / (n as f64).sqrt();
    let l1 = chirp_vector(c1, n);
    let l2 = chirp_vector(c2, n);
    CMat::from_fn(n, n, |m, k| {
        l2[m] * phase_cycles(((m * k) % n) as f64 / n as f64) * l1[k] * scale
    })
}

/// Doppler design the first chirp rate was derived from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ChirpDesign {
    /// Maximum integer Doppler, normalized to the subcarrier spacing.
    pub alpha_max: u32,
    /// Guard that absorbs fractional Doppler spreading.
    pub k_nu: u32,
}

impl ChirpDesign {
    /// `c1 = (2 (alpha_max + k_nu) + 1) / (2N)`.
    pub fn c1(&self, n: usize) -> f64 {
        (2 * (self.alpha_max + self.k_nu) + 1) as f64 / (2 * n) as f64
    }
}

/// Modulation geometry: frame length, chirp rates and the DAFT matrix.
///
/// Immutable after construction; cloning shares the FFT plans.
#[derive(Clone)]
pub struct AfdmGrid {
    n: usize,
    c1: f64,
    c2: f64,
    design: Option<ChirpDesign>,
    daft: CMat,
    chirp1: CVec,
    chirp2: CVec,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for AfdmGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AfdmGrid")
            .field("n", &self.n)
            .field("c1", &self.c1)
            .field("c2", &self.c2)
            .field("design", &self.design)
            .finish_non_exhaustive()
    }
}

impl AfdmGrid {
    pub fn new(n: usize, c1: f64, c2: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("N must be at least 1".into()));
        }
        if !c1.is_finite() || !c2.is_finite() {
            return Err(Error::InvalidParameter("chirp rates must be finite".into()));
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            n,
            c1,
            c2,
            design: None,
            daft: build_daft_matrix(n, c1, c2),
            chirp1: chirp_vector(c1, n),
            chirp2: chirp_vector(c2, n),
            fft: planner.plan_fft_forward(n),
            ifft: planner.plan_fft_inverse(n),
        })
    }

    /// Grid with `c1` chosen from the Doppler design.
    pub fn recommended(n: usize, alpha_max: u32, k_nu: u32, c2: f64) -> Result<Self> {
        let design = ChirpDesign { alpha_max, k_nu };
        let mut grid = Self::new(n, design.c1(n), c2)?;
        grid.design = Some(design);
        Ok(grid)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn c1(&self) -> f64 {
        self.c1
    }

    pub fn c2(&self) -> f64 {
        self.c2
    }

    pub fn design(&self) -> Option<ChirpDesign> {
        self.design
    }

    pub fn daft_matrix(&self) -> &CMat {
        &self.daft
    }

    /// `2 N c1`, the DAFT-domain shift produced by one sample of delay.
    /// `None` unless it is an integer.
    pub fn delay_bin_shift(&self) -> Option<usize> {
        let v = 2.0 * self.n as f64 * self.c1;
        let r = v.round();
        ((v - r).abs() < 1e-9 && r >= 0.0).then_some(r as usize)
    }

    /// IDAFT: `s = A^H x`.
    pub fn idaft(&self, x: &CVec) -> Result<CVec> {
        check_len(self.n, x.len())?;
        let mut out = x.clone();
        self.inverse_in_place(out.as_mut_slice());
        Ok(out)
    }

    /// DAFT: `y = A s`.
    pub fn daft(&self, s: &CVec) -> Result<CVec> {
        check_len(self.n, s.len())?;
        let mut out = s.clone();
        self.forward_in_place(out.as_mut_slice());
        Ok(out)
    }

    /// `A M`, column by column through the FFT.
    pub fn apply_daft(&self, m: &CMat) -> CMat {
        assert_eq!(m.nrows(), self.n, "row count must equal N");
        let mut out = m.clone();
        for col in out.as_mut_slice().chunks_exact_mut(self.n) {
            self.forward_in_place(col);
        }
        out
    }

    /// `A^H M`, column by column through the inverse FFT.
    pub fn apply_idaft(&self, m: &CMat) -> CMat {
        assert_eq!(m.nrows(), self.n, "row count must equal N");
        let mut out = m.clone();
        for col in out.as_mut_slice().chunks_exact_mut(self.n) {
            self.inverse_in_place(col);
        }
        out
    }

    fn forward_in_place(&self, col: &mut [Complex64]) {
        let scale = 1.0 / (self.n as f64).sqrt();
        for (z, c) in col.iter_mut().zip(self.chirp1.iter()) {
            *z *= c;
        }
        self.fft.process(col);
        for (z, c) in col.iter_mut().zip(self.chirp2.iter()) {
            *z *= c * scale;
        }
    }

    fn inverse_in_place(&self, col: &mut [Complex64]) {
        let scale = 1.0 / (self.n as f64).sqrt();
        for (z, c) in col.iter_mut().zip(self.chirp2.iter()) {
            *z *= c.conj();
        }
        self.ifft.process(col);
        for (z, c) in col.iter_mut().zip(self.chirp1.iter()) {
            *z *= c.conj() * scale;
        }
    }

    /// `A M A^H` for a square `M` of size N.
    pub fn conjugate(&self, m: &CMat) -> CMat {
        let am = self.apply_daft(m);
        self.apply_daft(&am.adjoint()).adjoint()
    }
}
