//! Generalized complex-exponential basis expansion model (GCE-BEM).
//!
//! Each delay tap is approximated as `h_l(n) = sum_q b_q(n) g_q(l)` with
//! `b_q(n) = e^{j 2 pi (q - ceil(Q/2)) n / (R N)}`. Coefficients are stored
//! block-wise, `g = [g_0; g_1; ...; g_Q]` with `g_q` of length `L + 1`, so the
//! entry for basis `q` and tap `l` sits at `q (L + 1) + l`.
//!
//! Tap vectors `h = [h(0, 0..=L), h(1, 0..=L), ...]` (time major, tap minor)
//! are related to `g` by `h = Theta g`, `Theta = B kron I_{L+1}`.

use nalgebra::linalg::QR;
use num_complex::Complex64;

use crate::channel::delay_tap_matrix;
use crate::error::{check_len, Error, Result};
use crate::linalg::{dft_matrix, kron, phase_cycles, CMat, CVec};

/// Smallest even order satisfying `Q >= 2 ceil(R alpha_max)`, where
/// `alpha_max = f_max N T_s` is the normalized maximum Doppler.
pub fn min_bem_order(alpha_max: f64, oversampling: usize) -> Result<usize> {
    if !(alpha_max >= 0.0) || !alpha_max.is_finite() {
        return Err(Error::InvalidParameter(format!("normalized Doppler {alpha_max} must be >= 0")));
    }
    if oversampling == 0 {
        return Err(Error::InvalidParameter("oversampling must be positive".into()));
    }
    // Guard against 2.0000000001-style products from decimal inputs.
    let product = oversampling as f64 * alpha_max;
    let rounded = product.round();
    let ceil = if (product - rounded).abs() < 1e-9 { rounded } else { product.ceil() };
    Ok(2 * ceil as usize)
}

#[derive(Clone, Debug)]
pub struct BemBasis {
    order: usize,
    oversampling: usize,
    matrix: CMat,
    q_factor: CMat,
    r_factor: CMat,
    pinv: CMat,
    projector: CMat,
}

impl BemBasis {
    pub fn new(n: usize, order: usize, oversampling: usize) -> Result<Self> {
        if n == 0 || oversampling == 0 {
            return Err(Error::InvalidParameter("N and R must be positive".into()));
        }
        if order >= oversampling * n {
            return Err(Error::AliasedBasis { order, limit: oversampling * n });
        }
        let period = oversampling * n;
        let centre = order.div_ceil(2) as i64;
        let matrix = CMat::from_fn(n, order + 1, |k, q| {
            let step = (q as i64 - centre) * k as i64;
            // e^{+j 2 pi step / (R N)}
            phase_cycles(-(step.rem_euclid(period as i64) as f64) / period as f64)
        });
        let qr = QR::new(matrix.clone());
        let q_factor = qr.q();
        let r_factor = qr.r();
        let pinv = r_factor
            .solve_upper_triangular(&q_factor.adjoint())
            .ok_or_else(|| Error::InvalidParameter("rank-deficient BEM basis".into()))?;
        let projector = CMat::identity(n, n) - &q_factor * q_factor.adjoint();
        Ok(Self { order, oversampling, matrix, q_factor, r_factor, pinv, projector })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn num_basis(&self) -> usize {
        self.order + 1
    }

    pub fn oversampling(&self) -> usize {
        self.oversampling
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    /// `B`, one basis function per column.
    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn column(&self, q: usize) -> CVec {
        self.matrix.column(q).into()
    }

    /// Frequency of basis `q` in cycles per sample.
    pub fn frequency(&self, q: usize) -> f64 {
        (q as f64 - self.order.div_ceil(2) as f64) / (self.oversampling * self.n()) as f64
    }

    /// `(B^H B)^{-1} B^H`.
    pub fn pseudo_inverse(&self) -> &CMat {
        &self.pinv
    }

    /// `Phi = I - B (B^H B)^{-1} B^H`.
    pub fn projector(&self) -> &CMat {
        &self.projector
    }

    /// Least-squares coefficients of one tap vector.
    pub fn fit(&self, h: &CVec) -> Result<CVec> {
        check_len(self.n(), h.len())?;
        let rhs = self.q_factor.ad_mul(h);
        self.r_factor
            .solve_upper_triangular(&rhs)
            .ok_or_else(|| Error::InvalidParameter("rank-deficient BEM basis".into()))
    }

    /// Model error `Phi h`.
    pub fn residual(&self, h: &CVec) -> CVec {
        &self.projector * h
    }

    /// `Theta = B kron I_{taps}`.
    pub fn theta(&self, taps: usize) -> CMat {
        kron(&self.matrix, &CMat::identity(taps, taps))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BemCoefficients {
    num_basis: usize,
    taps: usize,
    g: CVec,
}

impl BemCoefficients {
    pub fn new(num_basis: usize, taps: usize, g: CVec) -> Result<Self> {
        check_len(num_basis * taps, g.len())?;
        if g.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidParameter("non-finite BEM coefficient".into()));
        }
        Ok(Self { num_basis, taps, g })
    }

    pub fn num_basis(&self) -> usize {
        self.num_basis
    }

    pub fn taps(&self) -> usize {
        self.taps
    }

    pub fn as_vector(&self) -> &CVec {
        &self.g
    }

    pub fn get(&self, q: usize, l: usize) -> Complex64 {
        self.g[q * self.taps + l]
    }

    /// `g_q`, the coefficients of basis `q` across taps.
    pub fn block(&self, q: usize) -> CVec {
        self.g.rows(q * self.taps, self.taps).into()
    }

    /// Coefficients of tap `l` across bases.
    pub fn tap(&self, l: usize) -> CVec {
        CVec::from_fn(self.num_basis, |q, _| self.get(q, l))
    }
}

/// Per-tap least-squares projection onto the basis.
pub fn fit_coefficients(tap_gains: &[CVec], basis: &BemBasis) -> Result<BemCoefficients> {
    let taps = tap_gains.len();
    let mut g = CVec::zeros(basis.num_basis() * taps);
    for (l, h) in tap_gains.iter().enumerate() {
        let c = basis.fit(h)?;
        for q in 0..basis.num_basis() {
            g[q * taps + l] = c[q];
        }
    }
    BemCoefficients::new(basis.num_basis(), taps, g)
}

/// `h_l = B g(., l)` for every tap.
pub fn reconstruct_taps(coeffs: &BemCoefficients, basis: &BemBasis) -> Vec<CVec> {
    (0..coeffs.taps()).map(|l| basis.matrix() * coeffs.tap(l)).collect()
}

/// Time-domain BEM channel, `H(n, (n - l) mod N) = sum_q b_q(n) g_q(l)`.
pub fn reconstruct_channel(coeffs: &BemCoefficients, basis: &BemBasis) -> CMat {
    delay_tap_matrix(&reconstruct_taps(coeffs, basis))
}

/// The same channel written as `sum_q diag(b_q) F^H diag(F_L g_q) F`, with
/// `F` unitary and `F_L` the first `L + 1` columns of `sqrt(N) F`.
pub fn reconstruct_channel_spectral(coeffs: &BemCoefficients, basis: &BemBasis) -> CMat {
    let n = basis.n();
    let f = dft_matrix(n);
    let f_l = f.columns(0, coeffs.taps()) * Complex64::new((n as f64).sqrt(), 0.0);
    let mut h = CMat::zeros(n, n);
    for q in 0..basis.num_basis() {
        let spectrum = &f_l * coeffs.block(q);
        let circulant = f.adjoint() * CMat::from_diagonal(&spectrum) * &f;
        h += CMat::from_diagonal(&basis.column(q)) * circulant;
    }
    h
}

/// `R_mod,l = Phi R_hh,l Phi^H`.
pub fn model_error_covariance(basis: &BemBasis, r_hh_l: &CMat) -> CMat {
    let phi = basis.projector();
    phi * r_hh_l * phi.adjoint()
}
