//! Dense complex linear-algebra helpers shared by every module.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use std::f64::consts::PI;

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

/// `e^{-j 2 pi x}`, with `x` reduced modulo one first so large quadratic
/// phases keep full precision.
pub fn phase_cycles(x: f64) -> Complex64 {
    let frac = x - x.floor();
    Complex64::from_polar(1.0, -2.0 * PI * frac)
}

/// Unitary N-point DFT matrix, `F(m, n) = e^{-j 2 pi m n / N} / sqrt(N)`.
pub fn dft_matrix(n: usize) -> CMat {
    let scale = 1.0 / (n as f64).sqrt();
    CMat::from_fn(n, n, |r, c| phase_cycles(((r * c) % n) as f64 / n as f64) * scale)
}

/// Cyclic shift toward increasing index: `out[k] = v[(k - l) mod N]`.
///
/// This is the single shift convention used for delays everywhere in the
/// crate (the permutation `Pi^l`, `circshift(s, l)` and `circshift(A^H, l)`).
pub fn circshift(v: &CVec, l: usize) -> CVec {
    let n = v.len();
    CVec::from_fn(n, |k, _| v[(k + n - l % n) % n])
}

/// Row-wise cyclic shift of a matrix with the same convention as [`circshift`].
pub fn circshift_rows(m: &CMat, l: usize) -> CMat {
    let n = m.nrows();
    CMat::from_fn(n, m.ncols(), |r, c| m[((r + n - l % n) % n, c)])
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

pub fn select_rows(m: &CMat, rows: &[usize]) -> CMat {
    CMat::from_fn(rows.len(), m.ncols(), |r, c| m[(rows[r], c)])
}

pub fn select_entries(v: &CVec, idx: &[usize]) -> CVec {
    CVec::from_fn(idx.len(), |k, _| v[idx[k]])
}

/// `T M T^H` for the row selector `T = [I]_idx`.
pub fn principal_submatrix(m: &CMat, idx: &[usize]) -> CMat {
    CMat::from_fn(idx.len(), idx.len(), |r, c| m[(idx[r], idx[c])])
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn trace_re(m: &CMat) -> f64 {
    m.diagonal().iter().map(|z| z.re).sum()
}

pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()).scale(0.5)
}

/// Eigenvalues of the Hermitian part of `m`, ascending.
pub fn hermitian_eigenvalues(m: &CMat) -> Vec<f64> {
    let mut ev: Vec<f64> = hermitian_part(m).symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Hermitian within `rel_tol * max|m|` and every eigenvalue at least
/// `-rel_tol * max eigenvalue`.
pub fn is_hermitian_psd(m: &CMat, rel_tol: f64) -> bool {
    let scale = max_abs(m).max(f64::MIN_POSITIVE);
    if max_abs_diff(m, &m.adjoint()) > rel_tol * scale {
        return false;
    }
    let ev = hermitian_eigenvalues(m);
    let top = ev.last().copied().unwrap_or(0.0).abs();
    ev.first().is_none_or(|&lo| lo >= -rel_tol * top.max(scale * f64::EPSILON))
}

/// Condition number `lambda_max / lambda_min` of a Hermitian matrix;
/// infinite when the smallest eigenvalue is not positive.
pub fn hermitian_condition(m: &CMat) -> f64 {
    let ev = hermitian_eigenvalues(m);
    match (ev.first(), ev.last()) {
        (Some(&lo), Some(&hi)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}

pub fn frobenius_sq(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

/// A factor `L` with `L L^H = m` for Hermitian PSD `m`, from the
/// eigendecomposition; round-off negative eigenvalues are clipped to zero.
pub fn psd_factor(m: &CMat) -> CMat {
    let eig = hermitian_part(m).symmetric_eigen();
    let mut v = eig.eigenvectors;
    for (j, &lam) in eig.eigenvalues.iter().enumerate() {
        let s = lam.max(0.0).sqrt();
        for z in v.column_mut(j).iter_mut() {
            *z *= s;
        }
    }
    v
}

/// `n` independent `CN(0, 1)` draws.
pub fn complex_normal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CVec {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CVec::from_fn(n, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        Complex64::new(re * s, im * s)
    })
}
